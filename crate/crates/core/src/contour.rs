//! Argument-principle winding numbers and contour integrals along polygons
//! in the complex plane.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad;

/// Largest phase change accepted between adjacent samples before the
/// segment is subdivided.
const MAX_STEP_ARG: f64 = 0.3;
const MAX_DEPTH: u32 = 50;

/// Winding number of `f` around 0 along the closed polygon `vertices`
/// (last vertex joins the first), by continuous arg tracking.
///
/// Each edge starts with `samples` points; a step is bisected while the
/// phase of `f` changes by more than 0.3 rad. Fails if `f` vanishes or
/// errors on the path, or if the accumulated phase is not within 0.1 of a
/// multiple of `2 pi`.
pub fn winding_number<F>(f: F, vertices: &[Complex64], samples: usize) -> Result<i64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let total = total_phase(&f, vertices, samples)?;
    let turns = total / (2.0 * PI);
    let rounded = turns.round();
    if (turns - rounded).abs() > 0.1 {
        return Err(Error::domain(
            "contour",
            format!("phase change {total} is not a whole number of turns"),
        ));
    }
    Ok(rounded as i64)
}

/// Total phase change of `f` along the closed polygon.
pub fn total_phase<F>(f: &F, vertices: &[Complex64], samples: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if vertices.len() < 3 {
        return Err(Error::domain("contour", "a closed contour needs 3 vertices"));
    }
    let samples = samples.max(1);
    let mut total = 0.0;
    for i in 0..vertices.len() {
        let a = vertices[i];
        let b = vertices[(i + 1) % vertices.len()];
        let mut prev_z = a;
        let mut prev_f = nonzero(f, a)?;
        for j in 1..=samples {
            let z = a + (b - a) * (j as f64 / samples as f64);
            let fz = nonzero(f, z)?;
            total += phase_step(f, prev_z, prev_f, z, fz, 0)?;
            prev_z = z;
            prev_f = fz;
        }
    }
    Ok(total)
}

fn nonzero<F>(f: &F, z: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let v = f(z)?;
    if v == Complex64::new(0.0, 0.0) || !v.is_finite() {
        return Err(Error::domain(
            "contour",
            format!("function is zero or non-finite on the contour at {z}"),
        ));
    }
    Ok(v)
}

fn phase_step<F>(f: &F, za: Complex64, fa: Complex64, zb: Complex64, fb: Complex64, depth: u32) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let step = (fb / fa).arg();
    if step.abs() <= MAX_STEP_ARG {
        return Ok(step);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::domain(
            "contour",
            format!("phase could not be resolved between {za} and {zb}"),
        ));
    }
    let zm = 0.5 * (za + zb);
    let fm = nonzero(f, zm)?;
    Ok(phase_step(f, za, fa, zm, fm, depth + 1)? + phase_step(f, zm, fm, zb, fb, depth + 1)?)
}

/// `int f(z) dz` along the straight segment from `a` to `b` with adaptive
/// Gauss-Kronrod (at most 20000 panels); returns the value and error
/// estimate.
pub fn segment_integral<F>(
    f: F,
    a: Complex64,
    b: Complex64,
    panels: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> (Complex64, f64)
where
    F: Fn(Complex64) -> Complex64,
{
    let dz = b - a;
    let r = quad::integrate(|s| f(a + dz * s) * dz, 0.0, 1.0, panels, abs_tol, rel_tol, 20_000);
    (r.value, r.error)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square(r: f64) -> Vec<Complex64> {
        vec![c(-r, -r), c(r, -r), c(r, r), c(-r, r)]
    }

    #[test]
    fn counts_zeros_minus_poles() {
        let f = |z: Complex64| Ok((z - c(0.1, 0.2)) * (z + c(0.3, 0.0)).powi(2) / (z - c(5.0, 0.0)));
        assert_eq!(winding_number(f, &square(1.0), 8).unwrap(), 3);
        assert_eq!(winding_number(f, &square(10.0), 8).unwrap(), 2);
        let g = |z: Complex64| Ok(z.powi(-2));
        assert_eq!(winding_number(g, &square(1.0), 4).unwrap(), -2);
    }

    #[test]
    fn zero_on_path_is_reported() {
        let f = |z: Complex64| Ok(z - c(1.0, 0.0));
        assert!(winding_number(f, &square(1.0), 4).is_err());
    }

    #[test]
    fn segment_integral_of_inverse_around_square() {
        let v = square(1.0);
        let mut total = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            total += segment_integral(|z| z.inv(), v[i], v[(i + 1) % 4], 2, 1e-13, 0.0).0;
        }
        assert!((total - c(0.0, 2.0 * PI)).norm() < 1e-12);
    }
}
