//! Free resolvent kernel of the hyperbolic Laplacian and its automorphic
//! sums over an orbit length spectrum.
//!
//! With `s = 1/2 + i rho` and `Im rho < -1/2`,
//!
//! ```text
//! G(rho, d) = -1/(2 pi sqrt 2) int_d^inf e^{-i rho t} / sqrt(cosh t - cosh d) dt.
//! ```

use std::f64::consts::{LN_2, PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orbits::{orbit_tail_bound, OrbitSpectrum};
use crate::quad::{self, CompensatedSum};

/// Required distance of `Im rho` below the convergence abscissa `-1/2`.
pub const IM_MARGIN: f64 = 1e-3;

/// Slack added to the exponential growth rate of the orbit counting
/// function when bounding truncated sums.
pub const TAIL_GROWTH_SLACK: f64 = 0.05;

/// Prefactor `-1/(2 pi sqrt 2)` of the integral representation.
pub const GREEN_PREFACTOR: f64 = -1.0 / (2.0 * PI * SQRT_2);

// log of the relative size below which the integrand is dropped (~1e-17)
const CUTOFF_LOG: f64 = 39.0;

// largest rotation of the integration ray
const MAX_ROTATION: f64 = 1.3;

/// `ln sinh z` for `Re z > 0`, continuous along rays leaving the real axis.
fn ln_sinh(z: Complex64) -> Complex64 {
    if z.re > 0.35 {
        z - LN_2 + (1.0 - (-2.0 * z).exp()).ln()
    } else {
        z.sinh().ln()
    }
}

/// `ln(sinh(w) / w)` for `Re w >= 0`, accurate as `w -> 0`.
fn ln_sinhc(w: Complex64) -> Complex64 {
    let n = w.norm();
    if n < 1e-4 {
        w * w / 6.0
    } else if n < 1.0 {
        (w.sinh() / w).ln()
    } else {
        ln_sinh(w) - w.ln()
    }
}

/// The representation integrated along the ray `t = d + u^2 e^{-i theta}`:
/// `2 e^{-i theta/2} exp(-i rho t - (ln sinh(d + tau/2) + ln sinhc(tau/2))/2)`
/// with `tau = u^2 e^{-i theta}`, smooth at `u = 0`.
#[derive(Clone, Copy)]
struct RayIntegrand {
    rho: Complex64,
    d: f64,
    dir: Complex64,
    half_dir: Complex64,
}

impl RayIntegrand {
    /// Steepest-descent direction of `e^{-i rho t}` for `Re rho >= 0`.
    fn new(rho: Complex64, d: f64) -> Self {
        let theta = (rho.re / -rho.im).atan().clamp(0.0, MAX_ROTATION);
        Self {
            rho,
            d,
            dir: Complex64::from_polar(1.0, -theta),
            half_dir: Complex64::from_polar(1.0, -0.5 * theta),
        }
    }

    fn eval(&self, u: f64) -> Complex64 {
        let tau = self.dir * (u * u);
        let t = self.d + tau;
        let expo = -Complex64::i() * self.rho * t - 0.5 * (ln_sinh(self.d + 0.5 * tau) + ln_sinhc(0.5 * tau));
        2.0 * self.half_dir * expo.exp()
    }

    /// Upper limit in `u` beyond which the integrand is below `e^{-39}` of
    /// its value at `u = 0`.
    fn cutoff(&self) -> f64 {
        let start = self.eval(0.0).norm().ln();
        let mut u: f64 = 0.5;
        while self.eval(u).norm().ln() > start - CUTOFF_LOG {
            u *= 1.25;
        }
        u
    }
}

fn check_domain(rho: Complex64, d: f64) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain(
            "green",
            format!("distance d = {d} must be positive (coincident points are regularized in S)"),
        ));
    }
    if !(rho.im <= -0.5 - IM_MARGIN) || !rho.re.is_finite() {
        return Err(Error::domain(
            "green",
            format!(
                "Im rho = {} must be <= -1/2 - {IM_MARGIN} for the integral representation",
                rho.im
            ),
        ));
    }
    Ok(())
}

/// The free Green function with its quadrature error estimate.
///
/// For `Re rho >= 0` the `t` ray is rotated to `arg = -theta`,
/// `tan theta = Re rho / (-Im rho)` (capped at 1.3), which removes the
/// oscillation of `e^{-i rho t}`; the arc at infinity vanishes and no zero of
/// `cosh t - cosh d` is crossed. `Re rho < 0` follows from
/// `G(-conj rho) = conj G(rho)`.
pub fn free_green_with_error(rho: Complex64, d: f64) -> Result<(Complex64, f64)> {
    check_domain(rho, d)?;
    if rho.re < 0.0 {
        let (v, e) = free_green_with_error(-rho.conj(), d)?;
        return Ok((v.conj(), e));
    }
    let f = RayIntegrand::new(rho, d);
    let upper = f.cutoff();
    let scale = f.eval(0.0).norm();
    let r = quad::integrate(|u| f.eval(u), 0.0, upper, 4, 1e-14 * scale, 1e-12, 20_000);
    Ok((GREEN_PREFACTOR * r.value, GREEN_PREFACTOR.abs() * r.error))
}

/// `G_{1/2 + i rho}` at hyperbolic distance `d`.
pub fn free_green(rho: Complex64, d: f64) -> Result<Complex64> {
    free_green_with_error(rho, d).map(|(v, _)| v)
}

/// Truncated automorphic sum `sum_l mult(l) G(rho, l)` with the orbit tail
/// bound for `sigma = -Im rho`.
#[derive(Debug, Clone, Copy)]
pub struct GreenSum {
    pub value: Complex64,
    pub tail: f64,
}

/// Sums in ascending length order with compensated accumulation.
pub fn green_sum(spec: &OrbitSpectrum, rho: Complex64) -> Result<GreenSum> {
    if !(rho.im <= -0.5 - IM_MARGIN) {
        return Err(Error::domain(
            "green",
            format!("Re s = {} must exceed 1 for the automorphic sum", 0.5 - rho.im),
        ));
    }
    let terms: Vec<Complex64> = spec
        .lengths
        .par_iter()
        .map(|l| free_green(rho, l.length).map(|g| g * l.mult as f64))
        .collect::<Result<_>>()?;
    let mut sum = CompensatedSum::default();
    for t in terms {
        sum.add(t);
    }
    Ok(GreenSum {
        value: sum.value(),
        tail: orbit_tail_bound(spec, -rho.im, TAIL_GROWTH_SLACK)?,
    })
}

/// `sum_l mult(l) |G(-i sigma, l)|`, the envelope dominating `|green_sum|`
/// on the whole line `Im rho = -sigma`.
pub fn green_envelope(spec: &OrbitSpectrum, sigma: f64) -> Result<f64> {
    let rho = Complex64::new(0.0, -sigma);
    let terms: Vec<f64> = spec
        .lengths
        .par_iter()
        .map(|l| free_green(rho, l.length).map(|g| g.norm() * l.mult as f64))
        .collect::<Result<_>>()?;
    Ok(quad::compensated_sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{enumerate_orbit, EnumerationOptions, GroupSpec, OrbitLength};

    fn legendre_q1(x: f64) -> f64 {
        0.5 * x * ((x + 1.0) / (x - 1.0)).ln() - 1.0
    }

    #[test]
    fn matches_legendre_q1_at_s_equal_two() {
        let d = LN_2;
        let g = free_green(Complex64::new(0.0, -1.5), d).unwrap();
        let expected = -legendre_q1(d.cosh()) / (2.0 * PI);
        assert!((g.re - expected).abs() < 1e-12 * expected.abs());
        assert!(g.im.abs() < 1e-14);
        assert!((g.re + 0.0594).abs() < 1e-4);
    }

    #[test]
    fn conjugate_symmetry_and_domain() {
        let rho = Complex64::new(1.7, -0.9);
        let a = free_green(rho, 0.7).unwrap();
        let b = free_green(-rho.conj(), 0.7).unwrap();
        assert!((a - b.conj()).norm() < 1e-13);
        // rotated ray agrees with the unrotated one
        for (x, d) in [(0.4, 0.3), (3.0, 1.1), (25.0, 2.0)] {
            let rho = Complex64::new(x, -1.4);
            let flat = RayIntegrand {
                rho,
                d,
                dir: Complex64::new(1.0, 0.0),
                half_dir: Complex64::new(1.0, 0.0),
            };
            let r = quad::integrate(|u| flat.eval(u), 0.0, flat.cutoff(), 200, 1e-15, 1e-13, 100_000);
            let direct = GREEN_PREFACTOR * r.value;
            let rotated = free_green(rho, d).unwrap();
            assert!(
                (direct - rotated).norm() < 1e-11 * direct.norm(),
                "x = {x}: {direct} vs {rotated}"
            );
        }
        assert!(free_green(Complex64::new(0.0, -0.5), 1.0).is_err());
        assert!(free_green(Complex64::new(0.0, -2.0), 0.0).is_err());
    }

    #[test]
    fn magnitude_decreases_with_distance() {
        let rho = Complex64::new(0.0, -1.2);
        let mut prev = f64::INFINITY;
        for i in 1..30 {
            let v = free_green(rho, 0.2 * i as f64).unwrap().norm();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn sums_and_tails() {
        let rho = Complex64::new(0.3, -2.0);
        let empty = OrbitSpectrum::from_lengths(vec![], 1, 5.0).unwrap();
        let s = green_sum(&empty, rho).unwrap();
        assert_eq!(s.value, Complex64::new(0.0, 0.0));
        let one = OrbitSpectrum::from_lengths(vec![OrbitLength { length: 1.3, mult: 2 }], 1, 2.0).unwrap();
        let s = green_sum(&one, rho).unwrap();
        assert!((s.value - 2.0 * free_green(rho, 1.3).unwrap()).norm() < 1e-15);

        let ell = 1.0;
        let group = GroupSpec::hyperbolic_cyclic(ell);
        let opts = EnumerationOptions::default();
        let short = enumerate_orbit(&group, 10.0 * ell, 1e-8, &opts).unwrap();
        let long = enumerate_orbit(&group, 20.0 * ell, 1e-8, &opts).unwrap();
        let a = green_sum(&short, Complex64::new(0.0, -2.0)).unwrap();
        let b = green_sum(&long, Complex64::new(0.0, -2.0)).unwrap();
        assert!((a.value - b.value).norm() <= a.tail);
        assert!(a.tail > 0.0 && a.tail.is_finite());
    }
}
