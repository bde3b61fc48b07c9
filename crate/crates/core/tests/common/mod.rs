//! Seeded generators and independent reference computations shared by the
//! integration tests. Nothing here calls the library's numerical kernels.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use hyptrace::spectral::{Spectrum, SpectrumEntry};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic spectrum following the Weyl law `lambda_n ~ 4 pi n / area`
/// with jitter, occasional multiplicities and zero weights. Starts with the
/// constant eigenfunction `lambda_0 = 0`, weight `1/area`.
pub fn weyl_spectrum(rng: &mut ChaCha8Rng, count: usize, area: f64, zero_weights: bool) -> Spectrum {
    let mut entries = vec![SpectrumEntry {
        lambda: 0.0,
        mult: 1,
        weight: 1.0 / area,
    }];
    let step = 4.0 * PI / area;
    let mut lambda = 0.0;
    while entries.len() < count {
        lambda += step * rng.gen_range(0.3..1.7);
        let mult = if rng.gen_bool(0.1) { rng.gen_range(2..4) } else { 1 };
        let weight = if zero_weights && rng.gen_bool(0.05) {
            0.0
        } else {
            rng.gen_range(0.2..2.0) / area
        };
        entries.push(SpectrumEntry { lambda, mult, weight });
    }
    Spectrum::new(entries, area).expect("valid synthetic spectrum")
}

/// `S(lambda)` of the finite model written out directly.
pub fn s_direct(inv_alpha: f64, spec: &Spectrum, lambda: f64) -> f64 {
    let mut s = inv_alpha;
    for e in spec.entries() {
        let lj = e.lambda;
        s += e.weight * e.mult as f64 * (1.0 + lj * lambda) / ((lj - lambda) * (lj * lj + 1.0));
    }
    s
}

/// `Q_1(x) = x atanh(1/x) - 1` for `x > 1`; the series
/// `sum_{k >= 1} x^{-2k} / (2k + 1)` for `x >= 1.5` avoids cancellation.
pub fn legendre_q1(x: f64) -> f64 {
    if x < 1.5 {
        return x * (1.0 / x).atanh() - 1.0;
    }
    let q = 1.0 / (x * x);
    let mut term = q;
    let mut sum = 0.0;
    for k in 1..400 {
        sum += term / (2 * k + 1) as f64;
        term *= q;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Green function by the trapezoid rule on the real `u` axis after
/// `t = d + u^2`, with one Richardson step (`h` and `h/2`).
///
/// The integrand is even and analytic in `u`, so the trapezoid rule over
/// `R` converges geometrically; the Richardson difference is returned as
/// an error estimate.
pub fn green_trapezoid(rho: Complex64, d: f64) -> (Complex64, f64) {
    let decay = -rho.im - 0.5;
    assert!(decay > 0.0);
    let u_max = (40.0 / decay).sqrt();
    let f = |u: f64| -> Complex64 {
        let u2 = u * u;
        // cosh(d + u^2) - cosh d = 2 sinh(d + u^2/2) sinh(u^2/2)
        let q = if u2 == 0.0 {
            d.sinh()
        } else {
            2.0 * (d + 0.5 * u2).sinh() * (0.5 * u2).sinh() / u2
        };
        2.0 * (-Complex64::i() * rho * (d + u2)).exp() / q.sqrt()
    };
    let phase_rate = 2.0 * rho.re.abs() * u_max + 1.0;
    let h = (0.25 / phase_rate).min(0.02);
    let trap = |h: f64| {
        let n = (u_max / h).ceil() as usize;
        let mut s = 0.5 * f(0.0);
        for k in 1..=n {
            s += f(k as f64 * h);
        }
        s * h
    };
    let coarse = trap(h);
    let fine = trap(0.5 * h);
    let pref = -1.0 / (2.0 * PI * 2f64.sqrt());
    (pref * fine, (pref * (fine - coarse)).norm())
}

/// Upper-half-plane point with coordinates in a box.
pub fn point(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.gen_range(-3.0..3.0), rng.gen_range(0.05..5.0))
}

/// Brute-force orbit: images of `z0` under all reduced words of length
/// `<= depth` in the generators and their inverses, deduplicated by image
/// point. Returns sorted distances of the non-fixed images.
pub fn brute_force_lengths(generators: &[[f64; 4]], z0: (f64, f64), depth: usize) -> Vec<f64> {
    let mut letters = Vec::new();
    for &[a, b, c, d] in generators {
        letters.push([a, b, c, d]);
        letters.push([d, -b, -c, a]);
    }
    let inverse_of = |i: usize| i ^ 1;
    let mut seen: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let z = Complex64::new(z0.0, z0.1);
    let mut frontier: Vec<([f64; 4], Option<usize>)> = vec![([1.0, 0.0, 0.0, 1.0], None)];
    for level in 0..=depth {
        let mut next = Vec::new();
        for (m, last) in &frontier {
            let w = (z * m[0] + m[1]) / (z * m[2] + m[3]);
            let key = ((w.re * 1e8).round() as i64, (w.im * 1e8).round() as i64);
            seen.entry(key).or_insert_with(|| {
                let u = ((w.re - z.re).powi(2) + (w.im - z.im).powi(2)) / (2.0 * w.im * z.im);
                (1.0 + u).acosh()
            });
            if level == depth {
                continue;
            }
            for (i, l) in letters.iter().enumerate() {
                if Some(inverse_of(i)) == *last {
                    continue;
                }
                let p = [
                    m[0] * l[0] + m[1] * l[2],
                    m[0] * l[1] + m[1] * l[3],
                    m[2] * l[0] + m[3] * l[2],
                    m[2] * l[1] + m[3] * l[3],
                ];
                next.push((p, Some(i)));
            }
        }
        frontier = next;
    }
    let mut out: Vec<f64> = seen.into_values().filter(|&d| d > 1e-7).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Clusters sorted values closer than `tol` into `(first value, count)`.
pub fn cluster(sorted: &[f64], tol: f64) -> Vec<(f64, u64)> {
    let mut out: Vec<(f64, u64)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((start, n)) if v - *start <= tol => *n += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}
