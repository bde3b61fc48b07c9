//! The normalized digamma `psi(s) = Gamma'(s) / (2 pi Gamma(s))`, its
//! derivative, and the real zero of `1 + m beta psi(1/2 + v)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

// B_{2k} / (2k), k = 1..8
const DIGAMMA_ASYMP: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

// B_{2k}, k = 1..8
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

const SHIFT: f64 = 10.0;

fn check_pole(s: Complex64) -> Result<()> {
    if s.im.abs() < 1e-14 && s.re <= 0.0 && (s.re - s.re.round()).abs() < 1e-14 {
        return Err(Error::domain("special", format!("Gamma has a pole at s = {}", s.re)));
    }
    Ok(())
}

/// `cot z` without overflow for large `|Im z|`.
fn cot(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z.im >= 0.0 {
        let q = (2.0 * i * z).exp();
        i * (q + 1.0) / (q - 1.0)
    } else {
        let q = (-2.0 * i * z).exp();
        -i * (q + 1.0) / (q - 1.0)
    }
}

/// Classical digamma `Gamma'/Gamma` for complex argument.
pub fn digamma(s: Complex64) -> Result<Complex64> {
    check_pole(s)?;
    if s.re < 0.5 {
        let reflected = digamma(Complex64::new(1.0, 0.0) - s)?;
        return Ok(reflected - PI * cot(PI * s));
    }
    let mut z = s;
    let mut acc = Complex64::new(0.0, 0.0);
    while z.re < SHIFT {
        acc -= z.inv();
        z += 1.0;
    }
    let inv2 = (z * z).inv();
    let mut term = inv2;
    let mut series = Complex64::new(0.0, 0.0);
    for c in DIGAMMA_ASYMP {
        series += term * c;
        term *= inv2;
    }
    Ok(acc + z.ln() - 0.5 * z.inv() - series)
}

/// Trigamma `d/ds digamma(s)` for complex argument.
pub fn trigamma(s: Complex64) -> Result<Complex64> {
    check_pole(s)?;
    if s.re < 0.5 {
        let c = cot(PI * s);
        let reflected = trigamma(Complex64::new(1.0, 0.0) - s)?;
        return Ok(PI * PI * (c * c + 1.0) - reflected);
    }
    let mut z = s;
    let mut acc = Complex64::new(0.0, 0.0);
    while z.re < SHIFT {
        acc += (z * z).inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut term = inv2 * inv;
    let mut series = Complex64::new(0.0, 0.0);
    for b in BERNOULLI {
        series += term * b;
        term *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + series)
}

/// `psi(s) = digamma(s) / (2 pi)`.
pub fn psi(s: Complex64) -> Result<Complex64> {
    Ok(digamma(s)? / (2.0 * PI))
}

/// `psi'(s) = trigamma(s) / (2 pi)`.
pub fn psi_prime(s: Complex64) -> Result<Complex64> {
    Ok(trigamma(s)? / (2.0 * PI))
}

fn psi_real(x: f64) -> f64 {
    psi(Complex64::new(x, 0.0)).map(|z| z.re).unwrap_or(f64::NAN)
}

/// The zero `v_beta` of `v -> 1 + m beta psi(1/2 + v)` on `(-1/2, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenomZero {
    pub v: f64,
    /// `|1 + m beta psi(1/2 + v)|` at the returned point.
    pub residual: f64,
}

/// Locates the unique real zero `v_beta > -1/2` by bisection.
///
/// The map is monotone on `(-1/2, inf)` for either sign of beta (it tends
/// to `-sign(beta) inf` at the left end and `sign(beta) inf` at the right),
/// so a bracket always exists. The search runs in `x = 1/2 + v` to keep
/// resolution near the pole of psi at 0.
pub fn denom_zero(m: u64, beta: f64) -> Result<DenomZero> {
    if m == 0 {
        return Err(Error::domain("special", "stabilizer order must be >= 1"));
    }
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::NoDenominatorZero);
    }
    let mb = m as f64 * beta;
    let f = |x: f64| 1.0 + mb * psi_real(x);
    let sign = beta.signum();
    let mut hi = 1.0;
    while sign * f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoDenominatorZero);
        }
    }
    let mut lo = hi;
    while sign * f(lo) >= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NoDenominatorZero);
        }
    }
    // invariant: sign * f(lo) < 0 < sign * f(hi)
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = sign * f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo).abs(), f(hi).abs());
    let (x, residual) = if flo <= fhi { (lo, flo) } else { (hi, fhi) };
    Ok(DenomZero { v: x - 0.5, residual })
}

/// The positive zero of the classical digamma function (1.4616321...),
/// by plain bisection.
pub fn digamma_positive_zero() -> f64 {
    let (mut lo, mut hi) = (1.0, 2.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if psi_real(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
