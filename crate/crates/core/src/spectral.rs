//! The spectral function `S(s)` whose zeros are the perturbed eigenvalues,
//! in its geometric (orbit sum) and spectral (eigenvalue sum) forms, plus the
//! coupling renormalization.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::green_sum;
use crate::orbits::OrbitSpectrum;
use crate::quad::CompensatedSum;
use crate::special::psi;

/// Coupling strength of the point perturbation, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    Finite(f64),
    Infinite,
}

impl Coupling {
    /// `1/alpha`, zero for infinite coupling.
    pub fn inverse(self) -> f64 {
        match self {
            Coupling::Finite(a) => 1.0 / a,
            Coupling::Infinite => 0.0,
        }
    }
}

/// Which relation between `alpha` and `beta` to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaConvention {
    /// `1/beta = 1/alpha - c0`.
    #[default]
    Derivation,
    /// `beta = alpha / (1 + c0 alpha)`, i.e. `1/beta = 1/alpha + c0`.
    Theorem1,
}

impl BetaConvention {
    /// Signed `c0` term: `1/beta = 1/alpha + sign * c0`.
    fn sign(self) -> f64 {
        match self {
            BetaConvention::Derivation => -1.0,
            BetaConvention::Theorem1 => 1.0,
        }
    }
}

/// `t` with `t(1 - t) = i` and `Re t > 1/2`.
pub fn deficiency_t() -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let root = (one - 4.0 * Complex64::i()).sqrt();
    let t = 0.5 * (one + root);
    if t.re > 0.5 {
        t
    } else {
        0.5 * (one - root)
    }
}

/// Everything the coupling contributes to `S`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CouplingContext {
    pub alpha: Coupling,
    pub beta: f64,
    pub c0: f64,
    /// Truncation bound on the orbit part of `c0`.
    pub c0_tail: f64,
    pub m: u64,
    pub t: Complex64,
    /// `t = 1/2 + i xi`.
    pub xi: Complex64,
    pub convention: BetaConvention,
}

/// Relative tolerance for `alpha` hitting the singular coupling.
pub const SINGULAR_TOL: f64 = 1e-10;

/// `c0 = m Re psi(t) + Re sum_l mult G_t(l)` with its truncation bound.
pub fn c0_constant(m: u64, orbit: Option<&OrbitSpectrum>) -> Result<(f64, f64)> {
    let t = deficiency_t();
    let mut c0 = m as f64 * psi(t)?.re;
    let mut tail = 0.0;
    if let Some(orbit) = orbit {
        let xi = (t - 0.5) / Complex64::i();
        let g = green_sum(orbit, xi)?;
        c0 += g.value.re;
        tail = g.tail;
    }
    Ok((c0, tail))
}

/// Builds the coupling context from `alpha`.
///
/// For infinite coupling `beta` is the `alpha -> inf` limit of the chosen
/// convention: `1/c0` for [`BetaConvention::Theorem1`] and `-1/c0` for
/// [`BetaConvention::Derivation`].
pub fn make_context(
    alpha: Coupling,
    m: u64,
    orbit: Option<&OrbitSpectrum>,
    convention: BetaConvention,
) -> Result<CouplingContext> {
    if m == 0 {
        return Err(Error::domain("spectral", "stabilizer order must be >= 1"));
    }
    if let Some(o) = orbit {
        if o.stabilizer_order != m {
            return Err(Error::config(
                "spectral",
                format!(
                    "m = {m} disagrees with the orbit stabilizer order {}",
                    o.stabilizer_order
                ),
            ));
        }
    }
    let (c0, c0_tail) = c0_constant(m, orbit)?;
    let inv_beta = alpha.inverse() + convention.sign() * c0;
    if let Coupling::Finite(a) = alpha {
        if !a.is_finite() || a == 0.0 {
            return Err(Error::domain(
                "spectral",
                format!("alpha = {a} must be finite and nonzero"),
            ));
        }
        if c0 != 0.0 {
            let singular = -convention.sign() / c0;
            if (a - singular).abs() <= SINGULAR_TOL * singular.abs().max(1.0) {
                return Err(Error::SingularCoupling { alpha: a, singular });
            }
        }
    }
    if inv_beta == 0.0 {
        return Err(Error::SingularCoupling {
            alpha: f64::INFINITY,
            singular: f64::INFINITY,
        });
    }
    let t = deficiency_t();
    Ok(CouplingContext {
        alpha,
        beta: 1.0 / inv_beta,
        c0,
        c0_tail,
        m,
        t,
        xi: (t - 0.5) / Complex64::i(),
        convention,
    })
}

impl CouplingContext {
    /// Context with a prescribed renormalized coupling; `alpha` is inferred
    /// through the derivation convention using the given `c0`.
    pub fn from_beta(beta: f64, m: u64, c0: f64) -> Result<Self> {
        if m == 0 || !beta.is_finite() {
            return Err(Error::domain("spectral", "need m >= 1 and finite beta"));
        }
        let t = deficiency_t();
        let inv_alpha = if beta == 0.0 { f64::INFINITY } else { 1.0 / beta + c0 };
        let alpha = if inv_alpha == 0.0 {
            Coupling::Infinite
        } else {
            Coupling::Finite(1.0 / inv_alpha)
        };
        Ok(Self {
            alpha,
            beta,
            c0,
            c0_tail: 0.0,
            m,
            t,
            xi: (t - 0.5) / Complex64::i(),
            convention: BetaConvention::Derivation,
        })
    }

    /// `1/beta`, infinite for `beta = 0`.
    pub fn inv_beta(&self) -> f64 {
        1.0 / self.beta
    }

    /// `1 + m beta psi(1/2 + i rho)`.
    pub fn denominator(&self, rho: Complex64) -> Result<Complex64> {
        let s = Complex64::new(0.5, 0.0) + Complex64::i() * rho;
        Ok(1.0 + self.m as f64 * self.beta * psi(s)?)
    }
}

/// A value with an attached truncation bound.
#[derive(Debug, Clone, Copy)]
pub struct Bounded {
    pub value: Complex64,
    pub tail: f64,
}

/// Geometric form `1/beta + m psi(s) + sum_l mult G_s(l)`, valid for
/// `Re s > 1`.
pub fn s_geometric(ctx: &CouplingContext, orbit: &OrbitSpectrum, s: Complex64) -> Result<Bounded> {
    if !(s.re > 1.0) {
        return Err(Error::domain("spectral", format!("Re s = {} must exceed 1", s.re)));
    }
    let rho = (s - 0.5) / Complex64::i();
    let g = green_sum(orbit, rho)?;
    Ok(Bounded {
        value: ctx.inv_beta() + ctx.m as f64 * psi(s)? + g.value,
        tail: g.tail,
    })
}

/// One eigenspace of the unperturbed Laplacian: eigenvalue, multiplicity and
/// the summed squared eigenfunction values at the scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub mult: u64,
    pub weight: f64,
}

/// A truncated Laplace spectrum with pointwise weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    entries: Vec<SpectrumEntry>,
    area: f64,
}

impl Spectrum {
    /// Validates strictly increasing `lambda >= 0`, `mult >= 1`,
    /// `weight >= 0` and `area > 0`.
    pub fn new(entries: Vec<SpectrumEntry>, area: f64) -> Result<Self> {
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::domain("spectral", format!("area = {area} must be positive")));
        }
        for (i, e) in entries.iter().enumerate() {
            if !(e.lambda >= 0.0) || !e.lambda.is_finite() {
                return Err(Error::domain(
                    "spectral",
                    format!("entry {i}: lambda = {} must be >= 0", e.lambda),
                ));
            }
            if e.mult == 0 {
                return Err(Error::domain(
                    "spectral",
                    format!("entry {i}: multiplicity must be >= 1"),
                ));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::domain(
                    "spectral",
                    format!("entry {i}: weight = {} must be >= 0", e.weight),
                ));
            }
            if i > 0 && !(e.lambda > entries[i - 1].lambda) {
                return Err(Error::domain(
                    "spectral",
                    format!(
                        "eigenvalues not strictly increasing at entry {i}: {} after {}",
                        e.lambda,
                        entries[i - 1].lambda
                    ),
                ));
            }
        }
        Ok(Self { entries, area })
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest stored eigenvalue (the truncation point).
    pub fn lambda_max(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.lambda)
    }

    /// Entries that are poles of `S` (positive weight), with their indices.
    pub fn poles(&self) -> impl Iterator<Item = (usize, &SpectrumEntry)> {
        self.entries.iter().enumerate().filter(|(_, e)| e.weight > 0.0)
    }

    /// Keeps the entries with `lambda <= cutoff`.
    pub fn truncated(&self, cutoff: f64) -> Self {
        Self {
            entries: self.entries.iter().copied().filter(|e| e.lambda <= cutoff).collect(),
            area: self.area,
        }
    }
}

/// Spectral parameter of an eigenvalue: the principal `sqrt(lambda - 1/4)`,
/// so `rho >= 0` for `lambda >= 1/4` and `rho = i sqrt(1/4 - lambda)` below.
pub fn rho_of_lambda(lambda: f64) -> Complex64 {
    let x = lambda - 0.25;
    if x >= 0.0 {
        Complex64::new(x.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-x).sqrt())
    }
}

/// Bound on the omitted part of the regularized sum beyond `Lambda`, from
/// the local Weyl law `sum_{lambda_j <= x} m_j w_j ~ m x / (4 pi)` with a
/// factor 2 of slack. Infinite unless `Lambda >= 2 |lambda|`.
pub fn weyl_tail(m: u64, truncation: f64, lambda: Complex64) -> f64 {
    let l = lambda.norm();
    if truncation <= 0.0 || truncation < 2.0 * l {
        return f64::INFINITY;
    }
    // |(1 + x lambda) / ((x - lambda)(x^2 + 1))| <= 2 (1 + x|lambda|) / x^3 for x >= 2|lambda|
    let integral = 2.0 * (1.0 / (2.0 * truncation * truncation) + l / truncation);
    2.0 * m as f64 / (4.0 * PI) * integral
}

fn pole_guard(spec: &Spectrum, lambda: Complex64, tol: f64) -> Result<()> {
    for (i, e) in spec.poles() {
        if (lambda - e.lambda).norm() < tol {
            return Err(Error::PoleProximity {
                index: i,
                pole: e.lambda,
                lambda: lambda.re,
                tol,
            });
        }
    }
    Ok(())
}

/// `S` as a function of `lambda = 1/4 + rho^2`:
/// `1/alpha + sum w m (1 + lambda_j lambda) / ((lambda_j - lambda)(lambda_j^2 + 1))`.
pub fn s_spectral_lambda(ctx: &CouplingContext, spec: &Spectrum, lambda: Complex64, pole_tol: f64) -> Result<Bounded> {
    pole_guard(spec, lambda, pole_tol)?;
    let mut sum = CompensatedSum::default();
    sum.add(Complex64::new(ctx.alpha.inverse(), 0.0));
    for (_, e) in spec.poles() {
        let lj = e.lambda;
        let term = (1.0 + lj * lambda) / ((lj - lambda) * (lj * lj + 1.0));
        sum.add(term * (e.weight * e.mult as f64));
    }
    Ok(Bounded {
        value: sum.value(),
        tail: weyl_tail(ctx.m, spec.lambda_max(), lambda),
    })
}

/// `dS/dlambda = sum w m / (lambda_j - lambda)^2`.
pub fn s_spectral_dlambda(spec: &Spectrum, lambda: Complex64, pole_tol: f64) -> Result<Complex64> {
    pole_guard(spec, lambda, pole_tol)?;
    let mut sum = CompensatedSum::default();
    for (_, e) in spec.poles() {
        let d = e.lambda - lambda;
        sum.add((d * d).inv() * (e.weight * e.mult as f64));
    }
    Ok(sum.value())
}

fn rho_guard(spec: &Spectrum, rho: Complex64, tol: f64) -> Result<()> {
    for (i, e) in spec.poles() {
        let r = rho_of_lambda(e.lambda);
        if (rho - r).norm().min((rho + r).norm()) < tol {
            return Err(Error::PoleProximity {
                index: i,
                pole: e.lambda,
                lambda: (0.25 + rho * rho).re,
                tol,
            });
        }
    }
    Ok(())
}

/// `S(1/2 + i rho)` in spectral form; refuses `rho` within `pole_tol` of
/// `+-rho_j`.
pub fn s_spectral(ctx: &CouplingContext, spec: &Spectrum, rho: Complex64, pole_tol: f64) -> Result<Bounded> {
    rho_guard(spec, rho, pole_tol)?;
    s_spectral_lambda(ctx, spec, 0.25 + rho * rho, 0.0)
}

/// `d/drho S(1/2 + i rho) = 2 rho dS/dlambda`.
pub fn s_prime_spectral(spec: &Spectrum, rho: Complex64, pole_tol: f64) -> Result<Complex64> {
    rho_guard(spec, rho, pole_tol)?;
    Ok(2.0 * rho * s_spectral_dlambda(spec, 0.25 + rho * rho, 0.0)?)
}

/// Finite-model resolvent difference at the scatterer,
/// `sum w m [1/(lambda_j - lambda) - 1/(lambda_j - mu)]`.
pub fn resolvent_difference(spec: &Spectrum, lambda: Complex64, mu: Complex64) -> Complex64 {
    let mut sum = CompensatedSum::default();
    for e in spec.entries() {
        let wm = e.weight * e.mult as f64;
        sum.add(((e.lambda - lambda).inv() - (e.lambda - mu).inv()) * wm);
    }
    sum.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_entry(w: f64) -> Spectrum {
        Spectrum::new(
            vec![SpectrumEntry {
                lambda: 0.0,
                mult: 1,
                weight: w,
            }],
            4.0 * PI,
        )
        .unwrap()
    }

    #[test]
    fn deficiency_parameter() {
        let t = deficiency_t();
        assert!((t * (1.0 - t) - Complex64::i()).norm() < 1e-12);
        assert!((t.re - 1.300_25).abs() < 1e-5 && (t.im + 0.624_81).abs() < 1e-5);
    }

    #[test]
    fn c0_without_orbit_and_conventions() {
        let ctx = make_context(Coupling::Finite(2.0), 1, None, BetaConvention::Derivation).unwrap();
        let c0 = psi(deficiency_t()).unwrap().re;
        assert_eq!(ctx.c0, c0);
        assert!((1.0 / ctx.beta - (0.5 - c0)).abs() < 1e-15);
        let th = make_context(Coupling::Finite(2.0), 1, None, BetaConvention::Theorem1).unwrap();
        assert!((th.beta - 2.0 / (1.0 + 2.0 * c0)).abs() < 1e-14);
        let inf = make_context(Coupling::Infinite, 1, None, BetaConvention::Theorem1).unwrap();
        assert!((inf.beta - 1.0 / c0).abs() < 1e-14);
        let inf = make_context(Coupling::Infinite, 1, None, BetaConvention::Derivation).unwrap();
        assert!((inf.beta + 1.0 / c0).abs() < 1e-14);
        let bad = make_context(Coupling::Finite(1.0 / c0), 1, None, BetaConvention::Derivation);
        assert!(matches!(bad, Err(Error::SingularCoupling { .. })));
        let bad = make_context(Coupling::Finite(-1.0 / c0), 1, None, BetaConvention::Theorem1);
        assert!(matches!(bad, Err(Error::SingularCoupling { .. })));
    }

    #[test]
    fn one_entry_zero_and_derivative() {
        let (alpha, w) = (2.0, 0.5);
        let ctx = make_context(Coupling::Finite(alpha), 1, None, BetaConvention::Derivation).unwrap();
        let spec = one_entry(w);
        let at = |l: f64| s_spectral_lambda(&ctx, &spec, c(l, 0.0), 1e-8).unwrap().value.re;
        assert!(at(alpha * w).abs() < 1e-15);
        for l in [0.3, 1.7, -2.0] {
            assert!((at(l) - (1.0 / alpha - w / l)).abs() < 1e-14);
            let d = s_spectral_dlambda(&spec, c(l, 0.0), 1e-8).unwrap().re;
            assert!((d - w / (l * l)).abs() < 1e-14);
        }
        assert!(matches!(
            s_spectral_lambda(&ctx, &spec, c(1e-9, 0.0), 1e-8),
            Err(Error::PoleProximity { index: 0, .. })
        ));
    }

    #[test]
    fn rho_derivative_matches_finite_difference() {
        let spec = Spectrum::new(
            vec![
                SpectrumEntry {
                    lambda: 0.0,
                    mult: 1,
                    weight: 0.1,
                },
                SpectrumEntry {
                    lambda: 3.2,
                    mult: 2,
                    weight: 0.3,
                },
                SpectrumEntry {
                    lambda: 7.9,
                    mult: 1,
                    weight: 0.05,
                },
            ],
            10.0,
        )
        .unwrap();
        let ctx = make_context(Coupling::Finite(0.7), 1, None, BetaConvention::Derivation).unwrap();
        let rho = c(1.3, -0.4);
        let h = 1e-6;
        let f = |r: Complex64| s_spectral(&ctx, &spec, r, 1e-8).unwrap().value;
        let fd = (f(rho + h) - f(rho - h)) / (2.0 * h);
        let d = s_prime_spectral(&spec, rho, 1e-8).unwrap();
        assert!((fd - d).norm() < 1e-7 * d.norm().max(1.0));
    }

    #[test]
    fn spectrum_validation() {
        let e = |lambda| SpectrumEntry {
            lambda,
            mult: 1,
            weight: 0.1,
        };
        assert!(Spectrum::new(vec![e(1.0), e(1.0)], 1.0).is_err());
        assert!(Spectrum::new(vec![e(2.0), e(1.0)], 1.0).is_err());
        assert!(Spectrum::new(vec![e(-1.0)], 1.0).is_err());
        assert!(Spectrum::new(vec![e(1.0)], 0.0).is_err());
    }

    #[test]
    fn rho_branch() {
        assert_eq!(rho_of_lambda(0.0), c(0.0, 0.5));
        assert_eq!(rho_of_lambda(4.25), c(2.0, 0.0));
    }
}
