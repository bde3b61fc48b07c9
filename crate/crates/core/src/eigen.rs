//! Perturbed eigenvalues as zeros of the spectral function, spectral gaps
//! and pole-free contour heights.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spectral::{rho_of_lambda, s_spectral_lambda, CouplingContext, Spectrum};

/// Bisection stops once the bracket is narrower than this, relative to
/// `max(1, |lambda|)`.
pub const ROOT_TOL: f64 = 1e-12;

/// Exponent cap for the geometric search of the unbounded brackets.
const MAX_EXPANSION: i32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenKind {
    New,
    Inherited,
    Ground,
}

/// A zero of `S` in `lambda` with the open interval between poles that
/// contains it (infinite ends for the outer brackets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewEigenvalue {
    pub lambda: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSpectrum {
    /// Simple zeros of `S`, ordered by `lambda`, excluding the ground state.
    pub new_eigs: Vec<NewEigenvalue>,
    /// Unperturbed eigenvalues that survive with the given multiplicity.
    pub inherited: Vec<(f64, u64)>,
    /// The zero below every pole when it is negative.
    pub ground: Option<NewEigenvalue>,
    /// Brackets skipped because no sign change could be established.
    pub warnings: Vec<String>,
}

/// One row of the merged, `lambda`-ordered perturbed spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedRow {
    pub kind: EigenKind,
    pub lambda: f64,
    pub mult: u64,
    pub bracket: (f64, f64),
}

impl PerturbedSpectrum {
    /// All eigenvalues (new with multiplicity 1, inherited, ground) sorted
    /// by `lambda`.
    pub fn rows(&self) -> Vec<PerturbedRow> {
        let mut rows: Vec<PerturbedRow> = self
            .ground
            .iter()
            .map(|g| PerturbedRow {
                kind: EigenKind::Ground,
                lambda: g.lambda,
                mult: 1,
                bracket: g.bracket,
            })
            .chain(self.new_eigs.iter().map(|e| PerturbedRow {
                kind: EigenKind::New,
                lambda: e.lambda,
                mult: 1,
                bracket: e.bracket,
            }))
            .chain(self.inherited.iter().map(|&(lambda, mult)| PerturbedRow {
                kind: EigenKind::Inherited,
                lambda,
                mult,
                bracket: (lambda, lambda),
            }))
            .collect();
        rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        rows
    }

    /// All zeros of `S` (ground first), ordered by `lambda`.
    pub fn zeros(&self) -> Vec<f64> {
        self.ground.iter().chain(&self.new_eigs).map(|e| e.lambda).collect()
    }
}

fn s_real(ctx: &CouplingContext, spec: &Spectrum, lambda: f64) -> Option<f64> {
    s_spectral_lambda(ctx, spec, Complex64::new(lambda, 0.0), 0.0)
        .ok()
        .map(|b| b.value.re)
        .filter(|v| v.is_finite())
}

/// Bisection for the increasing function `S` on the open interval
/// `(lo, hi)` with `S(lo+) < 0 < S(hi-)`.
fn bisect(ctx: &CouplingContext, spec: &Spectrum, mut lo: f64, mut hi: f64) -> Option<f64> {
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOL * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            return Some(mid);
        }
        let v = s_real(ctx, spec, mid)?;
        if v < 0.0 {
            lo = mid;
        } else if v > 0.0 {
            hi = mid;
        } else {
            return Some(mid);
        }
    }
}

enum Bracket {
    Below(f64),
    Between(f64, f64),
    Above(f64),
}

fn solve_bracket(
    ctx: &CouplingContext,
    spec: &Spectrum,
    b: &Bracket,
) -> std::result::Result<Option<NewEigenvalue>, String> {
    match *b {
        Bracket::Between(lo, hi) => bisect(ctx, spec, lo, hi)
            .map(|lambda| {
                Some(NewEigenvalue {
                    lambda,
                    bracket: (lo, hi),
                })
            })
            .ok_or_else(|| format!("no sign change resolved in ({lo}, {hi})")),
        Bracket::Below(hi) => {
            let base = hi.min(0.0);
            for k in 0..=MAX_EXPANSION {
                let lo = base - 2f64.powi(k);
                match s_real(ctx, spec, lo) {
                    Some(v) if v < 0.0 => {
                        return bisect(ctx, spec, lo, hi)
                            .map(|lambda| {
                                Some(NewEigenvalue {
                                    lambda,
                                    bracket: (f64::NEG_INFINITY, hi),
                                })
                            })
                            .ok_or_else(|| format!("bisection failed below {hi}"));
                    }
                    Some(_) => {}
                    None => return Err(format!("non-finite S at {lo}")),
                }
            }
            Ok(None)
        }
        Bracket::Above(lo) => {
            for k in 0..=MAX_EXPANSION {
                let hi = lo + 2f64.powi(k);
                match s_real(ctx, spec, hi) {
                    Some(v) if v > 0.0 => {
                        return bisect(ctx, spec, lo, hi)
                            .map(|lambda| {
                                Some(NewEigenvalue {
                                    lambda,
                                    bracket: (lo, f64::INFINITY),
                                })
                            })
                            .ok_or_else(|| format!("bisection failed above {lo}"));
                    }
                    Some(_) => {}
                    None => return Err(format!("non-finite S at {hi}")),
                }
            }
            Ok(None)
        }
    }
}

/// Zeros of `lambda -> S` up to `lambda_max`, interlaced with the poles
/// (distinct eigenvalues of positive weight), plus the inherited part of
/// the unperturbed spectrum.
///
/// `S` increases from `-inf` to `+inf` between consecutive poles, so each
/// interior bracket holds exactly one zero. Both outer brackets tend to the
/// same limit at infinity, so exactly one of them holds a zero unless that
/// limit vanishes.
pub fn solve_new_eigs(ctx: &CouplingContext, spec: &Spectrum, lambda_max: f64) -> Result<PerturbedSpectrum> {
    let poles: Vec<f64> = spec.poles().map(|(_, e)| e.lambda).collect();
    let mut brackets = Vec::with_capacity(poles.len() + 1);
    if let Some(&first) = poles.first() {
        brackets.push(Bracket::Below(first));
        for pair in poles.windows(2) {
            if pair[0] < lambda_max {
                brackets.push(Bracket::Between(pair[0], pair[1]));
            }
        }
        let last = *poles.last().expect("non-empty");
        if last < lambda_max {
            brackets.push(Bracket::Above(last));
        }
    }
    let solved: Vec<_> = brackets.par_iter().map(|b| solve_bracket(ctx, spec, b)).collect();

    let mut out = PerturbedSpectrum::default();
    for (b, r) in brackets.iter().zip(solved) {
        match r {
            Ok(Some(e)) if e.lambda <= lambda_max => {
                if matches!(b, Bracket::Below(_)) && e.lambda < 0.0 {
                    out.ground = Some(e);
                } else {
                    out.new_eigs.push(e);
                }
            }
            Ok(_) => {}
            Err(w) => out.warnings.push(w),
        }
    }
    for e in spec.entries() {
        if e.lambda > lambda_max {
            break;
        }
        if e.weight == 0.0 {
            out.inherited.push((e.lambda, e.mult));
        } else if e.mult > 1 {
            out.inherited.push((e.lambda, e.mult - 1));
        }
    }
    Ok(out)
}

/// Consecutive distinct eigenvalue pairs with `lambda_{k+1} - lambda_k >= c`.
///
/// Without `c`, uses `c1 / 2` where `c1 = min_{n >= 1} lambda_n / n` over the
/// multiplicity-expanded list (the lower Weyl constant of the data).
pub fn gap_subsequence(spec: &Spectrum, c: Option<f64>) -> Vec<(f64, f64)> {
    let c = c.unwrap_or_else(|| 0.5 * lower_weyl_constant(spec));
    spec.entries()
        .windows(2)
        .filter(|w| w[1].lambda - w[0].lambda >= c)
        .map(|w| (w[0].lambda, w[1].lambda))
        .collect()
}

/// `min_{n >= 1} lambda_n / n` with `n` counting eigenvalues with
/// multiplicity from 0.
pub fn lower_weyl_constant(spec: &Spectrum) -> f64 {
    let mut count = 0u64;
    let mut c1 = f64::INFINITY;
    for e in spec.entries() {
        count += e.mult;
        let n = count - 1;
        if n >= 1 {
            c1 = c1.min(e.lambda / n as f64);
        }
    }
    if c1.is_finite() {
        c1
    } else {
        0.0
    }
}

/// Contour heights `T_N` between a pole pair and its interlaced zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeHeights {
    pub values: Vec<f64>,
    /// `(rho_k, chi_k, rho_{k+1})` behind each height.
    pub provenance: Vec<(f64, f64, f64)>,
    /// False when fewer than the requested number qualified.
    pub complete: bool,
}

/// Midpoint rule for one gap: the midpoint of the longer of
/// `[rho_k, chi]` and `[chi, rho_{k+1}]`, taking the left side on ties.
pub fn midpoint_height(rho_k: f64, chi: f64, rho_next: f64) -> f64 {
    if (chi - rho_k).abs() >= (chi - rho_next).abs() {
        0.5 * (rho_k + chi)
    } else {
        0.5 * (rho_next + chi)
    }
}

/// Up to `count` heights from consecutive poles above `1/4` whose gap in
/// `lambda` is at least `c` (see [`gap_subsequence`]). Each height keeps a
/// quarter of its pole gap from every pole and zero.
pub fn safe_heights(spec: &Spectrum, perturbed: &PerturbedSpectrum, count: usize, c: Option<f64>) -> SafeHeights {
    let c = c.unwrap_or_else(|| 0.5 * lower_weyl_constant(spec));
    let poles: Vec<f64> = spec.poles().map(|(_, e)| e.lambda).filter(|&l| l > 0.25).collect();
    let mut out = SafeHeights::default();
    for pair in poles.windows(2) {
        if out.values.len() >= count {
            break;
        }
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo < c {
            continue;
        }
        let Some(chi) = perturbed.new_eigs.iter().find(|e| e.lambda > lo && e.lambda < hi) else {
            continue;
        };
        let (rk, x, rn) = (rho_of_lambda(lo).re, rho_of_lambda(chi.lambda).re, rho_of_lambda(hi).re);
        out.values.push(midpoint_height(rk, x, rn));
        out.provenance.push((rk, x, rn));
    }
    out.complete = out.values.len() >= count;
    out
}

/// Samples of `w` on `[-sigma, 0]` used by the diagnostics.
pub const DIAGNOSTIC_SAMPLES: usize = 33;

/// For each height `T`, `max_w sum w_j m_j |1/(lambda_j - mu) - 1/(lambda_j - i)|`
/// with `mu = 1/4 + (T + i w)^2`, divided by `T^5`.
pub fn polybound_diagnostic(spec: &Spectrum, heights: &SafeHeights, sigma: f64) -> Vec<(f64, f64)> {
    heights
        .values
        .iter()
        .map(|&t| {
            let worst = (0..DIAGNOSTIC_SAMPLES)
                .map(|i| {
                    let w = -sigma * i as f64 / (DIAGNOSTIC_SAMPLES - 1) as f64;
                    let mu = 0.25 + Complex64::new(t, w).powi(2);
                    spec.entries()
                        .iter()
                        .map(|e| {
                            let d = (e.lambda - mu).inv() - (Complex64::new(e.lambda, -1.0)).inv();
                            e.weight * e.mult as f64 * d.norm()
                        })
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            (t, worst / t.powi(5))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{make_context, BetaConvention, Coupling, SpectrumEntry};

    fn entry(lambda: f64, mult: u64, weight: f64) -> SpectrumEntry {
        SpectrumEntry { lambda, mult, weight }
    }

    fn ctx(alpha: f64) -> CouplingContext {
        make_context(Coupling::Finite(alpha), 1, None, BetaConvention::Derivation).unwrap()
    }

    #[test]
    fn one_entry_toy() {
        let spec = Spectrum::new(vec![entry(0.0, 1, 0.5)], 2.0).unwrap();
        let p = solve_new_eigs(&ctx(2.0), &spec, 100.0).unwrap();
        assert_eq!(p.new_eigs.len(), 1);
        assert!((p.new_eigs[0].lambda - 1.0).abs() < 1e-10);
        assert!(p.ground.is_none());
        let p = solve_new_eigs(&ctx(-2.0), &spec, 100.0).unwrap();
        let g = p.ground.unwrap();
        assert!((g.lambda + 1.0).abs() < 1e-10);
    }

    #[test]
    fn inherited_cases() {
        let spec = Spectrum::new(vec![entry(0.0, 1, 0.1), entry(2.0, 3, 0.0), entry(5.0, 2, 0.2)], 10.0).unwrap();
        let p = solve_new_eigs(&ctx(1.0), &spec, 100.0).unwrap();
        assert_eq!(p.inherited, vec![(2.0, 3), (5.0, 1)]);
        assert_eq!(p.new_eigs.len() + p.ground.iter().count(), 2);
        let inner = p.new_eigs.iter().find(|e| e.bracket == (0.0, 5.0)).unwrap();
        assert!(inner.lambda > 0.0 && inner.lambda < 5.0);
    }

    #[test]
    fn gaps_and_weyl_constant() {
        let spec = Spectrum::new((0..10).map(|j| entry(j as f64, 1, 0.1)).collect(), 1.0).unwrap();
        assert_eq!(lower_weyl_constant(&spec), 1.0);
        assert_eq!(gap_subsequence(&spec, None).len(), 9);
        let clustered = Spectrum::new(
            vec![
                entry(0.0, 1, 0.1),
                entry(0.1, 1, 0.1),
                entry(5.0, 1, 0.1),
                entry(5.1, 1, 0.1),
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(gap_subsequence(&clustered, Some(1.0)), vec![(0.1, 5.0)]);
    }

    #[test]
    fn midpoint_rule() {
        assert!((midpoint_height(1.0, 1.8, 2.0) - 1.4).abs() < 1e-15);
        assert!((midpoint_height(1.0, 1.1, 2.0) - 1.55).abs() < 1e-15);
        assert_eq!(midpoint_height(1.0, 1.5, 2.0), 1.25);
    }

    #[test]
    fn empty_heights_give_empty_diagnostic() {
        let spec = Spectrum::new(vec![entry(0.0, 1, 0.1)], 1.0).unwrap();
        assert!(polybound_diagnostic(&spec, &SafeHeights::default(), 1.0).is_empty());
    }
}
