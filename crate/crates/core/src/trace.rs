//! Both sides of the trace formula: spectral sums, the truncated contour
//! identity for `h S'/S`, and the geometric side (identity term plus
//! diffractive k-tuple integrals) checked against the log integral of `S`.
//!
//! Lines are `Im rho = -height`. For a real-on-the-imaginary-axis, even `h`
//! every integrand used here satisfies `f(-conj rho) = ±conj f(rho)`, so
//! half-line integrals over `Re rho >= 0` suffice where noted.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::segment_integral;
use crate::eigen::PerturbedSpectrum;
use crate::error::{Error, Result};
use crate::green::{free_green, green_envelope, green_sum, GREEN_PREFACTOR, IM_MARGIN};
use crate::orbits::OrbitSpectrum;
use crate::quad::{self, graded_breaks, CompensatedSum, KronrodRule};
use crate::special::{denom_zero, psi, psi_prime};
use crate::spectral::{rho_of_lambda, s_prime_spectral, s_spectral, CouplingContext, Spectrum};
use crate::testfn::TestFunction;

/// Minimum distance between a contour height and the zero `v_beta`.
pub const COLLISION_TOL: f64 = 1e-6;
/// Largest accepted series ratio bound when selecting `sigma`.
pub const RATIO_LIMIT: f64 = 0.9;
/// Hard cap on the `sigma` search.
pub const SIGMA_CAP: f64 = 1e3;
/// Interpolation budget of the transform table, relative to its maximum.
pub const SPLINE_TOL: f64 = 1e-9;
/// Minimum distance of poles and zeros from the boundary of `B(T)`.
pub const BOUNDARY_TOL: f64 = 1e-4;

// cutoff budget for line integrals
const LINE_TAIL_TOL: f64 = 1e-13;
// largest accepted phase step of S between adjacent contour nodes
const BRANCH_STEP: f64 = 0.5 * PI;
// per-axis cutoff: the integrand is below e^{-39} of its peak
const AXIS_CUTOFF_LOG: f64 = 39.0;
// multisets whose whole subtree is bounded below this are skipped
const PRUNE_TOL: f64 = 1e-15;
// transform values below this are dropped from the tables
const TABLE_FLOOR: f64 = 1e-16;

fn im() -> Complex64 {
    Complex64::i()
}

/// A line `Im rho = -height` truncated to `|Re rho| <= re_cutoff`.
#[derive(Debug, Clone, Serialize)]
pub struct ContourSpec {
    pub height: f64,
    pub re_cutoff: f64,
    /// Panel breaks on `[0, re_cutoff]`.
    pub breaks: Vec<f64>,
    /// Bound on the integral over `|Re rho| > re_cutoff`.
    pub cutoff_error: f64,
}

impl ContourSpec {
    /// Grows the cutoff until `tail(x) <= 1e-13`; panels start at `w0`,
    /// grow by 10% and are capped at `cap`.
    fn build(height: f64, tail: impl Fn(f64) -> f64, w0: f64, cap: f64) -> Self {
        let mut x: f64 = 8.0;
        while tail(x) > LINE_TAIL_TOL && x < 1e5 {
            x *= 1.25;
        }
        Self {
            height,
            re_cutoff: x,
            breaks: graded_breaks(x, w0, 1.1, cap),
            cutoff_error: tail(x),
        }
    }

    fn half_rule(&self) -> KronrodRule {
        KronrodRule::from_breaks(&self.breaks)
    }

    fn full_rule(&self) -> KronrodRule {
        let mut b: Vec<f64> = self.breaks.iter().rev().map(|x| -x).collect();
        b.extend_from_slice(&self.breaks[1..]);
        KronrodRule::from_breaks(&b)
    }

    fn point(&self, x: f64) -> Complex64 {
        Complex64::new(x, -self.height)
    }

    fn eval<F>(&self, rule: &KronrodRule, f: F) -> Result<Vec<Complex64>>
    where
        F: Fn(Complex64) -> Result<Complex64> + Sync,
    {
        rule.nodes.par_iter().map(|&x| f(self.point(x))).collect()
    }
}

/// First panel width for a line at `height`: a quarter of the distance to
/// the nearest singularity (poles of `h`, the zero `-i v_beta`, the poles of
/// `psi(1/2 + i rho)` at `i(n + 1/2)`).
fn first_width(h: &TestFunction, ctx: &CouplingContext, height: f64) -> f64 {
    let mut d = (h.sigma - height).clamp(0.0, 1.0).min(height + 0.5);
    if let Ok(z) = denom_zero(ctx.m, ctx.beta) {
        d = d.min((height - z.v).abs());
    }
    (0.25 * d).max(1e-3)
}

fn check_collision(ctx: &CouplingContext, height: f64) -> Result<()> {
    if let Ok(z) = denom_zero(ctx.m, ctx.beta) {
        if (height - z.v).abs() < COLLISION_TOL {
            return Err(Error::ContourCollision { height, zero: z.v });
        }
    }
    Ok(())
}

/// Transform height: `v_beta + min(0.1, (sigma - v_beta)/2)` when the zero
/// `-i v_beta` lies on `(0, -i sigma)`, else 0.
pub fn select_nu(ctx: &CouplingContext, sigma: f64) -> f64 {
    match denom_zero(ctx.m, ctx.beta) {
        Ok(z) if z.v > 0.0 && z.v < sigma => z.v + (0.1f64).min(0.5 * (sigma - z.v)),
        _ => 0.0,
    }
}

/// `min_x |1/beta + m psi(1/2 + sigma + i x)|` over `x >= 0`, from a
/// logarithmic grid refined by golden section around the best sample.
pub fn denominator_floor(ctx: &CouplingContext, sigma: f64) -> Result<f64> {
    if ctx.beta == 0.0 {
        return Ok(f64::INFINITY);
    }
    let inv_beta = ctx.inv_beta();
    let m = ctx.m as f64;
    let f = |x: f64| -> Result<f64> { Ok((inv_beta + m * psi(Complex64::new(0.5 + sigma, x))?).norm()) };
    let mut xs = vec![0.0];
    let mut x = 1e-3;
    while x < 1e6 {
        xs.push(x);
        x *= 1.1;
    }
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let (best, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(xs.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c)? < f(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(vals[best].min(f(0.5 * (a + b))?))
}

/// Outcome of [`select_sigma`].
#[derive(Debug, Clone, Serialize)]
pub struct SigmaChoice {
    pub sigma: f64,
    /// Series ratio bound at `sigma`.
    pub ratio: f64,
    /// Envelope constant: `max sum_l mult |G(-i s, l)| (1/2 + s)^{1/2}` over `s in [1, 10]`.
    pub c_fit: f64,
    /// Lower-bound constant with `|1/beta + m psi| >= q log(1/2 + sigma)`.
    pub q: f64,
}

/// Series ratio bound
/// `C(sigma) / ((1/2 + sigma)^{1/2} min_x |1/beta + m psi(1/2 + sigma + i x)|)`
/// with `C(sigma) = max(c_fit, E(sigma) (1/2 + sigma)^{1/2})`.
pub fn series_ratio(ctx: &CouplingContext, orbit: &OrbitSpectrum, sigma: f64, c_fit: f64) -> Result<f64> {
    let e = green_envelope(orbit, sigma)?;
    if e == 0.0 {
        return Ok(0.0);
    }
    let root = (0.5 + sigma).sqrt();
    let c = c_fit.max(e * root);
    Ok(c / (root * denominator_floor(ctx, sigma)?))
}

/// Envelope constant over `sigma in [1, 10]` (19 samples).
pub fn envelope_constant(orbit: &OrbitSpectrum) -> Result<f64> {
    let mut c: f64 = 0.0;
    for i in 0..19 {
        let s = 1.0 + 0.5 * i as f64;
        c = c.max(green_envelope(orbit, s)? * (0.5 + s).sqrt());
    }
    Ok(c)
}

/// Smallest `sigma` on the grid `0.51, +2% ...` up to `1e3` with series
/// ratio below 0.9, above `|Im rho_0|` of the perturbed ground state and
/// clear of `v_beta`.
pub fn select_sigma(
    ctx: &CouplingContext,
    orbit: &OrbitSpectrum,
    perturbed: Option<&PerturbedSpectrum>,
) -> Result<SigmaChoice> {
    let c_fit = envelope_constant(orbit)?;
    let mut lower = 0.5 + IM_MARGIN;
    if let Some(ground) = perturbed.and_then(|p| p.ground.as_ref()) {
        lower = lower.max(rho_of_lambda(ground.lambda).im.abs());
    }
    let zero = denom_zero(ctx.m, ctx.beta).ok().map(|z| z.v);
    let mut sigma = lower + 0.01;
    let mut last = (sigma, f64::NAN);
    while sigma <= SIGMA_CAP {
        let clear = zero.is_none_or(|v| (sigma - v).abs() > 1e3 * COLLISION_TOL);
        if clear {
            let ratio = series_ratio(ctx, orbit, sigma, c_fit)?;
            last = (sigma, ratio);
            if ratio < RATIO_LIMIT {
                let q = denominator_floor(ctx, sigma)? / (0.5 + sigma).ln();
                return Ok(SigmaChoice { sigma, ratio, c_fit, q });
            }
        }
        sigma += 0.02 * sigma.max(1.0);
    }
    Err(Error::NoAdmissibleSigma {
        cap: SIGMA_CAP,
        diagnostics: format!(
            "C = {c_fit:.6e}, last sigma = {:.6e} with ratio {:.6e} (limit {RATIO_LIMIT})",
            last.0, last.1
        ),
    })
}

/// `(1/2pi) int h(rho) m beta psi'(1/2+i rho) / (1 + m beta psi(1/2+i rho)) drho`
/// on `Im rho = -nu`, with its error estimate. Fails if the imaginary part
/// exceeds `1e-9`.
pub fn identity_term_with_error(h: &TestFunction, ctx: &CouplingContext, nu: f64) -> Result<(f64, f64)> {
    if ctx.beta == 0.0 {
        return Ok((0.0, 0.0));
    }
    check_collision(ctx, nu)?;
    h.require_strip(nu)?;
    let mb = ctx.m as f64 * ctx.beta;
    let kernel = |rho: Complex64| -> Result<Complex64> {
        let s = 0.5 + im() * rho;
        Ok(mb * psi_prime(s)? / (1.0 + mb * psi(s)?) / (2.0 * PI))
    };
    let tail = |x: f64| {
        let k = kernel(Complex64::new(x, -nu))
            .map(|k| k.norm())
            .unwrap_or(f64::INFINITY);
        h.value_tail(nu, x) * k
    };
    let line = ContourSpec::build(nu, tail, first_width(h, ctx, nu), 1.0);
    let rule = line.full_rule();
    let vals = line.eval(&rule, |rho| Ok(h.eval(rho) * kernel(rho)?))?;
    let (v, e) = rule.combine(&vals);
    if v.im.abs() > 1e-9 {
        return Err(Error::domain(
            "trace",
            format!(
                "identity term has imaginary part {:.3e} (h not conjugate symmetric?)",
                v.im
            ),
        ));
    }
    Ok((v.re, e + line.cutoff_error))
}

/// Identity term on `Im rho = -nu`.
pub fn identity_term(h: &TestFunction, ctx: &CouplingContext, nu: f64) -> Result<f64> {
    identity_term_with_error(h, ctx, nu).map(|(v, _)| v)
}

/// Line data shared by every `(k, t)` of the transform at one height:
/// `h'(rho_n) / (1 + m beta psi)` at the nodes of `[0, X]`.
struct TransformLine {
    rule: KronrodRule,
    height: f64,
    derivative: Vec<Complex64>,
    inv_denominator: Vec<Complex64>,
    cutoff_error: f64,
}

impl TransformLine {
    fn new(h: &TestFunction, ctx: &CouplingContext, height: f64, t_max: f64) -> Result<Self> {
        check_collision(ctx, height)?;
        h.require_strip(height)?;
        let cap = (8.0 / t_max.max(1e-3)).min(0.5);
        let line = ContourSpec::build(
            height,
            |x| h.derivative_tail(height, x),
            first_width(h, ctx, height).min(cap),
            cap,
        );
        let rule = line.half_rule();
        let derivative = line.eval(&rule, |rho| Ok(h.derivative(rho)))?;
        let inv_denominator = line.eval(&rule, |rho| Ok(ctx.denominator(rho)?.inv()))?;
        Ok(Self {
            rule,
            height,
            derivative,
            inv_denominator,
            cutoff_error: line.cutoff_error,
        })
    }

    /// `e^{height t} g_k(t)` and its `t` derivative for `k = 1..=k_max`,
    /// with the Kronrod-Gauss difference of the value.
    ///
    /// With `f(-conj rho) = -conj f(rho)` for `f = h' e^{-i rho t} / D^k`,
    /// `g_k(t) = ((-1)^k / (pi k)) Im int_0^X f dx`.
    fn scaled(&self, k_max: usize, t: f64) -> Vec<(f64, f64, f64)> {
        let mut acc = vec![[Complex64::new(0.0, 0.0); 3]; k_max];
        for (n, &x) in self.rule.nodes.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -x * t);
            let mut c = self.derivative[n] * phase;
            for a in acc.iter_mut() {
                c *= self.inv_denominator[n];
                a[0] += c * self.rule.kronrod[n];
                a[1] += c * self.rule.gauss[n];
                a[2] += c * (-im() * x * self.rule.kronrod[n]);
            }
        }
        acc.iter()
            .enumerate()
            .map(|(i, a)| {
                let k = (i + 1) as f64;
                let pref = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 } / (PI * k);
                (pref * a[0].im, pref * a[2].im, (pref * (a[0] - a[1]).im).abs())
            })
            .collect()
    }
}

/// `g_{beta,k}(t) = ((-1)^k / (2 pi i k)) int h'(rho) e^{-i rho t} / (1 + m beta psi(1/2 + i rho))^k drho`
/// along `Im rho = -nu`; real for real `t`.
pub fn transform_g(h: &TestFunction, ctx: &CouplingContext, k: usize, nu: f64, t: f64) -> Result<f64> {
    transform_g_with_error(h, ctx, k, nu, t).map(|(v, _)| v)
}

/// [`transform_g`] with quadrature plus cutoff error.
pub fn transform_g_with_error(
    h: &TestFunction,
    ctx: &CouplingContext,
    k: usize,
    nu: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if k == 0 || !(t > 0.0) {
        return Err(Error::domain(
            "trace",
            format!("transform needs k >= 1 and t > 0, got k = {k}, t = {t}"),
        ));
    }
    let line = TransformLine::new(h, ctx, nu, t)?;
    let (f, _, err) = line.scaled(k, t)[k - 1];
    let scale = (-nu * t).exp();
    let cutoff = line.cutoff_error / (2.0 * PI * k as f64)
        * line.inv_denominator.last().map_or(1.0, |d| d.norm().powi(k as i32));
    Ok((scale * f, scale * (err + cutoff)))
}

/// Right side of `|g_k(t)| <= e^{-sigma t} int |h'| / (2 pi k min|1 + m beta psi|^k)`
/// with the integral and minimum on `Im rho = -sigma`.
pub fn transform_envelope(h: &TestFunction, ctx: &CouplingContext, k: usize, sigma: f64, t: f64) -> Result<f64> {
    let (int_dh, floor) = envelope_amplitude(h, ctx, sigma)?;
    Ok((-sigma * t).exp() * int_dh / (2.0 * PI * k as f64) / floor.powi(k as i32))
}

/// `(int |h'(x - i sigma)| dx, min_x |1 + m beta psi(1/2 + sigma + i x)|)`.
fn envelope_amplitude(h: &TestFunction, ctx: &CouplingContext, sigma: f64) -> Result<(f64, f64)> {
    let line = ContourSpec::build(sigma, |x| h.derivative_tail(sigma, x), first_width(h, ctx, sigma), 1.0);
    let rule = line.full_rule();
    let vals = line.eval(&rule, |rho| Ok(Complex64::new(h.derivative(rho).norm(), 0.0)))?;
    let int = rule.combine(&vals).0.re + line.cutoff_error;
    let floor = if ctx.beta == 0.0 {
        1.0
    } else {
        denominator_floor(ctx, sigma)? * ctx.beta.abs()
    };
    Ok((int, floor))
}

/// `e^{nu t} g_k(t)` tabulated with derivatives on a uniform grid and
/// interpolated by cubic Hermite polynomials; zero beyond `t_end`.
struct TransformTable {
    nu: f64,
    t0: f64,
    dt: f64,
    t_end: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Largest Kronrod-Gauss difference of the scaled values.
    quad_error: f64,
    max_abs: f64,
}

impl TransformTable {
    fn scaled_at(&self, t: f64) -> f64 {
        if t > self.t_end {
            return 0.0;
        }
        let last = self.values.len() - 1;
        let pos = ((t - self.t0) / self.dt).max(0.0);
        let i = (pos.floor() as usize).min(last - 1);
        let s = pos - i as f64;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.values[i]
            + (s3 - 2.0 * s2 + s) * self.dt * self.slopes[i]
            + (-2.0 * s3 + 3.0 * s2) * self.values[i + 1]
            + (s3 - s2) * self.dt * self.slopes[i + 1]
    }
}

/// Tables of `g_1..g_{k_max}` on a shared grid over `[t_lo, t_end]`,
/// halving the step until midpoint probes match direct evaluation to
/// `1e-9` of each table maximum.
fn build_tables(line: &TransformLine, k_max: usize, t_lo: f64, t_end: f64) -> Result<Vec<TransformTable>> {
    let mut dt = 0.05;
    for _ in 0..5 {
        let n = (((t_end - t_lo) / dt).ceil() as usize).max(1) + 1;
        let grid: Vec<Vec<(f64, f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| line.scaled(k_max, t_lo + dt * i as f64))
            .collect();
        let tables: Vec<TransformTable> = (0..k_max)
            .map(|k| TransformTable {
                nu: line.height,
                t0: t_lo,
                dt,
                t_end: t_lo + dt * (n - 1) as f64,
                values: grid.iter().map(|g| g[k].0).collect(),
                slopes: grid.iter().map(|g| g[k].1).collect(),
                quad_error: grid.iter().map(|g| g[k].2).fold(0.0, f64::max),
                max_abs: grid.iter().map(|g| g[k].0.abs()).fold(0.0, f64::max),
            })
            .collect();
        let probes = 64.min(n - 1);
        let worst = (0..probes)
            .into_par_iter()
            .map(|j| {
                let i = j * (n - 1) / probes;
                let t = t_lo + dt * (i as f64 + 0.5);
                let direct = line.scaled(k_max, t);
                tables
                    .iter()
                    .zip(&direct)
                    .map(|(tab, d)| (tab.scaled_at(t) - d.0).abs() / tab.max_abs.max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        if worst <= SPLINE_TOL {
            return Ok(tables);
        }
        dt *= 0.5;
    }
    Err(Error::domain(
        "trace",
        format!("transform tables missed the interpolation budget {SPLINE_TOL:e} at step {dt:e}"),
    ))
}

/// One diffractive order.
#[derive(Debug, Clone, Serialize)]
pub struct DiffractiveTerm {
    pub k: usize,
    pub value: f64,
    /// Number of length multisets integrated.
    pub multisets: usize,
    /// Bound on the skipped multisets.
    pub pruned: f64,
    /// Quadrature and interpolation error estimate.
    pub quad_error: f64,
}

/// Diffractive side with the data needed for its error budget.
#[derive(Debug, Clone, Serialize)]
pub struct DiffractiveSum {
    pub terms: Vec<DiffractiveTerm>,
    /// `|beta| E(sigma) / min |1 + m beta psi|`, dominating `|beta G / (1 + m beta psi)|` on the sigma line.
    pub ratio_bound: f64,
    /// `int |h'| / (2 pi)` on the sigma line.
    pub amplitude: f64,
}

impl DiffractiveSum {
    /// Bound on all orders above `k`: `amplitude * r^{k+1} / ((k+1)(1-r))`.
    pub fn series_tail(&self, k: usize) -> f64 {
        let r = self.ratio_bound;
        if r == 0.0 {
            return 0.0;
        }
        self.amplitude * r.powi(k as i32 + 1) / ((k as f64 + 1.0) * (1.0 - r))
    }

    pub fn values(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.value).collect()
    }
}

/// Nondecreasing index tuples of size `k` with their ordered-tuple counts
/// `k! / prod c_i! * prod mult_i^{c_i}`, skipping subtrees whose total bound
/// `scale * k! * P * S_i^{k-d}` is below the prune tolerance.
fn multisets(k: usize, a: &[f64], mult: &[u64], scale: f64) -> Vec<(Vec<usize>, f64)> {
    let n = a.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + a[i];
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(k);
    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        start: usize,
        prod: f64,
        stack: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
        a: &[f64],
        mult: &[u64],
        suffix: &[f64],
        bound: f64,
    ) {
        if stack.len() == k {
            let mut w = (1..=k).map(|i| i as f64).product::<f64>();
            let mut run = 1;
            for j in 1..=k {
                if j < k && stack[j] == stack[j - 1] {
                    run += 1;
                } else {
                    w /= (1..=run).map(|i| i as f64).product::<f64>();
                    run = 1;
                }
            }
            for &i in stack.iter() {
                w *= mult[i] as f64;
            }
            out.push((stack.clone(), w));
            return;
        }
        for i in start..a.len() {
            if bound * prod * suffix[i].powi((k - stack.len()) as i32) < PRUNE_TOL {
                break;
            }
            stack.push(i);
            rec(k, i, prod * a[i], stack, out, a, mult, suffix, bound);
            stack.pop();
        }
    }
    rec(k, 0, 1.0, &mut stack, &mut out, a, mult, &suffix, scale * fact);
    out
}

/// Composite Gauss-Legendre rule on `[0, u_max]` for one axis.
fn axis_rule(u_max: f64, panels: usize, order: usize) -> quad::CompositeRule {
    quad::CompositeRule::uniform(0.0, u_max, u_max / panels as f64, order)
}

/// `2 / sqrt(sinh(l + u^2/2) sinhc(u^2/2))`: the measure `dt / sqrt(cosh t - cosh l)`
/// after `t = l + u^2`.
fn axis_weight(l: f64, u: f64) -> f64 {
    let s = 0.5 * u * u;
    let sinhc = if s < 1e-4 { 1.0 + s * s / 6.0 } else { s.sinh() / s };
    2.0 / ((l + s).sinh() * sinhc).sqrt()
}

/// Nested integral `int...int g_k(L + sum u_j^2) prod w_{l_j}(u_j) du` for
/// one multiset, on the product rule.
fn nested(table: &TransformTable, lengths: &[f64], rule: &quad::CompositeRule) -> f64 {
    let nu = table.nu;
    let big_l: f64 = lengths.iter().sum();
    let u2: Vec<f64> = rule.nodes.iter().map(|u| u * u).collect();
    let axes: Vec<Vec<f64>> = lengths
        .iter()
        .map(|&l| {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&u, &w)| w * axis_weight(l, u) * (-nu * u * u).exp())
                .collect()
        })
        .collect();
    // nodes ascend, so the sum of squares only grows along each axis
    fn rec(table: &TransformTable, axes: &[Vec<f64>], u2: &[f64], t: f64, w: f64) -> f64 {
        match axes.split_first() {
            None => w * table.scaled_at(t),
            Some((first, rest)) => {
                let mut s = 0.0;
                for (i, &wi) in first.iter().enumerate() {
                    let ti = t + u2[i];
                    if ti > table.t_end {
                        break;
                    }
                    s += rec(table, rest, u2, ti, w * wi);
                }
                s
            }
        }
    }
    let (first, rest) = axes.split_first().expect("k >= 1");
    let parts: Vec<f64> = first
        .par_iter()
        .enumerate()
        .map(|(i, &wi)| rec(table, rest, &u2, big_l + u2[i], wi))
        .collect();
    (-nu * big_l).exp() * quad::compensated_sum(parts)
}

/// Product-rule resolution: panels and order per axis, main and coarse.
#[derive(Debug, Clone, Copy)]
pub struct AxisResolution {
    pub panels: usize,
    pub order: usize,
    pub coarse_order: usize,
}

impl Default for AxisResolution {
    fn default() -> Self {
        Self {
            panels: 3,
            order: 8,
            coarse_order: 6,
        }
    }
}

/// Diffractive orders `k = 1..=k_max`:
/// `(beta c)^k sum_{ordered tuples} int...int g_k(t_1+...+t_k) prod dt_j / sqrt(cosh t_j - cosh l_j)`
/// with `c = -1/(2 pi sqrt 2)` the prefactor of the Green function.
///
/// `g_k` is taken on `Im rho = -nu`; `sigma` is the line where the series
/// ratio is bounded (the orbit envelope and all pruning bounds use it).
/// Refuses to sum when that bound is not below 1.
pub fn diffractive_sum(
    h: &TestFunction,
    ctx: &CouplingContext,
    orbit: &OrbitSpectrum,
    k_max: usize,
    nu: f64,
    sigma: f64,
    res: AxisResolution,
) -> Result<DiffractiveSum> {
    let (int_dh, floor) = envelope_amplitude(h, ctx, sigma)?;
    let amplitude = int_dh / (2.0 * PI);
    let envelope = green_envelope(orbit, sigma)?;
    let ratio_bound = ctx.beta.abs() * envelope / floor;
    let empty = |k| DiffractiveTerm {
        k,
        value: 0.0,
        multisets: 0,
        pruned: 0.0,
        quad_error: 0.0,
    };
    if orbit.lengths.is_empty() || ctx.beta == 0.0 {
        return Ok(DiffractiveSum {
            terms: (1..=k_max).map(empty).collect(),
            ratio_bound: 0.0,
            amplitude,
        });
    }
    if !(ratio_bound < 1.0) {
        return Err(Error::SeriesDivergence { ratio: ratio_bound });
    }
    let a: Vec<f64> = orbit
        .lengths
        .par_iter()
        .map(|l| free_green(Complex64::new(0.0, -sigma), l.length).map(|g| g.norm() * l.mult as f64))
        .collect::<Result<_>>()?;
    let mult: Vec<u64> = orbit.lengths.iter().map(|l| l.mult).collect();
    let lengths: Vec<f64> = orbit.lengths.iter().map(|l| l.length).collect();

    let u_max = (AXIS_CUTOFF_LOG / (sigma + 0.5)).sqrt();
    let fine = axis_rule(u_max, res.panels, res.order);
    let coarse = axis_rule(u_max, res.panels, res.coarse_order);

    // beyond t_end, |g_k| <= B_k e^{-sigma t} is below TABLE_FLOOR for every k
    let b_k = |k: usize| amplitude / k as f64 / floor.powi(k as i32);
    let b_max = (1..=k_max).map(b_k).fold(0.0, f64::max);
    let sets: Vec<_> = (1..=k_max)
        .map(|k| {
            let scale = amplitude / (k as f64) * (ctx.beta.abs() / floor).powi(k as i32);
            multisets(k, &a, &mult, scale)
        })
        .collect();
    let t_lo = lengths[0];
    let t_hi = sets
        .iter()
        .flat_map(|s| s.iter().map(|(idx, _)| idx.iter().map(|&i| lengths[i]).sum::<f64>()))
        .fold(t_lo, f64::max)
        + k_max as f64 * u_max * u_max;
    let t_end = t_hi.min((b_max / TABLE_FLOOR).ln().max(0.0) / sigma).max(t_lo + 1.0);
    let line = TransformLine::new(h, ctx, nu, t_end)?;
    let tables = build_tables(&line, k_max, t_lo, t_end)?;

    let bc = ctx.beta * GREEN_PREFACTOR;
    let mut terms = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let table = &tables[k - 1];
        let mut total = CompensatedSum::default();
        let mut covered = 0.0;
        let mut diff = 0.0;
        let mut weight_mass = 0.0;
        for (idx, w) in &sets[k - 1] {
            let ls: Vec<f64> = idx.iter().map(|&i| lengths[i]).collect();
            let v = nested(table, &ls, &fine);
            let vc = nested(table, &ls, &coarse);
            total.add(Complex64::new(w * v, 0.0));
            diff += w * (v - vc).abs();
            covered += w * idx.iter().map(|&i| a[i] / mult[i] as f64).product::<f64>();
            weight_mass += w * ls.iter().map(|&l| axis_mass(l, nu)).product::<f64>();
        }
        let bck = bc.powi(k as i32);
        let scale = amplitude / (k as f64) * (ctx.beta.abs() / floor).powi(k as i32);
        let pruned = (scale * (envelope.powi(k as i32) - covered)).max(0.0);
        let dropped = b_k(k) * (-sigma * table.t_end).exp() * (nu * table.t_end).exp();
        let interp =
            SPLINE_TOL * table.max_abs + table.quad_error + line.cutoff_error / (2.0 * PI * k as f64) + dropped;
        terms.push(DiffractiveTerm {
            k,
            value: bck * total.value().re,
            multisets: sets[k - 1].len(),
            pruned,
            quad_error: bck.abs() * (diff + interp * weight_mass),
        });
    }
    Ok(DiffractiveSum {
        terms,
        ratio_bound,
        amplitude,
    })
}

/// `int_0^inf w_l(u) e^{-nu u^2} du`, bounding `int |...| dt` for unit `g`.
fn axis_mass(l: f64, nu: f64) -> f64 {
    quad::integrate(
        |u| Complex64::new(axis_weight(l, u) * (-nu * u * u).exp(), 0.0),
        0.0,
        12.0,
        8,
        1e-12,
        1e-10,
        2000,
    )
    .value
    .re
}

/// Log integral of the geometric `S` with its error.
#[derive(Debug, Clone, Serialize)]
pub struct Pretrace {
    pub value: f64,
    pub error: f64,
    /// `max |beta G / (1 + m beta psi)|` over the contour nodes.
    pub max_ratio: f64,
    /// Orbit truncation bound of `G` on the line.
    pub orbit_tail: f64,
}

/// `-(1/2 pi i) int_{Im rho = -sigma} h'(rho) log S(1/2 + i rho) drho`
/// with `S` in geometric mode.
///
/// The log is of `1 + m beta psi + beta G = beta S` (constants integrate to
/// zero against `h'`), tracked by continuity from the far end of the line
/// with the principal value there. Only `Re rho >= 0` is integrated: with
/// `L(0)` the tracked value at the axis,
/// `int_R h' L = 2i Im int_0^X h' L + 2i Im L(0) h(-i sigma)`.
pub fn pretrace_rhs(h: &TestFunction, ctx: &CouplingContext, orbit: &OrbitSpectrum, sigma: f64) -> Result<Pretrace> {
    log_integral(h, ctx, orbit, sigma, false)
}

fn log_integral(
    h: &TestFunction,
    ctx: &CouplingContext,
    orbit: &OrbitSpectrum,
    sigma: f64,
    full: bool,
) -> Result<Pretrace> {
    h.require_strip(sigma)?;
    check_collision(ctx, sigma)?;
    let mb = ctx.m as f64 * ctx.beta;
    let line = ContourSpec::build(sigma, |x| h.derivative_tail(sigma, x), first_width(h, ctx, sigma), 1.0);
    let rule = if full { line.full_rule() } else { line.half_rule() };
    let orbit_tail = green_sum(orbit, line.point(0.0))?.tail;
    let point = |x: f64| -> Result<(Complex64, f64)> {
        let rho = line.point(x);
        let d = 1.0 + mb * psi(0.5 + im() * rho)?;
        let g = ctx.beta * green_sum(orbit, rho)?.value;
        Ok((d + g, (g / d).norm()))
    };
    let samples: Vec<(Complex64, f64)> = rule.nodes.par_iter().map(|&x| point(x)).collect::<Result<_>>()?;
    let max_ratio = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    if !(max_ratio < 1.0) {
        return Err(Error::SeriesDivergence { ratio: max_ratio });
    }

    // continuous log from the right end, descending in Re rho
    let mut order: Vec<usize> = (0..rule.len()).collect();
    order.sort_by(|&i, &j| rule.nodes[j].total_cmp(&rule.nodes[i]));
    let mut logs = vec![Complex64::new(0.0, 0.0); rule.len()];
    let first = order[0];
    let mut arg = samples[first].0.arg();
    let mut prev = samples[first].0;
    for &i in &order {
        let step = (samples[i].0 / prev).arg();
        if step.abs() > BRANCH_STEP {
            return Err(Error::BranchResolution {
                jump: step,
                at: rule.nodes[i],
            });
        }
        arg += step;
        prev = samples[i].0;
        logs[i] = Complex64::new(samples[i].0.norm().ln(), arg);
    }
    let vals: Vec<Complex64> = rule
        .nodes
        .iter()
        .zip(&logs)
        .map(|(&x, l)| h.derivative(line.point(x)) * l)
        .collect();
    let (int, err) = rule.combine(&vals);
    let end_log = logs[first].norm().max(1.0);
    let cutoff = line.cutoff_error * end_log;
    let value = if full {
        -(int / (2.0 * PI * im())).re
    } else {
        let (s0, _) = point(0.0)?;
        let step = (s0 / prev).arg();
        if step.abs() > BRANCH_STEP {
            return Err(Error::BranchResolution { jump: step, at: 0.0 });
        }
        let arg0 = arg + step;
        -(int.im + arg0 * h.eval(line.point(0.0)).re) / PI
    };
    Ok(Pretrace {
        value,
        error: (err + cutoff) / PI,
        max_ratio,
        orbit_tail,
    })
}

/// Pairwise-differenced spectral sum with a Weyl-law bound on the omitted
/// part beyond the largest listed eigenvalue.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralSide {
    pub value: f64,
    pub tail: f64,
}

/// `sum_j {h(rho_j^alpha) - h(rho_j)}` over multiplicity-expanded, sorted
/// lists paired by index. The perturbed list is new zeros, ground state
/// and inherited eigenvalues; both lists must have equal length.
pub fn spectral_side(h: &TestFunction, spec: &Spectrum, perturbed: &PerturbedSpectrum) -> Result<SpectralSide> {
    let mut before: Vec<f64> = spec
        .entries()
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.lambda, e.mult as usize))
        .collect();
    let mut after: Vec<f64> = perturbed
        .rows()
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.lambda, r.mult as usize))
        .collect();
    if before.len() != after.len() {
        return Err(Error::Truncation(format!(
            "{} unperturbed vs {} perturbed eigenvalues (with multiplicity)",
            before.len(),
            after.len()
        )));
    }
    before.sort_by(f64::total_cmp);
    after.sort_by(f64::total_cmp);
    let value = quad::compensated_sum(
        before
            .iter()
            .zip(&after)
            .map(|(&b, &a)| (h.eval(rho_of_lambda(a)) - h.eval(rho_of_lambda(b))).re),
    );
    let tail = match before.last() {
        Some(&top) if top > 0.25 => {
            // sum_{lambda > top} 2|h| with density area/(4 pi) in lambda:
            // 2 (area/4 pi) int_X^inf |h(x)| 2x dx, |h| ~ (1+x)^{-2-delta}
            let x0 = (top - 0.25).sqrt();
            let hx = h.eval(Complex64::new(x0, 0.0)).norm();
            let delta = h.delta.max(1e-3);
            4.0 * spec.area() / (4.0 * PI) * hx * (1.0 + x0) * (1.0 + x0) / delta
        }
        _ => f64::INFINITY,
    };
    Ok(SpectralSide { value, tail })
}

/// Both sides of the truncated identity on the box `|Re rho| <= T`, `|Im rho| <= sigma`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedCheck {
    pub height: f64,
    pub sigma: f64,
    /// `sum h(zeros in B) - sum h(poles in B)`, one point per eigenvalue.
    pub lhs: f64,
    /// `(1/2 pi i)` times the bottom and right edge integrals of `h S'/S`.
    pub rhs: f64,
    pub gap: f64,
    pub zeros_inside: usize,
    pub poles_inside: usize,
}

fn inside_box(lambda: f64, t: f64, sigma: f64, kind: &'static str) -> Result<bool> {
    let rho = rho_of_lambda(lambda);
    let (at, dist, inside) = if rho.im == 0.0 {
        (rho.re, (rho.re - t).abs(), rho.re < t)
    } else {
        (rho.im, (rho.im - sigma).abs(), rho.im < sigma)
    };
    if dist < BOUNDARY_TOL {
        return Err(Error::BoundaryTooClose {
            kind,
            at,
            distance: dist,
        });
    }
    Ok(inside)
}

/// Point sums over `B(T)` against `(1/2 pi i)(int_bottom + int_right) h S'/S`.
///
/// `S` and `S'/S` are even in `rho`, so the top and left edges repeat the
/// bottom and right ones and each eigenvalue is counted once.
pub fn truncated_check(
    h: &TestFunction,
    ctx: &CouplingContext,
    spec: &Spectrum,
    perturbed: &PerturbedSpectrum,
    t: f64,
    sigma: f64,
) -> Result<TruncatedCheck> {
    if !(sigma > 0.5) || !(t > 0.0) {
        return Err(Error::domain(
            "trace",
            format!("need sigma > 1/2 and T > 0, got {sigma}, {t}"),
        ));
    }
    h.require_strip(sigma)?;
    let mut lhs = CompensatedSum::default();
    let mut zeros_inside = 0;
    for z in perturbed.zeros() {
        if inside_box(z, t, sigma, "zero")? {
            lhs.add(h.eval(rho_of_lambda(z)));
            zeros_inside += 1;
        }
    }
    let mut poles_inside = 0;
    for (_, e) in spec.poles() {
        if inside_box(e.lambda, t, sigma, "pole")? {
            lhs.add(-h.eval(rho_of_lambda(e.lambda)));
            poles_inside += 1;
        }
    }
    let pole_tol = 1e-8;
    let f = |rho: Complex64| -> Complex64 {
        let s = s_spectral(ctx, spec, rho, pole_tol).map(|b| b.value);
        let ds = s_prime_spectral(spec, rho, pole_tol);
        match (s, ds) {
            (Ok(s), Ok(ds)) => h.eval(rho) * ds / s,
            _ => Complex64::new(f64::NAN, f64::NAN),
        }
    };
    let a = Complex64::new(-t, -sigma);
    let b = Complex64::new(t, -sigma);
    let c = Complex64::new(t, sigma);
    let panels = (4.0 * t).ceil() as usize + 8;
    let (bottom, _) = segment_integral(f, a, b, panels, 1e-13, 1e-12);
    let (right, _) = segment_integral(f, b, c, 8, 1e-13, 1e-12);
    let rhs = (bottom + right) / (2.0 * PI * im());
    if !rhs.is_finite() {
        return Err(Error::domain("trace", "S vanished or was singular on the contour"));
    }
    let lhs = lhs.value().re;
    Ok(TruncatedCheck {
        height: t,
        sigma,
        lhs,
        rhs: rhs.re,
        gap: (lhs - rhs.re).abs(),
        zeros_inside,
        poles_inside,
    })
}

/// Error budget of a trace evaluation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TraceTails {
    /// Orders above `k_max`.
    pub series: f64,
    /// Skipped length multisets.
    pub pruned: f64,
    /// Quadrature, interpolation and line cutoffs.
    pub quadrature: f64,
    /// Orbit truncation of the Green sum (shared by both pipelines).
    pub orbit: f64,
    /// Weyl bound on the omitted spectral terms.
    pub spectral: f64,
}

/// Pieces of one trace evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub mode: String,
    pub alpha: String,
    pub beta: f64,
    pub c0: f64,
    pub nu: f64,
    pub sigma: f64,
    pub k_max: usize,
    pub spectral_side: Option<f64>,
    pub pretrace: Option<f64>,
    pub identity_term: f64,
    pub diffractive: Vec<f64>,
    /// `|pretrace - identity - sum_{k <= j} diffractive|` for `j = 1..=k_max`.
    pub partial_gaps: Vec<f64>,
    pub tails: TraceTails,
    pub gap: f64,
    pub converged: bool,
}

/// Knobs of the geometric pipeline.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricOptions {
    pub k_max: usize,
    pub sigma: Option<f64>,
    pub nu: Option<f64>,
    pub axes: AxisResolution,
}

/// Log integral against identity term plus diffractive orders, on the
/// same truncated orbit. Converged when the gap is within the series,
/// pruning and quadrature bounds.
pub fn trace_geometric(
    h: &TestFunction,
    ctx: &CouplingContext,
    orbit: &OrbitSpectrum,
    opts: GeometricOptions,
) -> Result<TraceReport> {
    if opts.k_max == 0 {
        return Err(Error::config("trace", "k_max must be >= 1"));
    }
    let sigma = match opts.sigma {
        Some(s) => s,
        None => select_sigma(ctx, orbit, None)?.sigma,
    };
    let nu = opts.nu.unwrap_or_else(|| select_nu(ctx, sigma));
    let pre = pretrace_rhs(h, ctx, orbit, sigma)?;
    let (ident, ident_err) = identity_term_with_error(h, ctx, nu)?;
    let diff = diffractive_sum(h, ctx, orbit, opts.k_max, nu, sigma, opts.axes)?;
    let values = diff.values();
    let mut acc = ident;
    let partial_gaps: Vec<f64> = values
        .iter()
        .map(|v| {
            acc += v;
            (pre.value - acc).abs()
        })
        .collect();
    let gap = *partial_gaps.last().expect("k_max >= 1");
    let tails = TraceTails {
        series: diff.series_tail(opts.k_max),
        pruned: diff.terms.iter().map(|t| t.pruned).sum(),
        quadrature: pre.error + ident_err + diff.terms.iter().map(|t| t.quad_error).sum::<f64>(),
        orbit: pre.orbit_tail,
        spectral: 0.0,
    };
    let budget = tails.series + tails.pruned + tails.quadrature;
    Ok(TraceReport {
        mode: "trace-geometric".into(),
        alpha: alpha_label(ctx),
        beta: ctx.beta,
        c0: ctx.c0,
        nu,
        sigma,
        k_max: opts.k_max,
        spectral_side: None,
        pretrace: Some(pre.value),
        identity_term: ident,
        diffractive: values,
        partial_gaps,
        tails,
        gap,
        converged: gap <= budget,
    })
}

pub(crate) fn alpha_label(ctx: &CouplingContext) -> String {
    match ctx.alpha {
        crate::spectral::Coupling::Finite(a) => format!("{a:.16e}"),
        crate::spectral::Coupling::Infinite => "inf".into(),
    }
}
