//! Admissible test functions: even, analytic in a strip `|Im rho| <= sigma`
//! and decaying like `(1 + |Re rho|)^{-2-delta}` there.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::contour::segment_integral;
use crate::eigen::SafeHeights;
use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{s_spectral, CouplingContext, Spectrum};

type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// A test function with its derivative and the strip/decay parameters it
/// is certified for.
#[derive(Clone)]
pub struct TestFunction {
    value: ComplexFn,
    derivative: ComplexFn,
    pub sigma: f64,
    pub delta: f64,
    pub tag: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("tag", &self.tag)
            .field("sigma", &self.sigma)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F, D>(value: F, derivative: D, sigma: f64, delta: f64, tag: impl Into<String>) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        D: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            sigma,
            delta,
            tag: tag.into(),
        }
    }

    pub fn eval(&self, rho: Complex64) -> Complex64 {
        (self.value)(rho)
    }

    pub fn derivative(&self, rho: Complex64) -> Complex64 {
        (self.derivative)(rho)
    }

    /// Errors unless the certified strip covers `|Im rho| <= sigma`.
    pub fn require_strip(&self, sigma: f64) -> Result<()> {
        if self.sigma < sigma {
            return Err(Error::TestFunction(format!(
                "{}: certified strip half-width {} is narrower than the required {sigma}",
                self.tag, self.sigma
            )));
        }
        Ok(())
    }

    /// Bound on `int_{|x| > x0} |h'(x - i height)| dx` from the certified
    /// decay, using the value at `x0` as the envelope constant.
    pub fn derivative_tail(&self, height: f64, x0: f64) -> f64 {
        let at = |x: f64| {
            self.derivative(Complex64::new(x, -height)).norm() + self.derivative(Complex64::new(-x, -height)).norm()
        };
        // |h'| ~ C (1+x)^{-3-delta}; integral beyond x0 is (1+x0) |h'(x0)| / (2+delta)
        let decay = 2.0 + self.delta.max(0.0);
        2.0 * at(x0) * (1.0 + x0) / decay
    }

    /// Bound on `int_{|x| > x0} |h(x - i height)| dx`, as
    /// [`TestFunction::derivative_tail`] with `|h| ~ C (1+x)^{-2-delta}`.
    pub fn value_tail(&self, height: f64, x0: f64) -> f64 {
        let at = |x: f64| self.eval(Complex64::new(x, -height)).norm() + self.eval(Complex64::new(-x, -height)).norm();
        let decay = 1.0 + self.delta.max(0.0);
        2.0 * at(x0) * (1.0 + x0) / decay
    }
}

/// `h(rho) = (rho^2 + a^2)^{-power}`, certified for `sigma = a (1 - 1e-3)`
/// and `delta = 2 power - 2.5`.
pub fn make_cauchy_h(a: f64, power: u32) -> Result<TestFunction> {
    if !(a > 0.0) || power < 2 {
        return Err(Error::TestFunction(format!(
            "Cauchy family needs a > 0 and power >= 2, got a = {a}, power = {power}"
        )));
    }
    let a2 = a * a;
    let p = power as i32;
    Ok(TestFunction::new(
        move |r: Complex64| (r * r + a2).powi(-p),
        move |r: Complex64| -2.0 * p as f64 * r * (r * r + a2).powi(-p - 1),
        a * (1.0 - 1e-3),
        2.0 * power as f64 - 2.5,
        format!("cauchy(a={a},p={power})"),
    ))
}

/// Verdict of [`membership_check`] with per-property details.
#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub passed: bool,
    pub even: bool,
    pub conjugate_symmetric: bool,
    pub decay: bool,
    pub analytic: bool,
    /// Worst residuals: evenness, conjugate symmetry, envelope growth
    /// factor, Cauchy-Riemann, Cauchy integral formula.
    pub residuals: [f64; 5],
}

/// Deterministic low-discrepancy points in `[0, 1)^2`.
fn kronecker(n: usize) -> impl Iterator<Item = (f64, f64)> {
    const A1: f64 = 0.754_877_666_246_692_7;
    const A2: f64 = 0.569_840_290_998_053_2;
    (1..=n).map(|i| ((0.5 + A1 * i as f64).fract(), (0.5 + A2 * i as f64).fract()))
}

const SYMMETRY_TOL: f64 = 1e-12;
const CR_TOL: f64 = 1e-6;
const CAUCHY_TOL: f64 = 1e-6;
/// Allowed growth of `|h| (1 + x)^{2 + delta}` from `[1, 10^{3/2}]` to
/// `[10^{3/2}, 10^3]`.
const ENVELOPE_SLACK: f64 = 4.0;
const PROBE_HALF_WIDTH: f64 = 20.0;

/// Samples the defining properties of the class for `(sigma, delta)`.
///
/// Analyticity is probed twice: Cauchy-Riemann residuals at interior points
/// and the Cauchy integral formula at the centres of boxes tiling
/// `[-20, 20] x [-sigma, sigma]` (upper and lower halves separately, so
/// conjugate pole pairs cannot cancel).
pub fn membership_check(h: &TestFunction, sigma: f64, delta: f64, n_samples: usize) -> MembershipReport {
    let mut res = [0.0f64; 5];
    let point = |u: f64, v: f64| Complex64::new(PROBE_HALF_WIDTH * (2.0 * u - 1.0), sigma * (2.0 * v - 1.0));

    for (u, v) in kronecker(n_samples) {
        let z = point(u, v);
        let f = h.eval(z);
        let scale = f.norm().max(1e-300);
        res[0] = res[0].max((f - h.eval(-z)).norm() / scale);
        res[1] = res[1].max((f.conj() - h.eval(z.conj())).norm() / scale);
        // interior points only for the finite differences
        let zi = Complex64::new(z.re, 0.999 * z.im);
        let step = 1e-5;
        let fx = (h.eval(zi + step) - h.eval(zi - step)) / (2.0 * step);
        let i = Complex64::i();
        let fy = (h.eval(zi + i * step) - h.eval(zi - i * step)) / (2.0 * step);
        let cr_scale = fx.norm().max(h.eval(zi).norm()).max(1e-300);
        res[3] = res[3].max((fy - i * fx).norm() / cr_scale);
    }

    // decay envelope on the strip edges and the real axis
    let grid = 2000;
    let env = |x: f64| {
        [-sigma, 0.0, sigma]
            .iter()
            .map(|&y| h.eval(Complex64::new(x, y)).norm())
            .fold(0.0, f64::max)
            * (1.0 + x).powf(2.0 + delta)
    };
    let mut near = 0.0f64;
    let mut far = 0.0f64;
    for k in 0..=grid {
        let x = 10f64.powf(3.0 * k as f64 / grid as f64);
        let e = env(x);
        if x <= 10f64.powf(1.5) {
            near = near.max(e);
        } else {
            far = far.max(e);
        }
    }
    res[2] = if near > 0.0 { far / near } else { 0.0 };
    if !res[2].is_finite() {
        res[2] = f64::INFINITY;
    }

    // Cauchy integral formula on boxes
    let boxes = (PROBE_HALF_WIDTH as usize).max(1);
    let width = 2.0 * PROBE_HALF_WIDTH / boxes as f64;
    for b in 0..boxes {
        let x0 = -PROBE_HALF_WIDTH + width * b as f64;
        for (y0, y1) in [(-sigma, 0.0), (0.0, sigma)] {
            let corners = [
                Complex64::new(x0, y0),
                Complex64::new(x0 + width, y0),
                Complex64::new(x0 + width, y1),
                Complex64::new(x0, y1),
            ];
            let centre = Complex64::new(x0 + 0.5 * width, 0.5 * (y0 + y1));
            let mut total = Complex64::new(0.0, 0.0);
            let scale = corners
                .iter()
                .map(|&z| h.eval(z).norm())
                .fold(h.eval(centre).norm(), f64::max);
            for i in 0..4 {
                let (a, b) = (corners[i], corners[(i + 1) % 4]);
                total += segment_integral(|z| h.eval(z) / (z - centre), a, b, 4, 1e-13 * scale, 1e-12).0;
            }
            let formula = total / (2.0 * PI * Complex64::i());
            let r = (formula - h.eval(centre)).norm() / scale.max(1e-300);
            res[4] = res[4].max(if r.is_finite() { r } else { f64::INFINITY });
        }
    }

    let even = res[0] <= SYMMETRY_TOL;
    let conjugate_symmetric = res[1] <= SYMMETRY_TOL;
    let decay = res[2] <= ENVELOPE_SLACK;
    let analytic = res[3] <= CR_TOL && res[4] <= CAUCHY_TOL;
    MembershipReport {
        passed: even && conjugate_symmetric && decay && analytic,
        even,
        conjugate_symmetric,
        decay,
        analytic,
        residuals: res,
    }
}

/// Parameters of the dyadic pole-cluster test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixParams {
    pub eps: f64,
    /// `eps / 10`.
    pub omega: f64,
    pub sigma: f64,
    pub sigma0: f64,
    /// Selected heights `T_{N(k)}`.
    pub heights: Vec<f64>,
    /// Dyadic indices `n(k)` with `2^{n-1} <= T`, `T + T^omega <= 2^{n+2}`.
    pub n: Vec<i32>,
}

impl AppendixParams {
    /// Greedily selects heights from `candidates` (ascending) whose dyadic
    /// index `n = floor(log2 T) + 1` exceeds the previous one by more than 3.
    /// `sigma0` defaults to `sigma + 1`.
    pub fn select(eps: f64, sigma: f64, sigma0: Option<f64>, candidates: &[f64]) -> Result<Self> {
        let mut heights = Vec::new();
        let mut n = Vec::new();
        for &t in candidates {
            if !(t >= 1.0) {
                continue;
            }
            let k = t.log2().floor() as i32 + 1;
            if n.last().is_none_or(|&prev| k > prev + 3) {
                heights.push(t);
                n.push(k);
            }
        }
        Self::new(eps, sigma, sigma0.unwrap_or(sigma + 1.0), heights, n)
    }

    /// Validates an explicit sequence.
    pub fn new(eps: f64, sigma: f64, sigma0: f64, heights: Vec<f64>, n: Vec<i32>) -> Result<Self> {
        let fail = |what: String| Err(Error::TestFunction(format!("invalid dyadic sequence: {what}")));
        if !(eps > 0.0 && eps < 1.0) {
            return fail(format!("eps = {eps} must lie in (0, 1)"));
        }
        if !(sigma0 > sigma) || !(sigma > 0.0) {
            return fail(format!("need sigma0 = {sigma0} > sigma = {sigma} > 0"));
        }
        if heights.is_empty() || heights.len() != n.len() {
            return fail("heights and indices must be non-empty and paired".into());
        }
        let omega = eps / 10.0;
        for (k, (&t, &nk)) in heights.iter().zip(&n).enumerate() {
            if nk < 1 || 2f64.powi(nk - 1) > t || t + t.powf(omega) > 2f64.powi(nk + 2) {
                return fail(format!("T = {t} does not fit dyadic index n = {nk}"));
            }
            if k > 0 && nk <= n[k - 1] + 3 {
                return fail(format!(
                    "n({}) = {nk} must exceed n({}) + 3 = {}",
                    k + 1,
                    k,
                    n[k - 1] + 3
                ));
            }
        }
        Ok(Self {
            eps,
            omega,
            sigma,
            sigma0,
            heights,
            n,
        })
    }

    /// Pole centres `T + T^omega` with their block weights `2^{-n(2+eps/2)}`.
    fn blocks(&self) -> Vec<(f64, f64)> {
        self.heights
            .iter()
            .zip(&self.n)
            .map(|(&t, &nk)| (t + t.powf(self.omega), 2f64.powf(-nk as f64 * (2.0 + 0.5 * self.eps))))
            .collect()
    }
}

/// The test function with fourth-order poles at `+-(T + T^omega) +- i sigma0`
/// for each selected height, truncated to the supplied heights.
pub fn appendix_h_eps(p: &AppendixParams) -> TestFunction {
    let blocks = p.blocks();
    let s0 = p.sigma0;
    let poles = move |rho: Complex64, power: i32| {
        let mut sum = Complex64::new(0.0, 0.0);
        for &(c, w) in &blocks {
            let mut block = Complex64::new(0.0, 0.0);
            for pole in [
                Complex64::new(c, s0),
                Complex64::new(c, -s0),
                Complex64::new(-c, -s0),
                Complex64::new(-c, s0),
            ] {
                block += (rho - pole).powi(-power);
            }
            sum += block * w;
        }
        sum
    };
    let value = poles.clone();
    TestFunction::new(
        move |r| value(r, 4),
        move |r| -4.0 * poles(r, 5),
        p.sigma,
        0.5 * p.eps,
        format!("appendix(eps={})", p.eps),
    )
}

/// Points on the vertical segment `[T - i sigma, T]` used for uniform
/// statements.
pub const SEGMENT_POINTS: usize = 64;

/// `min Re h'(rho)` over `SEGMENT_POINTS` points of `[T - i sigma, T]` for
/// each selected height.
pub fn segment_min_re_derivative(h: &TestFunction, p: &AppendixParams) -> Vec<(f64, f64)> {
    p.heights
        .iter()
        .map(|&t| {
            let m = (0..SEGMENT_POINTS)
                .map(|i| {
                    let w = p.sigma * i as f64 / (SEGMENT_POINTS - 1) as f64;
                    h.derivative(Complex64::new(t, -w)).re
                })
                .fold(f64::INFINITY, f64::min);
            (t, m)
        })
        .collect()
}

/// Per-height result of [`compbound_diagnostic`].
#[derive(Debug, Clone, Serialize)]
pub struct CompboundRow {
    pub height: f64,
    pub integral: f64,
    /// `integral / T^{2 + eps}`.
    pub ratio: f64,
    /// Set when the segment met a pole of `S` and was skipped.
    pub skipped: Option<String>,
}

/// `int_{[T - i sigma, T]} |log |S|| |drho|` in spectral form for each
/// height.
pub fn compbound_diagnostic(
    ctx: &CouplingContext,
    spec: &Spectrum,
    heights: &SafeHeights,
    sigma: f64,
    eps: f64,
) -> Vec<CompboundRow> {
    heights
        .values
        .iter()
        .map(|&t| {
            let failed = std::cell::Cell::new(None::<String>);
            let r = quad::integrate(
                |w| match s_spectral(ctx, spec, Complex64::new(t, -w), 1e-8) {
                    Ok(s) => Complex64::new(s.value.norm().ln().abs(), 0.0),
                    Err(e) => {
                        failed.set(Some(e.to_string()));
                        Complex64::new(0.0, 0.0)
                    }
                },
                0.0,
                sigma,
                8,
                1e-10,
                1e-10,
                5_000,
            );
            let integral = r.value.re;
            CompboundRow {
                height: t,
                integral,
                ratio: integral / t.powf(2.0 + eps),
                skipped: failed.take(),
            }
        })
        .collect()
}
