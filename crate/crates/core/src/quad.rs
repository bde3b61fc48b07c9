//! Quadrature primitives: adaptive Gauss-Kronrod (G10/K21) for complex
//! integrands on finite intervals, Gauss-Legendre rules and compensated sums.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Result of an integration with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

/// One G10/K21 panel on `[a, b]`. Returns the Kronrod value and
/// `|K21 - G10|` as a (pessimistic) error estimate.
pub fn gk21<F>(f: &F, a: f64, b: f64) -> (Complex64, f64)
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[i];
        if i % 2 == 1 {
            gauss += s * WG[i / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).norm())
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive G10/K21 quadrature of a complex integrand.
///
/// The interval is first split into `initial` equal panels (useful for
/// oscillatory integrands), then the panel with the largest error is
/// bisected until `error <= max(abs_tol, rel_tol * |value|)` or
/// `max_panels` is reached. The final estimate is returned either way;
/// callers compare `error` against their own budget.
pub fn integrate<F>(f: F, a: f64, b: f64, initial: usize, abs_tol: f64, rel_tol: f64, max_panels: usize) -> QuadResult
where
    F: Fn(f64) -> Complex64,
{
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(initial * 4);
    let width = (b - a) / initial as f64;
    let mut evals = 0;
    for i in 0..initial {
        let lo = a + width * i as f64;
        let hi = if i + 1 == initial { b } else { lo + width };
        let (value, error) = gk21(&f, lo, hi);
        evals += 21;
        heap.push(Panel {
            a: lo,
            b: hi,
            value,
            error,
        });
    }
    // running totals drive the loop; the exact ordered sum confirms it
    let (mut run_value, mut run_error) = totals(&heap);
    loop {
        let done = heap.len() >= max_panels || run_error <= abs_tol.max(rel_tol * run_value.norm());
        if done {
            let (value, error) = totals(&heap);
            if heap.len() >= max_panels || error <= abs_tol.max(rel_tol * value.norm()) {
                return QuadResult { value, error, evals };
            }
            run_value = value;
            run_error = error;
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            run_error -= worst.error;
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        run_value -= worst.value;
        run_error -= worst.error;
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk21(&f, lo, hi);
            evals += 21;
            run_value += value;
            run_error += error;
            heap.push(Panel {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (Complex64, f64) {
    // deterministic order: sort panels by left endpoint before summing
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap_or(Ordering::Equal));
    let mut sum = CompensatedSum::default();
    let mut err = 0.0;
    for p in panels {
        sum.add(p.value);
        err += p.error;
    }
    (sum.value(), err)
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on the three-term
/// recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A fixed composite Gauss-Legendre rule: ordered nodes and weights on a
/// list of panels.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    /// `breaks` must be increasing; each consecutive pair is one panel
    /// carrying an `order`-point Gauss-Legendre rule.
    pub fn from_breaks(breaks: &[f64], order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * breaks.len());
        let mut weights = Vec::with_capacity(order * breaks.len());
        for pair in breaks.windows(2) {
            let c = 0.5 * (pair[0] + pair[1]);
            let h = 0.5 * (pair[1] - pair[0]);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(c + h * xi);
                weights.push(h * wi);
            }
        }
        Self { nodes, weights }
    }

    /// Uniform panels of width at most `width` on `[a, b]`.
    pub fn uniform(a: f64, b: f64, width: f64, order: usize) -> Self {
        let panels = (((b - a) / width).ceil() as usize).max(1);
        let breaks: Vec<f64> = (0..=panels).map(|i| a + (b - a) * i as f64 / panels as f64).collect();
        Self::from_breaks(&breaks, order)
    }

    /// Panels of width `w0` near `a` growing geometrically by `growth`
    /// until `b`.
    pub fn graded(a: f64, b: f64, w0: f64, growth: f64, order: usize) -> Self {
        let mut breaks = vec![a];
        let mut w = w0;
        let mut x = a;
        while x < b {
            x = (x + w).min(b);
            breaks.push(x);
            w *= growth;
        }
        Self::from_breaks(&breaks, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        let mut sum = CompensatedSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum.add(f(*x) * *w);
        }
        sum.value()
    }
}

/// Fixed G10/K21 panels with explicit nodes, so integrand values can be
/// computed once and reused (for instance against many kernels).
/// Nodes are stored panel by panel, 21 per panel.
#[derive(Debug, Clone)]
pub struct KronrodRule {
    pub nodes: Vec<f64>,
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
}

pub const KRONROD_POINTS: usize = 21;

impl KronrodRule {
    /// One G10/K21 panel per consecutive pair of increasing `breaks`.
    pub fn from_breaks(breaks: &[f64]) -> Self {
        let n = KRONROD_POINTS * breaks.len().saturating_sub(1);
        let mut rule = Self {
            nodes: Vec::with_capacity(n),
            kronrod: Vec::with_capacity(n),
            gauss: Vec::with_capacity(n),
        };
        for pair in breaks.windows(2) {
            let c = 0.5 * (pair[0] + pair[1]);
            let h = 0.5 * (pair[1] - pair[0]);
            rule.push(c, h * WGK[10], 0.0);
            for i in 0..10 {
                let wg = if i % 2 == 1 { h * WG[i / 2] } else { 0.0 };
                rule.push(c - h * XGK[i], h * WGK[i], wg);
                rule.push(c + h * XGK[i], h * WGK[i], wg);
            }
        }
        rule
    }

    fn push(&mut self, x: f64, wk: f64, wg: f64) {
        self.nodes.push(x);
        self.kronrod.push(wk);
        self.gauss.push(wg);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Kronrod value and the sum over panels of `|K21 - G10|` for integrand
    /// values given at [`KronrodRule::nodes`].
    pub fn combine(&self, values: &[Complex64]) -> (Complex64, f64) {
        assert_eq!(values.len(), self.nodes.len());
        let mut total = CompensatedSum::default();
        let mut error = 0.0;
        for p in 0..self.nodes.len() / KRONROD_POINTS {
            let range = p * KRONROD_POINTS..(p + 1) * KRONROD_POINTS;
            let mut k = Complex64::new(0.0, 0.0);
            let mut g = Complex64::new(0.0, 0.0);
            for i in range {
                k += values[i] * self.kronrod[i];
                g += values[i] * self.gauss[i];
            }
            total.add(k);
            error += (k - g).norm();
        }
        (total.value(), error)
    }
}

/// Breaks on `[0, end]`: first width `w0`, growing by `growth` per panel
/// up to `cap`.
pub fn graded_breaks(end: f64, w0: f64, growth: f64, cap: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut x = 0.0;
    let mut w = w0.min(cap);
    while x < end {
        x = (x + w).min(end);
        breaks.push(x);
        w = (w * growth).min(cap);
    }
    breaks
}

/// Neumaier-compensated accumulator for complex values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Compensated sum of real values in the given order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for v in values {
        neumaier(&mut s, &mut c, v);
    }
    s + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_matches_adaptive() {
        let breaks = graded_breaks(3.0, 0.1, 1.3, 0.5);
        assert_eq!(*breaks.last().unwrap(), 3.0);
        let rule = KronrodRule::from_breaks(&breaks);
        let f = |x: f64| Complex64::new(x.cos(), (2.0 * x).exp().sqrt());
        let vals: Vec<Complex64> = rule.nodes.iter().map(|&x| f(x)).collect();
        let (v, e) = rule.combine(&vals);
        let exact = Complex64::new(3f64.sin(), 3f64.exp() - 1.0);
        assert!((v - exact).norm() < 1e-13);
        assert!(e < 1e-9);
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn kronrod_is_exact_for_degree_31() {
        let (v, _) = gk21(&|x: f64| c(x.powi(30) + x.powi(31)), -1.0, 1.0);
        assert!((v.re - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_weights_and_moments() {
        for n in [1, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 2;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((m - 2.0 / (deg as f64 + 1.0)).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // int_0^1 1/(1e-4 + x^2) dx = 100 atan(100)
        let r = integrate(|x| c(1.0 / (1e-4 + x * x)), 0.0, 1.0, 1, 1e-12, 1e-13, 10_000);
        assert!((r.value.re - 100.0 * 100f64.atan()).abs() < 1e-9);
    }

    #[test]
    fn composite_graded_integrates_exponential() {
        let rule = CompositeRule::graded(0.0, 40.0, 0.25, 1.3, 16);
        let v = rule.apply(|x| c((-x).exp()));
        assert!((v.re - (1.0 - (-40f64).exp())).abs() < 1e-14);
    }
}
