mod common;

use std::f64::consts::PI;

use hyptrace::contour::winding_number;
use hyptrace::green::green_sum;
use hyptrace::orbits::{enumerate_orbit, EnumerationOptions, GroupSpec, OrbitSpectrum};
use hyptrace::special::{denom_zero, psi};
use hyptrace::spectral::CouplingContext;
use hyptrace::testfn::{make_cauchy_h, TestFunction};
use hyptrace::trace::{diffractive_sum, identity_term, select_nu, select_sigma, AxisResolution};
use num_complex::Complex64;

/// `((-1)^k / (2 pi i k)) int h'(rho) (beta G(rho) / D(rho))^k drho` on
/// `Im rho = -sigma` by the trapezoid rule (step 0.05 on `[-80, 80]`).
fn direct_term(h: &TestFunction, ctx: &CouplingContext, orbit: &OrbitSpectrum, sigma: f64, k: i32) -> f64 {
    let step = 0.05;
    let n = (80.0 / step) as i64;
    let mut sum = Complex64::new(0.0, 0.0);
    for i in -n..=n {
        let rho = Complex64::new(i as f64 * step, -sigma);
        let d = 1.0 + ctx.m as f64 * ctx.beta * psi(0.5 + Complex64::i() * rho).unwrap();
        let g = ctx.beta * green_sum(orbit, rho).unwrap().value;
        let w = if i.abs() == n { 0.5 } else { 1.0 };
        sum += w * h.derivative(rho) * (g / d).powi(k);
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (sign / (2.0 * PI * Complex64::i() * k as f64) * sum * step).re
}

fn check_orders(group: GroupSpec, radius: f64, beta: f64) {
    let orbit = enumerate_orbit(&group, radius, 1e-8, &EnumerationOptions::default()).unwrap();
    let ctx = CouplingContext::from_beta(beta, orbit.stabilizer_order, 0.0).unwrap();
    let sigma = select_sigma(&ctx, &orbit, None).unwrap().sigma;
    let nu = select_nu(&ctx, sigma);
    let h = make_cauchy_h(2.0, 3).unwrap();
    let diff = diffractive_sum(&h, &ctx, &orbit, 3, nu, sigma, AxisResolution::default()).unwrap();
    for term in &diff.terms {
        let direct = direct_term(&h, &ctx, &orbit, sigma, term.k as i32);
        let err = (direct - term.value).abs();
        assert!(
            err <= 1e-9 + term.quad_error + term.pruned,
            "{} k = {}: nested {} vs direct {direct} (err {err:e})",
            group.label,
            term.k,
            term.value
        );
    }
}

#[test]
fn diffractive_orders_match_direct_line_integrals_cyclic() {
    check_orders(GroupSpec::hyperbolic_cyclic(1.0), 30.0, 5.0);
}

#[test]
fn diffractive_orders_match_direct_line_integrals_bolza() {
    check_orders(GroupSpec::bolza(), 6.0, -3.0);
}

#[test]
fn identity_shift_residue_sign_is_pinned_by_winding() {
    let beta = 5.0;
    let ctx = CouplingContext::from_beta(beta, 1, 0.0).unwrap();
    let v = denom_zero(1, beta).unwrap().v;
    // D has a single simple zero inside a small square around -i v
    let d = |rho: Complex64| psi(0.5 + Complex64::i() * rho).map(|p| 1.0 + beta * p);
    let r = 0.1;
    let square = [(-r, -r), (r, -r), (r, r), (-r, r)].map(|(x, y)| Complex64::new(x, y - v));
    assert_eq!(winding_number(d, &square, 16).unwrap(), 1);
    let h = make_cauchy_h(2.5, 3).unwrap();
    let deep = identity_term(&h, &ctx, v + 0.2).unwrap();
    let shallow = identity_term(&h, &ctx, v - 0.2).unwrap();
    let residue = h.eval(Complex64::new(0.0, -v)).re;
    assert!(
        (deep - shallow - residue).abs() < 1e-10,
        "{deep} - {shallow} vs {residue}"
    );
}
