mod common;

use std::f64::consts::PI;

use hyptrace::eigen::{solve_new_eigs, EigenKind, PerturbedRow};
use hyptrace::green::free_green;
use hyptrace::hyperbolic::{dist, HPoint, MoebiusMap};
use hyptrace::io;
use hyptrace::orbits::{OrbitLength, OrbitSpectrum};
use hyptrace::special::{digamma, psi, trigamma};
use hyptrace::spectral::{
    make_context, resolvent_difference, rho_of_lambda, s_spectral_lambda, BetaConvention, Coupling, Spectrum,
    SpectrumEntry,
};
use hyptrace::testfn::{make_cauchy_h, membership_check};
use hyptrace::trace::spectral_side;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(20_251_015),
        failure_persistence: None,
        ..Config::default()
    }
}

fn upper() -> impl Strategy<Value = HPoint> {
    (-4.0..4.0f64, 0.01..6.0f64).prop_map(|(x, y)| HPoint::new(x, y).unwrap())
}

fn isometry() -> impl Strategy<Value = MoebiusMap> {
    (-2.0..2.0f64, -3.0..3.0f64, 0.0..(2.0 * PI)).prop_map(|(s, l, t)| {
        MoebiusMap::new(1.0, s, 0.0, 1.0, 1e-12)
            .unwrap()
            .compose(&MoebiusMap::translation(l))
            .compose(&MoebiusMap::rotation(t))
    })
}

/// Strictly increasing spectrum with positive weights, starting at 0.
fn spectrum(max_len: usize) -> impl Strategy<Value = Spectrum> {
    prop::collection::vec((0.05..3.0f64, 1u64..4, 0.01..1.0f64), 1..max_len).prop_map(|rows| {
        let mut lambda = 0.0;
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, (gap, mult, weight))| {
                if i > 0 {
                    lambda += gap;
                }
                SpectrumEntry { lambda, mult, weight }
            })
            .collect();
        Spectrum::new(entries, 4.0 * PI).unwrap()
    })
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(config(512))]

    #[test]
    fn distance_is_a_metric(z in upper(), w in upper(), v in upper()) {
        let d = dist(z, w);
        prop_assert!(d >= 0.0);
        prop_assert!((d - dist(w, z)).abs() <= 1e-12 * d.max(1.0));
        prop_assert!(dist(z, v) <= d + dist(w, v) + 1e-12 * dist(z, v).max(1.0));
    }

    #[test]
    fn isometries_preserve_distance(z in upper(), w in upper(), g in isometry()) {
        let d = dist(z, w);
        prop_assert!((dist(g.apply(z), g.apply(w)) - d).abs() <= 1e-10 * d.max(1.0));
        prop_assert!((g.det() - 1.0).abs() < 1e-12 * g.entries().iter().map(|e| e * e).sum::<f64>());
    }

    #[test]
    fn digamma_recurrence_and_symmetry(x in -8.0..8.0f64, y in 0.05..8.0f64) {
        let s = Complex64::new(x, y);
        let a = digamma(s + 1.0).unwrap();
        let b = digamma(s).unwrap() + s.inv();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        prop_assert!((digamma(s.conj()).unwrap() - digamma(s).unwrap().conj()).norm() <= 1e-13 * a.norm().max(1.0));
        let t = trigamma(s).unwrap();
        let tb = trigamma(s + 1.0).unwrap() + s.powi(-2);
        prop_assert!((t - tb).norm() <= 1e-11 * t.norm().max(1.0));
        prop_assert!((psi(s).unwrap() * 2.0 * PI - digamma(s).unwrap()).norm() <= 1e-14 * a.norm().max(1.0));
    }

    #[test]
    fn resolvent_identity_holds(spec in spectrum(40), re in -5.0..60.0f64, im in 0.05..3.0f64) {
        let lambda = Complex64::new(re, im);
        let lhs = -resolvent_difference(&spec, lambda, Complex64::i());
        let mut rhs = Complex64::new(0.0, 0.0);
        for e in spec.entries() {
            rhs += e.weight * e.mult as f64 / ((e.lambda - lambda) * (e.lambda - Complex64::i()));
        }
        rhs *= Complex64::i() - lambda;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
    }

    #[test]
    fn cauchy_functions_are_admissible(a in 1.0..5.0f64, p in 2u32..5) {
        let h = make_cauchy_h(a, p).unwrap();
        let sigma = 0.9 * a;
        prop_assert!(membership_check(&h, sigma, 0.5, 64).passed);
        let z = Complex64::new(a * 0.7, 0.3 * sigma);
        prop_assert!((h.eval(z) - h.eval(-z)).norm() <= 1e-14 * h.eval(z).norm());
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn zeros_interlace_and_are_simple(spec in spectrum(30), alpha in prop_oneof![0.2..5.0f64, -5.0..-0.2f64]) {
        let ctx = make_context(Coupling::Finite(alpha), 1, None, BetaConvention::Derivation).unwrap();
        let p = solve_new_eigs(&ctx, &spec, f64::INFINITY).unwrap();
        let poles: Vec<f64> = spec.entries().iter().map(|e| e.lambda).collect();
        let zeros = p.zeros();
        prop_assert_eq!(zeros.len(), poles.len());
        for pair in poles.windows(2) {
            prop_assert_eq!(zeros.iter().filter(|&&z| z > pair[0] && z < pair[1]).count(), 1);
        }
        for &z in &zeros {
            let s = s_spectral_lambda(&ctx, &spec, Complex64::new(z, 0.0), 0.0).unwrap().value.re;
            prop_assert!(s.abs() < 1e-6 * (1.0 + z.abs()), "S({}) = {}", z, s);
            prop_assert!(common::s_direct(1.0 / alpha, &spec, z).abs() < 1e-6 * (1.0 + z.abs()));
        }
        // inherited copies carry the multiplicity left after one new zero
        let inherited: u64 = p.inherited.iter().map(|&(_, m)| m).sum();
        let expected: u64 = spec.entries().iter().map(|e| e.mult - 1).sum();
        prop_assert_eq!(inherited, expected);
    }

    #[test]
    fn multiplicity_expansion_leaves_the_spectral_sum_unchanged(
        spec in spectrum(30),
        alpha in prop_oneof![0.2..5.0f64, -5.0..-0.2f64],
        a in 1.5..4.0f64,
    ) {
        let ctx = make_context(Coupling::Finite(alpha), 1, None, BetaConvention::Derivation).unwrap();
        let p = solve_new_eigs(&ctx, &spec, f64::INFINITY).unwrap();
        let h = make_cauchy_h(a, 3).unwrap();
        let hv = |l: f64| h.eval(rho_of_lambda(l)).re;
        let expanded = spectral_side(&h, &spec, &p).unwrap().value;
        let distinct: f64 = p.zeros().iter().map(|&z| hv(z)).sum::<f64>()
            - spec.entries().iter().map(|e| hv(e.lambda)).sum::<f64>();
        prop_assert!((expanded - distinct).abs() <= 1e-12 * (1.0 + distinct.abs()), "{} vs {}", expanded, distinct);
    }

    #[test]
    fn green_function_is_conjugate_symmetric(x in 0.0..15.0f64, sigma in 0.6..4.0f64, d in 0.05..8.0f64) {
        let rho = Complex64::new(x, -sigma);
        let a = free_green(rho, d).unwrap();
        let b = free_green(-rho.conj(), d).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-13 * a.norm());
        let (oracle, _) = common::green_trapezoid(rho, d);
        prop_assert!((a - oracle).norm() <= 1e-8 * oracle.norm());
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn spectrum_csv_round_trips_bit_exactly(
        rows in prop::collection::vec((finite(), 1u64..1_000_000, finite()), 0..40),
        area in finite(),
    ) {
        let mut lambdas: Vec<f64> = rows.iter().map(|r| r.0.abs()).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let entries: Vec<SpectrumEntry> = lambdas
            .iter()
            .zip(&rows)
            .map(|(&lambda, r)| SpectrumEntry { lambda, mult: r.1, weight: r.2.abs() })
            .collect();
        let area = area.abs().max(1e-300);
        let spec = Spectrum::new(entries, area).unwrap();
        let text = io::spectrum_to_csv(&spec);
        let back = io::parse_spectrum(&text, "mem").unwrap();
        prop_assert_eq!(back.area().to_bits(), spec.area().to_bits());
        for (a, b) in back.entries().iter().zip(spec.entries()) {
            prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
            prop_assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            prop_assert_eq!(a.mult, b.mult);
        }
        prop_assert_eq!(io::spectrum_to_csv(&back), text);
    }

    #[test]
    fn perturbed_and_table_csv_round_trip(
        rows in prop::collection::vec((0u8..3, finite(), 1u64..9, finite(), finite()), 0..30),
        table in prop::collection::vec(prop::collection::vec(finite(), 3), 0..20),
    ) {
        let rows: Vec<PerturbedRow> = rows
            .into_iter()
            .map(|(k, lambda, mult, lo, hi)| PerturbedRow {
                kind: [EigenKind::New, EigenKind::Inherited, EigenKind::Ground][k as usize],
                lambda,
                mult,
                bracket: (lo, hi),
            })
            .collect();
        let text = io::perturbed_to_csv(&rows);
        let back = io::parse_perturbed(&text, "mem").unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.kind, b.kind);
            prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
            prop_assert_eq!(a.bracket.0.to_bits(), b.bracket.0.to_bits());
            prop_assert_eq!(a.bracket.1.to_bits(), b.bracket.1.to_bits());
        }
        let csv = io::table_to_csv(&["a", "b", "c"], &table);
        let (header, parsed) = io::parse_table(&csv, "mem").unwrap();
        prop_assert_eq!(header, vec!["a", "b", "c"]);
        prop_assert_eq!(parsed.len(), table.len());
        for (r, s) in parsed.iter().zip(&table) {
            for (x, y) in r.iter().zip(s) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn orbit_csv_round_trips(lengths in prop::collection::btree_set(1u64..u64::MAX / 2, 0..30), m in 1u64..5) {
        let lengths: Vec<OrbitLength> = lengths
            .iter()
            .map(|&b| OrbitLength { length: (b as f64) * 1e-15 + 1e-3, mult: 1 + b % 7 })
            .collect::<Vec<_>>();
        let mut dedup: Vec<OrbitLength> = Vec::new();
        for l in lengths {
            if dedup.last().is_none_or(|p| l.length > p.length) {
                dedup.push(l);
            }
        }
        let radius = dedup.last().map_or(1.0, |l| l.length);
        let orbit = OrbitSpectrum::from_lengths(dedup, m, radius).unwrap();
        let back = io::parse_orbit(&io::orbit_to_csv(&orbit), "mem").unwrap();
        prop_assert_eq!(back, orbit);
    }
}
