mod common;

use hyptrace::orbits::{enumerate_orbit, EnumerationOptions, GroupSpec};

fn compare(group: &GroupSpec, radius: f64, depth: usize) {
    let gens: Vec<[f64; 4]> = group.generators.iter().map(|g| g.entries()).collect();
    let brute: Vec<f64> = common::brute_force_lengths(&gens, (group.z0.x(), group.z0.y()), depth)
        .into_iter()
        .filter(|&d| d <= radius)
        .collect();
    let expected = common::cluster(&brute, 1e-8);
    let orbit = enumerate_orbit(group, radius, 1e-8, &EnumerationOptions::default()).unwrap();
    assert_eq!(orbit.lengths.len(), expected.len(), "{}: distinct lengths", group.label);
    for (l, (d, n)) in orbit.lengths.iter().zip(&expected) {
        assert!(
            (l.length - d).abs() < 1e-9,
            "{}: length {} vs {d}",
            group.label,
            l.length
        );
        assert_eq!(l.mult, *n, "{}: multiplicity at {d}", group.label);
    }
}

#[test]
fn cyclic_group_matches_word_search_to_depth_eight() {
    let ell = 0.9;
    compare(&GroupSpec::hyperbolic_cyclic(ell), 8.5 * ell, 8);
}

#[test]
fn bolza_group_matches_word_search_to_depth_six() {
    let group = GroupSpec::bolza();
    compare(&group, 6.0, 6);
    // the minimal length is twice the inradius of the octagon
    let orbit = enumerate_orbit(&group, 4.0, 1e-8, &EnumerationOptions::default()).unwrap();
    let expected = 2.0 * (1.0 + 2f64.sqrt()).acosh();
    assert!((orbit.tau0 - expected).abs() < 1e-10);
    assert_eq!(orbit.lengths[0].mult, 8);
}

#[test]
fn bundled_group_file_matches_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/bolza.toml");
    let group = hyptrace::io::read_group(std::path::Path::new(path), 1e-9).unwrap();
    let builtin = GroupSpec::bolza();
    for (a, b) in group.generators.iter().zip(&builtin.generators) {
        assert_eq!(a.entries(), b.entries());
    }
}
