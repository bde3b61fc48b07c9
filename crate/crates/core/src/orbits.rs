//! Group elements by word expansion, the stabilizer of z0, and the
//! diffractive orbit length spectrum `{d(z0, g z0)}`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::hyperbolic::{dist, HPoint, MoebiusMap};

/// Generators of a Fuchsian group together with the scatterer position.
///
/// Discreteness and cocompactness are not checked; convergence statements
/// downstream assume a cocompact group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    pub z0: HPoint,
    pub generators: Vec<MoebiusMap>,
}

impl GroupSpec {
    pub fn new(label: impl Into<String>, z0: HPoint, generators: Vec<MoebiusMap>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::config("orbits", "generator list is empty"));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.approx_eq(&MoebiusMap::identity(), 1e-12) {
                return Err(Error::config("orbits", format!("generator #{i} is the identity")));
            }
        }
        Ok(Self {
            label: label.into(),
            z0,
            generators,
        })
    }

    /// Cyclic group generated by a hyperbolic translation of length `ell`
    /// along the imaginary axis, with z0 = i.
    pub fn hyperbolic_cyclic(ell: f64) -> Self {
        Self {
            label: format!("cyclic-translation-{ell}"),
            z0: HPoint::i(),
            generators: vec![MoebiusMap::translation(ell)],
        }
    }

    /// Side pairings of the regular octagon with interior angles pi/4
    /// centred at i (the Bolza surface group), z0 = i.
    pub fn bolza() -> Self {
        let length = 2.0 * (1.0 + std::f64::consts::SQRT_2).acosh();
        let a = MoebiusMap::translation(length);
        let generators = (0..4)
            .map(|k| {
                let r = MoebiusMap::rotation(k as f64 * std::f64::consts::FRAC_PI_4);
                r.compose(&a).compose(&r.inverse())
            })
            .collect();
        Self {
            label: "bolza-octagon".into(),
            z0: HPoint::i(),
            generators,
        }
    }

    /// Generators followed by their inverses.
    pub fn alphabet(&self) -> Vec<MoebiusMap> {
        let mut letters = self.generators.clone();
        letters.extend(self.generators.iter().map(|g| g.inverse()));
        letters
    }

    pub fn max_displacement(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.displacement(self.z0))
            .fold(0.0, f64::max)
    }
}

/// One clustered orbit length with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitLength {
    pub length: f64,
    pub mult: u64,
}

/// Sorted diffractive orbit lengths up to `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpectrum {
    pub lengths: Vec<OrbitLength>,
    pub stabilizer_order: u64,
    /// Minimal length; `f64::INFINITY` when no length is stored.
    pub tau0: f64,
    pub radius: f64,
    /// True when word expansion closed without hitting the radius, i.e. the
    /// group is finite and nothing lies beyond `radius`.
    pub exhaustive: bool,
}

impl OrbitSpectrum {
    /// Builds a spectrum from an explicit length table (used for synthetic
    /// and file input).
    pub fn from_lengths(mut lengths: Vec<OrbitLength>, stabilizer_order: u64, radius: f64) -> Result<Self> {
        if stabilizer_order == 0 {
            return Err(Error::config("orbits", "stabilizer order must be >= 1"));
        }
        lengths.sort_by(|a, b| a.length.total_cmp(&b.length));
        for w in lengths.windows(2) {
            if w[1].length <= w[0].length {
                return Err(Error::config("orbits", "lengths must be strictly increasing"));
            }
        }
        for l in &lengths {
            if !(l.length > 0.0 && l.length <= radius) || l.mult == 0 {
                return Err(Error::config(
                    "orbits",
                    format!("length {} (mult {}) outside (0, {radius}]", l.length, l.mult),
                ));
            }
        }
        let tau0 = lengths.first().map_or(f64::INFINITY, |l| l.length);
        Ok(Self {
            lengths,
            stabilizer_order,
            tau0,
            radius,
            exhaustive: false,
        })
    }

    /// Number of non-stabilizer elements with length `<= r`.
    pub fn count_within(&self, r: f64) -> u64 {
        self.lengths.iter().take_while(|l| l.length <= r).map(|l| l.mult).sum()
    }

    pub fn element_count(&self) -> u64 {
        self.count_within(f64::INFINITY)
    }

    /// Restriction to lengths `<= r`.
    pub fn truncated(&self, r: f64) -> Self {
        let lengths: Vec<_> = self.lengths.iter().copied().filter(|l| l.length <= r).collect();
        Self {
            tau0: lengths.first().map_or(f64::INFINITY, |l| l.length),
            lengths,
            radius: r.min(self.radius),
            exhaustive: self.exhaustive,
            stabilizer_order: self.stabilizer_order,
        }
    }
}

/// Knobs for [`enumerate_orbit`].
#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    /// Elements are expanded while `d(g z0, z0) <= radius + margin`.
    /// `None` uses twice the largest generator displacement.
    pub margin: Option<f64>,
    /// Cap on the number of distinct elements visited.
    pub max_elements: usize,
    pub tol: Tolerances,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            margin: None,
            max_elements: 4_000_000,
            tol: Tolerances::default(),
        }
    }
}

/// Hash set of PSL(2,R) elements keyed by quantized normalized entries.
struct ElementSet {
    grid: f64,
    buckets: HashMap<[i64; 4], Vec<usize>>,
    elements: Vec<MoebiusMap>,
}

impl ElementSet {
    fn new(grid: f64) -> Self {
        Self {
            grid,
            buckets: HashMap::new(),
            elements: Vec::new(),
        }
    }

    fn key(&self, m: &MoebiusMap) -> [i64; 4] {
        m.entries().map(|e| (e / self.grid).round() as i64)
    }

    fn contains(&self, m: &MoebiusMap) -> bool {
        // an entry sitting close to a cell boundary may have been stored in
        // the neighbouring cell
        let scaled = m.entries().map(|e| e / self.grid);
        let options: Vec<Vec<i64>> = scaled
            .iter()
            .map(|v| {
                let r = v.round();
                if (v - r).abs() > 0.25 {
                    vec![v.floor() as i64, v.ceil() as i64]
                } else {
                    vec![r as i64]
                }
            })
            .collect();
        for &k0 in &options[0] {
            for &k1 in &options[1] {
                for &k2 in &options[2] {
                    for &k3 in &options[3] {
                        if let Some(ids) = self.buckets.get(&[k0, k1, k2, k3]) {
                            if ids.iter().any(|&i| self.elements[i].approx_eq(m, self.grid)) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, m: MoebiusMap) -> bool {
        if self.contains(&m) {
            return false;
        }
        let key = self.key(&m);
        self.buckets.entry(key).or_default().push(self.elements.len());
        self.elements.push(m);
        true
    }
}

/// Breadth-first word expansion of the group, collecting every distinct
/// element with `d(g z0, z0) <= radius`.
///
/// Elements are expanded only while within `radius + margin`; with the
/// default margin (twice the largest generator displacement) every element
/// inside `radius` is reached through a chain of elements inside the
/// pruning ball.
pub fn enumerate_orbit(
    group: &GroupSpec,
    radius: f64,
    cluster_tol: f64,
    opts: &EnumerationOptions,
) -> Result<OrbitSpectrum> {
    if !(radius > 0.0) || !(cluster_tol > 0.0) {
        return Err(Error::domain(
            "orbits",
            format!("radius {radius} and cluster_tol {cluster_tol} must be positive"),
        ));
    }
    let letters = group.alphabet();
    let margin = opts.margin.unwrap_or(2.0 * group.max_displacement());
    let prune = radius + margin;
    let z0 = group.z0;

    let mut set = ElementSet::new(opts.tol.dedup);
    let mut distances = vec![0.0];
    set.insert(MoebiusMap::identity());
    let mut frontier = vec![0usize];
    let mut hit_boundary = false;

    while !frontier.is_empty() {
        let candidates: Vec<(MoebiusMap, f64)> = frontier
            .par_iter()
            .flat_map_iter(|&i| {
                let g = set.elements[i];
                letters.iter().map(move |l| {
                    let h = g.compose(l);
                    (h, dist(z0, h.apply(z0)))
                })
            })
            .collect();
        let mut next = Vec::new();
        for (h, d) in candidates {
            if d > prune {
                hit_boundary = true;
                continue;
            }
            if set.insert(h) {
                distances.push(d);
                next.push(set.elements.len() - 1);
                if set.elements.len() > opts.max_elements {
                    let partial = collect_spectrum(&distances, radius, cluster_tol, opts.tol.fix, false);
                    return Err(Error::IncompleteEnumeration {
                        words: set.elements.len(),
                        radius,
                        partial: Box::new(partial),
                    });
                }
            }
        }
        frontier = next;
    }
    Ok(collect_spectrum(
        &distances,
        radius,
        cluster_tol,
        opts.tol.fix,
        !hit_boundary,
    ))
}

fn collect_spectrum(distances: &[f64], radius: f64, cluster_tol: f64, fix_tol: f64, exhaustive: bool) -> OrbitSpectrum {
    let stabilizer_order = distances.iter().filter(|&&d| d < fix_tol).count() as u64;
    let mut moving: Vec<f64> = distances
        .iter()
        .copied()
        .filter(|&d| d >= fix_tol && d <= radius + cluster_tol)
        .collect();
    moving.sort_by(f64::total_cmp);
    OrbitSpectrum {
        tau0: moving.first().copied().unwrap_or(f64::INFINITY),
        lengths: cluster_lengths(&moving, cluster_tol),
        stabilizer_order: stabilizer_order.max(1),
        radius,
        exhaustive,
    }
}

/// Merges sorted lengths closer than `tol` to the first member of their
/// cluster; the cluster length is the mean of its members.
pub fn cluster_lengths(sorted: &[f64], tol: f64) -> Vec<OrbitLength> {
    let mut out: Vec<OrbitLength> = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] - sorted[start] <= tol {
            end += 1;
        }
        let n = end - start;
        let mean = sorted[start..end].iter().sum::<f64>() / n as f64;
        out.push(OrbitLength {
            length: mean,
            mult: n as u64,
        });
        start = end;
    }
    out
}

/// Upper bound on `sum_{tau > R} |G_{1/2+i rho}(z0, g z0)|` at `Im rho = -sigma`.
///
/// Each omitted term is at most `K e^{-(sigma+1/2) tau}`; the count of
/// elements is bounded by `A e^{(1+eps) r}` with `A` fitted (times two)
/// from the stored lengths.
pub fn orbit_tail_bound(spec: &OrbitSpectrum, sigma: f64, eps_growth: f64) -> Result<f64> {
    if !(sigma > 0.5) {
        return Err(Error::domain(
            "orbits",
            format!("sigma = {sigma} must exceed 1/2 for the Green integral representation"),
        ));
    }
    if spec.exhaustive {
        return Ok(0.0);
    }
    let growth = 1.0 + eps_growth;
    let mut count = 0u64;
    let mut amp = (-growth * spec.radius).exp();
    for l in &spec.lengths {
        count += l.mult;
        amp = amp.max(count as f64 * (-growth * l.length).exp());
    }
    Ok(exponential_tail(2.0 * amp, growth, sigma, spec.radius))
}

/// `sum_{tau > R} K e^{-(sigma+1/2) tau}` for a counting function bounded by
/// `amp * e^{growth * r}`.
pub fn exponential_tail(amp: f64, growth: f64, sigma: f64, radius: f64) -> f64 {
    let decay = sigma + 0.5;
    if decay <= growth {
        return f64::INFINITY;
    }
    let k = (std::f64::consts::PI / sigma).sqrt() / (2.0 * std::f64::consts::PI * (1.0 - (-2.0 * radius).exp()).sqrt());
    k * amp * decay / (decay - growth) * ((growth - decay) * radius).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_translation_lengths() {
        let ell = 0.8;
        let g = GroupSpec::hyperbolic_cyclic(ell);
        let spec = enumerate_orbit(&g, 3.0 * ell, 1e-8, &EnumerationOptions::default()).unwrap();
        assert_eq!(spec.stabilizer_order, 1);
        assert_eq!(spec.lengths.len(), 3);
        for (k, l) in spec.lengths.iter().enumerate() {
            assert!((l.length - (k + 1) as f64 * ell).abs() < 1e-12);
            assert_eq!(l.mult, 2);
        }
        assert!((spec.tau0 - ell).abs() < 1e-12);
    }

    #[test]
    fn order_two_rotation_has_only_stabilizer() {
        let r = MoebiusMap::rotation(std::f64::consts::PI);
        let g = GroupSpec::new("elliptic", HPoint::i(), vec![r]).unwrap();
        let spec = enumerate_orbit(&g, 5.0, 1e-8, &EnumerationOptions::default()).unwrap();
        assert!(spec.lengths.is_empty());
        assert_eq!(spec.stabilizer_order, 2);
        assert!(spec.exhaustive);
        assert_eq!(orbit_tail_bound(&spec, 2.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn identity_generator_is_a_configuration_error() {
        let e = GroupSpec::new("bad", HPoint::i(), vec![MoebiusMap::identity()]);
        assert!(matches!(e, Err(Error::Config { .. })));
        assert!(GroupSpec::new("empty", HPoint::i(), vec![]).is_err());
    }

    #[test]
    fn budget_exceeded_reports_partial_data() {
        let g = GroupSpec::bolza();
        let opts = EnumerationOptions {
            max_elements: 50,
            ..Default::default()
        };
        match enumerate_orbit(&g, 8.0, 1e-8, &opts) {
            Err(Error::IncompleteEnumeration { partial, .. }) => {
                assert!(!partial.lengths.is_empty())
            }
            other => panic!("expected incomplete enumeration, got {other:?}"),
        }
    }

    #[test]
    fn tail_bound_domain_and_monotonicity() {
        let g = GroupSpec::hyperbolic_cyclic(1.0);
        let spec = enumerate_orbit(&g, 10.0, 1e-8, &EnumerationOptions::default()).unwrap();
        assert!(orbit_tail_bound(&spec, 0.5, 0.1).is_err());
        let b1 = orbit_tail_bound(&spec, 2.0, 0.1).unwrap();
        let b2 = orbit_tail_bound(&spec, 4.0, 0.1).unwrap();
        assert!(b2 < b1);
        assert!(exponential_tail(1.0, 1.1, 2.0, 200.0) < 1e-50);
    }

    #[test]
    fn clustering_merges_close_lengths() {
        let c = cluster_lengths(&[1.0, 1.0 + 1e-10, 2.0, 3.0, 3.0 + 5e-9], 1e-8);
        assert_eq!(c.len(), 3);
        assert_eq!(c.iter().map(|l| l.mult).collect::<Vec<_>>(), vec![2, 1, 2]);
    }
}
