//! Command-line front end: argument model, dispatch and artifact emission.
//!
//! Every mode writes a JSON report and plot-ready CSV tables into the
//! output directory. Output is deterministic for fixed arguments and inputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::Tolerances;
use crate::eigen::{polybound_diagnostic, safe_heights, solve_new_eigs, PerturbedSpectrum};
use crate::error::{Error, Result};
use crate::green::green_envelope;
use crate::io;
use crate::orbits::{enumerate_orbit, EnumerationOptions, GroupSpec, OrbitSpectrum};
use crate::spectral::{
    c0_constant, make_context, s_geometric, s_spectral, s_spectral_lambda, BetaConvention, Coupling, CouplingContext,
    Spectrum,
};
use crate::testfn::{
    appendix_h_eps, compbound_diagnostic, make_cauchy_h, membership_check, segment_min_re_derivative, AppendixParams,
    CompboundRow, MembershipReport, TestFunction,
};
use crate::trace::{
    spectral_side, trace_geometric, truncated_check, AxisResolution, GeometricOptions, SpectralSide, TruncatedCheck,
};

#[derive(Debug, Parser)]
#[command(
    name = "hyptrace",
    version,
    about = "Point scatterers on hyperbolic surfaces: orbits, spectra and trace formulas"
)]
pub struct Cli {
    /// Directory receiving the report and tables.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub mode: Mode,
}

#[derive(Debug, Subcommand)]
pub enum Mode {
    /// Enumerate orbit lengths d(z0, g z0) up to a radius.
    Orbits(OrbitArgs),
    /// Solve for the perturbed eigenvalues of a finite spectrum.
    Eigens(EigenArgs),
    /// Truncated trace identity: point sums against contour integrals.
    TraceTruncated(TruncatedArgs),
    /// Log integral of the geometric S against identity plus diffractive terms.
    TraceGeometric(GeometricArgs),
    /// Growth diagnostics along the safe heights.
    Diagnostics(DiagnosticArgs),
    /// Check a test function against the admissible class.
    Testfn(TestfnArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Bolza,
    Cyclic,
}

#[derive(Debug, Clone, Args)]
pub struct GroupArgs {
    /// Group description (TOML).
    #[arg(long, conflicts_with = "builtin")]
    pub group: Option<PathBuf>,
    /// Bundled group instead of a file.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Translation length of the cyclic builtin.
    #[arg(long, default_value_t = 1.0)]
    pub ell: f64,
    /// Orbit radius R.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Lengths closer than this merge.
    #[arg(long, default_value_t = 1e-8)]
    pub cluster_tol: f64,
    /// Accepted deviation of det from 1 in the group file.
    #[arg(long, default_value_t = 1e-9)]
    pub det_tol: f64,
    /// Cap on enumerated group elements.
    #[arg(long, default_value_t = 4_000_000)]
    pub max_elements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Derivation,
    Theorem1,
}

impl From<ConventionArg> for BetaConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Derivation => BetaConvention::Derivation,
            ConventionArg::Theorem1 => BetaConvention::Theorem1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CouplingArgs {
    /// Coupling constant; `inf` for infinite coupling.
    #[arg(long, conflicts_with = "beta", allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Renormalized coupling, overriding alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Stabilizer order of z0.
    #[arg(long, default_value_t = 1)]
    pub m: u64,
    /// Relation between alpha and beta.
    #[arg(long, value_enum, default_value_t = ConventionArg::Derivation)]
    pub convention: ConventionArg,
}

#[derive(Debug, Clone, Args)]
pub struct CauchyArgs {
    /// Width a of h(rho) = (rho^2 + a^2)^{-p}.
    #[arg(long, default_value_t = 2.0)]
    pub h_a: f64,
    /// Power p of the test function.
    #[arg(long, default_value_t = 3)]
    pub h_power: u32,
}

#[derive(Debug, Clone, Args)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    /// Bin width of the length histogram.
    #[arg(long, default_value_t = 0.25)]
    pub bin: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EigenArgs {
    /// Spectrum table (CSV).
    #[arg(long)]
    pub spectrum: PathBuf,
    #[command(flatten)]
    pub coupling: CouplingArgs,
    /// Largest eigenvalue considered; unbounded by default.
    #[arg(long)]
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TruncatedArgs {
    /// Spectrum table (CSV).
    #[arg(long)]
    pub spectrum: PathBuf,
    #[command(flatten)]
    pub coupling: CouplingArgs,
    #[command(flatten)]
    pub h: CauchyArgs,
    /// Half-height of the contour box.
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    /// Number of safe heights T.
    #[arg(long, default_value_t = 3)]
    pub heights: usize,
    /// Minimal eigenvalue gap for a safe height; defaults to half the lower Weyl constant.
    #[arg(long)]
    pub gap_c: Option<f64>,
    /// Accepted |lhs - rhs| per height.
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GeometricArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    #[command(flatten)]
    pub coupling: CouplingArgs,
    #[command(flatten)]
    pub h: CauchyArgs,
    /// Highest diffractive order.
    #[arg(long, default_value_t = 4)]
    pub k_max: usize,
    /// Height of the log-integral line; selected automatically when absent.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Height of the identity and transform lines.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Panels per orbit-length axis.
    #[arg(long, default_value_t = 3)]
    pub axis_panels: usize,
    /// Gauss order per panel.
    #[arg(long, default_value_t = 8)]
    pub axis_order: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnosticArgs {
    /// Spectrum table (CSV).
    #[arg(long)]
    pub spectrum: PathBuf,
    #[command(flatten)]
    pub coupling: CouplingArgs,
    /// Half-height of the contour box.
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    /// Number of safe heights T.
    #[arg(long, default_value_t = 5)]
    pub heights: usize,
    /// Minimal eigenvalue gap for a safe height; defaults to half the lower Weyl constant.
    #[arg(long)]
    pub gap_c: Option<f64>,
    /// Exponent in the T^{2+eps} normalization.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Optional group for the Green envelope over sigma in [1, 10].
    #[command(flatten)]
    pub group: GroupArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestfnKind {
    Cauchy,
    Appendix,
}

#[derive(Debug, Clone, Args)]
pub struct TestfnArgs {
    /// Rational family (cauchy) or the dyadic pole-cluster construction (appendix).
    #[arg(long, value_enum, default_value_t = TestfnKind::Cauchy)]
    pub kind: TestfnKind,
    #[command(flatten)]
    pub h: CauchyArgs,
    /// Strip half-width.
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    /// Decay exponent beyond 2.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Sample count of the membership check.
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    /// Exponent of the dyadic construction.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Pole height of the dyadic construction.
    #[arg(long, default_value_t = 6.0)]
    pub sigma0: f64,
    /// Candidate heights for the dyadic construction.
    #[arg(long, value_delimiter = ',', default_value = "20,400,7000")]
    pub candidates: Vec<f64>,
}

/// Result of a run: whether the mode's check passed and what was written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub converged: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        io::write_file(self.dir, name, contents)?;
        self.files.push(self.dir.join(name));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &io::to_json(value)?)
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut art = Artifacts {
        dir: &cli.out,
        files: Vec::new(),
    };
    let (converged, summary) = match &cli.mode {
        Mode::Orbits(a) => run_orbits(a, &mut art)?,
        Mode::Eigens(a) => run_eigens(a, &mut art)?,
        Mode::TraceTruncated(a) => run_truncated(a, &mut art)?,
        Mode::TraceGeometric(a) => run_geometric(a, &mut art)?,
        Mode::Diagnostics(a) => run_diagnostics(a, &mut art)?,
        Mode::Testfn(a) => run_testfn(a, &mut art)?,
    };
    Ok(Outcome {
        converged,
        summary,
        files: art.files,
    })
}

/// Parses `inf` (any case, optional sign) or a finite nonzero number.
pub fn parse_alpha(raw: &str) -> Result<Coupling> {
    let t = raw.trim().trim_start_matches('+');
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(Coupling::Infinite);
    }
    match t.parse::<f64>() {
        Ok(a) if a.is_finite() && a != 0.0 => Ok(Coupling::Finite(a)),
        _ => Err(Error::config(
            "cli",
            format!("alpha = {raw:?} must be a finite nonzero number or \"inf\""),
        )),
    }
}

fn load_group(a: &GroupArgs) -> Result<Option<GroupSpec>> {
    match (&a.group, a.builtin) {
        (Some(p), _) => io::read_group(p, a.det_tol).map(Some),
        (None, Some(Builtin::Bolza)) => Ok(Some(GroupSpec::bolza())),
        (None, Some(Builtin::Cyclic)) => {
            if !(a.ell > 0.0) {
                return Err(Error::config("cli", format!("ell = {} must be positive", a.ell)));
            }
            Ok(Some(GroupSpec::hyperbolic_cyclic(a.ell)))
        }
        (None, None) => Ok(None),
    }
}

fn load_orbit(a: &GroupArgs) -> Result<Option<(GroupSpec, OrbitSpectrum)>> {
    let Some(group) = load_group(a)? else {
        return Ok(None);
    };
    let radius = a
        .radius
        .ok_or_else(|| Error::config("cli", "--radius is required with a group"))?;
    let opts = EnumerationOptions {
        max_elements: a.max_elements,
        tol: Tolerances {
            det: a.det_tol,
            cluster: a.cluster_tol,
            ..Tolerances::default()
        },
        ..EnumerationOptions::default()
    };
    let orbit = enumerate_orbit(&group, radius, a.cluster_tol, &opts)?;
    Ok(Some((group, orbit)))
}

fn require_orbit(a: &GroupArgs) -> Result<(GroupSpec, OrbitSpectrum)> {
    load_orbit(a)?.ok_or_else(|| Error::config("cli", "a group is required: pass --group or --builtin"))
}

fn context(a: &CouplingArgs, orbit: Option<&OrbitSpectrum>) -> Result<CouplingContext> {
    if let Some(o) = orbit {
        if o.stabilizer_order != a.m {
            return Err(Error::config(
                "cli",
                format!(
                    "--m {} disagrees with the enumerated stabilizer order {}",
                    a.m, o.stabilizer_order
                ),
            ));
        }
    }
    match (&a.alpha, a.beta) {
        (_, Some(beta)) => {
            let (c0, tail) = c0_constant(a.m, orbit)?;
            let mut ctx = CouplingContext::from_beta(beta, a.m, c0)?;
            ctx.c0_tail = tail;
            Ok(ctx)
        }
        (Some(raw), None) => make_context(parse_alpha(raw)?, a.m, orbit, a.convention.into()),
        (None, None) => Err(Error::config("cli", "pass --alpha or --beta")),
    }
}

fn test_function(a: &CauchyArgs) -> Result<TestFunction> {
    make_cauchy_h(a.h_a, a.h_power)
}

#[derive(Serialize)]
struct OrbitReport<'a> {
    mode: &'static str,
    label: &'a str,
    radius: f64,
    stabilizer_order: u64,
    tau0: Option<f64>,
    distinct_lengths: usize,
    elements: u64,
    exhaustive: bool,
}

fn run_orbits(a: &OrbitArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    if !(a.bin > 0.0) {
        return Err(Error::config("cli", format!("bin = {} must be positive", a.bin)));
    }
    let (group, orbit) = require_orbit(&a.group)?;
    art.write("orbits.csv", &io::orbit_to_csv(&orbit))?;
    let bins = (orbit.radius / a.bin).ceil().max(1.0) as usize;
    let mut counts = vec![0u64; bins];
    for l in &orbit.lengths {
        let i = ((l.length / a.bin) as usize).min(bins - 1);
        counts[i] += l.mult;
    }
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| vec![i as f64 * a.bin, (i + 1) as f64 * a.bin, c as f64])
        .collect();
    art.write(
        "orbit_histogram.csv",
        &io::table_to_csv(&["bin_lo", "bin_hi", "count"], &rows),
    )?;
    let report = OrbitReport {
        mode: "orbits",
        label: &group.label,
        radius: orbit.radius,
        stabilizer_order: orbit.stabilizer_order,
        tau0: orbit.tau0.is_finite().then_some(orbit.tau0),
        distinct_lengths: orbit.lengths.len(),
        elements: orbit.element_count(),
        exhaustive: orbit.exhaustive,
    };
    art.json("orbits.json", &report)?;
    Ok((
        true,
        format!(
            "orbits: {} distinct lengths, {} elements up to R = {}, stabilizer order {}",
            report.distinct_lengths, report.elements, report.radius, report.stabilizer_order
        ),
    ))
}

#[derive(Serialize)]
struct EigenReport {
    mode: &'static str,
    alpha: String,
    beta: f64,
    c0: f64,
    lambda_max: f64,
    new_count: usize,
    ground: Option<f64>,
    inherited_count: usize,
    warnings: Vec<String>,
}

/// `S(lambda)` on a uniform grid over the spectrum range, skipping points
/// within `1e-6` of a pole.
fn s_axis_table(ctx: &CouplingContext, spec: &Spectrum, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    const POINTS: usize = 400;
    (0..=POINTS)
        .filter_map(|i| {
            let l = lo + (hi - lo) * i as f64 / POINTS as f64;
            s_spectral_lambda(ctx, spec, Complex64::new(l, 0.0), 1e-6)
                .ok()
                .map(|s| vec![l, s.value.re])
        })
        .collect()
}

fn lambda_range(spec: &Spectrum, p: &PerturbedSpectrum) -> (f64, f64) {
    let lo = p.ground.map_or(0.0, |g| g.lambda).min(0.0) - 1.0;
    let top = p.new_eigs.last().map_or(0.0, |e| e.lambda);
    (lo, spec.lambda_max().max(top) + 1.0)
}

fn run_eigens(a: &EigenArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    let spec = io::read_spectrum(&a.spectrum)?;
    let ctx = context(&a.coupling, None)?;
    let lambda_max = a.lambda_max.unwrap_or(f64::INFINITY);
    let perturbed = solve_new_eigs(&ctx, &spec, lambda_max)?;
    art.write("perturbed.csv", &io::perturbed_to_csv(&perturbed.rows()))?;
    let (lo, hi) = lambda_range(&spec, &perturbed);
    art.write(
        "s_axis.csv",
        &io::table_to_csv(&["lambda", "s"], &s_axis_table(&ctx, &spec, lo, hi)),
    )?;
    let report = EigenReport {
        mode: "eigens",
        alpha: crate::trace::alpha_label(&ctx),
        beta: ctx.beta,
        c0: ctx.c0,
        lambda_max,
        new_count: perturbed.new_eigs.len(),
        ground: perturbed.ground.map(|g| g.lambda),
        inherited_count: perturbed.inherited.len(),
        warnings: perturbed.warnings.clone(),
    };
    art.json("eigens.json", &report)?;
    let converged = perturbed.warnings.is_empty();
    let first: Vec<String> = perturbed.zeros().iter().take(5).map(|z| format!("{z:.12}")).collect();
    Ok((
        converged,
        format!(
            "eigens: {} new eigenvalues up to {lambda_max}{}; first: [{}]",
            report.new_count,
            report
                .ground
                .map_or(String::new(), |g| format!(", ground state {g:.12}")),
            first.join(", ")
        ),
    ))
}

#[derive(Serialize)]
struct TruncatedReport {
    mode: &'static str,
    alpha: String,
    beta: f64,
    c0: f64,
    sigma: f64,
    heights_complete: bool,
    checks: Vec<TruncatedCheck>,
    spectral_side: Option<SpectralSide>,
    max_gap: f64,
    gap_tol: f64,
    converged: bool,
}

fn run_truncated(a: &TruncatedArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    let spec = io::read_spectrum(&a.spectrum)?;
    let ctx = context(&a.coupling, None)?;
    let h = test_function(&a.h)?;
    let perturbed = solve_new_eigs(&ctx, &spec, spec.lambda_max())?;
    let heights = safe_heights(&spec, &perturbed, a.heights, a.gap_c);
    let checks = heights
        .values
        .iter()
        .map(|&t| truncated_check(&h, &ctx, &spec, &perturbed, t, a.sigma))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&t) = heights.values.first() {
        let rows: Vec<Vec<f64>> = (0..=200)
            .filter_map(|i| {
                let rho = Complex64::new(-t + 2.0 * t * i as f64 / 200.0, -a.sigma);
                s_spectral(&ctx, &spec, rho, 1e-8)
                    .ok()
                    .map(|s| vec![rho.re, rho.im, s.value.re, s.value.im])
            })
            .collect();
        art.write(
            "s_contour.csv",
            &io::table_to_csv(&["re_rho", "im_rho", "re_s", "im_s"], &rows),
        )?;
    }
    let rows: Vec<Vec<f64>> = checks
        .iter()
        .map(|c| {
            vec![
                c.height,
                c.lhs,
                c.rhs,
                c.gap,
                c.zeros_inside as f64,
                c.poles_inside as f64,
            ]
        })
        .collect();
    art.write(
        "truncated.csv",
        &io::table_to_csv(&["height", "lhs", "rhs", "gap", "zeros_inside", "poles_inside"], &rows),
    )?;
    let max_gap = checks.iter().map(|c| c.gap).fold(0.0, f64::max);
    let converged = !checks.is_empty() && max_gap <= a.gap_tol;
    let report = TruncatedReport {
        mode: "trace-truncated",
        alpha: crate::trace::alpha_label(&ctx),
        beta: ctx.beta,
        c0: ctx.c0,
        sigma: a.sigma,
        heights_complete: heights.complete,
        spectral_side: spectral_side(&h, &spec, &perturbed).ok(),
        checks,
        max_gap,
        gap_tol: a.gap_tol,
        converged,
    };
    art.json("trace_truncated.json", &report)?;
    Ok((
        converged,
        format!(
            "trace-truncated: {} heights, max gap {:.3e} (tolerance {:.1e})",
            report.checks.len(),
            max_gap,
            a.gap_tol
        ),
    ))
}

fn run_geometric(a: &GeometricArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    let (_, orbit) = require_orbit(&a.group)?;
    let ctx = context(&a.coupling, Some(&orbit))?;
    let h = test_function(&a.h)?;
    let opts = GeometricOptions {
        k_max: a.k_max,
        sigma: a.sigma,
        nu: a.nu,
        axes: AxisResolution {
            panels: a.axis_panels,
            order: a.axis_order,
            coarse_order: a.axis_order.saturating_sub(2).max(2),
        },
    };
    let report = trace_geometric(&h, &ctx, &orbit, opts)?;
    let rows: Vec<Vec<f64>> = report
        .diffractive
        .iter()
        .zip(&report.partial_gaps)
        .enumerate()
        .map(|(i, (&v, &g))| vec![(i + 1) as f64, v, v.abs(), g])
        .collect();
    art.write(
        "diffractive.csv",
        &io::table_to_csv(&["k", "value", "magnitude", "partial_gap"], &rows),
    )?;
    let line: Vec<Vec<f64>> = (0..=160)
        .filter_map(|i| {
            let x = 0.125 * i as f64;
            s_geometric(&ctx, &orbit, Complex64::new(0.5 + report.sigma, x))
                .ok()
                .map(|s| vec![x, -report.sigma, s.value.re, s.value.im])
        })
        .collect();
    art.write(
        "s_line.csv",
        &io::table_to_csv(&["re_rho", "im_rho", "re_s", "im_s"], &line),
    )?;
    art.json("trace_geometric.json", &report)?;
    let t = &report.tails;
    Ok((
        report.converged,
        format!(
            "trace-geometric: gap {:.3e} vs tails {:.3e} (series {:.2e}, pruned {:.2e}, quadrature {:.2e}); sigma = {:.4}, nu = {:.4}",
            report.gap,
            t.series + t.pruned + t.quadrature,
            t.series,
            t.pruned,
            t.quadrature,
            report.sigma,
            report.nu
        ),
    ))
}

#[derive(Serialize)]
struct DiagnosticReport {
    mode: &'static str,
    sigma: f64,
    heights: Vec<f64>,
    polyn_ratio: Vec<(f64, f64)>,
    compbound: Vec<CompboundRow>,
    envelope: Option<Vec<(f64, f64)>>,
}

fn run_diagnostics(a: &DiagnosticArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    let spec = io::read_spectrum(&a.spectrum)?;
    let orbit = load_orbit(&a.group)?.map(|(_, o)| o);
    let ctx = context(&a.coupling, orbit.as_ref())?;
    let perturbed = solve_new_eigs(&ctx, &spec, spec.lambda_max())?;
    let heights = safe_heights(&spec, &perturbed, a.heights, a.gap_c);
    let polyn = polybound_diagnostic(&spec, &heights, a.sigma);
    let comp = compbound_diagnostic(&ctx, &spec, &heights, a.sigma, a.eps);
    art.write(
        "polyn.csv",
        &io::table_to_csv(
            &["height", "ratio"],
            &polyn.iter().map(|&(t, r)| vec![t, r]).collect::<Vec<_>>(),
        ),
    )?;
    art.write(
        "compbound.csv",
        &io::table_to_csv(
            &["height", "integral", "ratio"],
            &comp
                .iter()
                .map(|r| vec![r.height, r.integral, r.ratio])
                .collect::<Vec<_>>(),
        ),
    )?;
    let envelope = match &orbit {
        Some(o) => {
            let rows = (0..19)
                .map(|i| {
                    let s = 1.0 + 0.5 * i as f64;
                    green_envelope(o, s).map(|e| (s, e * (0.5 + s).sqrt()))
                })
                .collect::<Result<Vec<_>>>()?;
            art.write(
                "envelope.csv",
                &io::table_to_csv(
                    &["sigma", "scaled_envelope"],
                    &rows.iter().map(|&(s, e)| vec![s, e]).collect::<Vec<_>>(),
                ),
            )?;
            Some(rows)
        }
        None => None,
    };
    let report = DiagnosticReport {
        mode: "diagnostics",
        sigma: a.sigma,
        heights: heights.values.clone(),
        polyn_ratio: polyn,
        compbound: comp,
        envelope,
    };
    art.json("diagnostics.json", &report)?;
    let max_of = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
    Ok((
        true,
        format!(
            "diagnostics: {} heights, max polyn ratio {:.3e}, max segment ratio {:.3e}",
            report.heights.len(),
            max_of(&mut report.polyn_ratio.iter().map(|r| r.1)),
            max_of(&mut report.compbound.iter().map(|r| r.ratio)),
        ),
    ))
}

#[derive(Serialize)]
struct TestfnReport {
    mode: &'static str,
    tag: String,
    membership: MembershipReport,
    appendix: Option<AppendixParams>,
    /// `(T, min Re h')` on the segments `[T - i sigma, T]`.
    segment_min: Vec<(f64, f64)>,
}

fn run_testfn(a: &TestfnArgs, art: &mut Artifacts) -> Result<(bool, String)> {
    let (h, params) = match a.kind {
        TestfnKind::Cauchy => (test_function(&a.h)?, None),
        TestfnKind::Appendix => {
            let p = AppendixParams::select(a.eps, a.sigma, Some(a.sigma0), &a.candidates)?;
            (appendix_h_eps(&p), Some(p))
        }
    };
    let membership = membership_check(&h, a.sigma, a.delta, a.samples);
    let segment_min = params
        .as_ref()
        .map_or_else(Vec::new, |p| segment_min_re_derivative(&h, p));
    let rows: Vec<Vec<f64>> = (0..=200)
        .map(|i| {
            let x = 0.1 * i as f64;
            vec![
                x,
                h.eval(Complex64::new(x, 0.0)).re,
                h.derivative(Complex64::new(x, -a.sigma)).re,
            ]
        })
        .collect();
    art.write("testfn.csv", &io::table_to_csv(&["x", "h", "re_dh_on_line"], &rows))?;
    let converged = membership.passed && segment_min.iter().all(|&(_, m)| m > 0.0);
    let report = TestfnReport {
        mode: "testfn",
        tag: h.tag.clone(),
        membership,
        appendix: params,
        segment_min,
    };
    art.json("testfn.json", &report)?;
    Ok((
        converged,
        format!(
            "testfn: {} membership {}{}",
            report.tag,
            if report.membership.passed { "passed" } else { "failed" },
            if report.segment_min.is_empty() {
                String::new()
            } else {
                format!(", min Re h' on segments {:?}", report.segment_min)
            }
        ),
    ))
}
