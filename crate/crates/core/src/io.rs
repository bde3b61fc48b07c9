//! File formats: group TOML, spectrum / perturbed / orbit CSV and JSON
//! reports. Numbers are written with 17 significant digits so every CSV
//! re-reads to bit-identical values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigen::{EigenKind, PerturbedRow};
use crate::error::{Error, Result};
use crate::hyperbolic::{HPoint, MoebiusMap};
use crate::orbits::{GroupSpec, OrbitLength, OrbitSpectrum};
use crate::spectral::{Spectrum, SpectrumEntry};

/// Header of the spectrum table.
pub const SPECTRUM_HEADER: &str = "lambda,mult,weight";
/// Header of the perturbed spectrum table.
pub const PERTURBED_HEADER: &str = "type,lambda,mult,bracket_lo,bracket_hi";
/// Header of the orbit length table.
pub const ORBIT_HEADER: &str = "length,mult";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFile {
    label: String,
    z0: [f64; 2],
    generators: Vec<[f64; 4]>,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &str, what: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        what: what.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| parse_err(&path.display().to_string(), e.to_string()))
}

fn num(path: &str, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, format!("line {line}: {field} = {raw:?} is not a number")))
}

fn count(path: &str, line: usize, field: &str, raw: &str) -> Result<u64> {
    raw.trim().parse::<u64>().map_err(|_| {
        parse_err(
            path,
            format!("line {line}: {field} = {raw:?} is not a nonnegative integer"),
        )
    })
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn expect_header<'a>(path: &str, lines: &mut impl Iterator<Item = (usize, &'a str)>, header: &str) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l == header => Ok(()),
        Some((n, l)) => Err(parse_err(
            path,
            format!("line {n}: expected header {header:?}, found {l:?}"),
        )),
        None => Err(parse_err(path, format!("missing header {header:?}"))),
    }
}

fn fields<'a>(path: &str, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = text.split(',').collect();
    if f.len() != n {
        return Err(parse_err(
            path,
            format!("line {line}: expected {n} fields, found {}", f.len()),
        ));
    }
    Ok(f)
}

/// Parses a group description:
///
/// ```toml
/// label = "name"
/// z0 = [0.0, 1.0]
/// generators = [[a, b, c, d], ...]
/// ```
pub fn parse_group(text: &str, path: &str, det_tol: f64) -> Result<GroupSpec> {
    let file: GroupFile = toml::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
    let z0 = HPoint::new(file.z0[0], file.z0[1]).map_err(|e| parse_err(path, format!("z0: {e}")))?;
    let generators = file
        .generators
        .iter()
        .enumerate()
        .map(|(i, [a, b, c, d])| {
            MoebiusMap::new(*a, *b, *c, *d, det_tol).map_err(|e| parse_err(path, format!("generator {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    GroupSpec::new(file.label, z0, generators).map_err(|e| parse_err(path, e.to_string()))
}

pub fn read_group(path: &Path, det_tol: f64) -> Result<GroupSpec> {
    parse_group(&read(path)?, &path.display().to_string(), det_tol)
}

pub fn group_to_toml(group: &GroupSpec) -> String {
    let file = GroupFile {
        label: group.label.clone(),
        z0: [group.z0.x(), group.z0.y()],
        generators: group.generators.iter().map(MoebiusMap::entries).collect(),
    };
    toml::to_string(&file).expect("group serializes")
}

/// Spectrum table: an `area=<value>` line, the header `lambda,mult,weight`,
/// then one row per distinct eigenvalue in increasing order.
pub fn parse_spectrum(text: &str, path: &str) -> Result<Spectrum> {
    let mut lines = content_lines(text);
    let area = match lines.next() {
        Some((n, l)) => match l.strip_prefix("area=") {
            Some(v) => num(path, n, "area", v)?,
            None => return Err(parse_err(path, format!("line {n}: expected area=<value>, found {l:?}"))),
        },
        None => return Err(parse_err(path, "empty spectrum file")),
    };
    expect_header(path, &mut lines, SPECTRUM_HEADER)?;
    let mut entries = Vec::new();
    for (n, l) in lines {
        let f = fields(path, n, l, 3)?;
        entries.push(SpectrumEntry {
            lambda: num(path, n, "lambda", f[0])?,
            mult: count(path, n, "mult", f[1])?,
            weight: num(path, n, "weight", f[2])?,
        });
    }
    Spectrum::new(entries, area).map_err(|e| parse_err(path, e.to_string()))
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum(&read(path)?, &path.display().to_string())
}

pub fn spectrum_to_csv(spec: &Spectrum) -> String {
    let mut out = format!("area={}\n{SPECTRUM_HEADER}\n", fmt_num(spec.area()));
    for e in spec.entries() {
        let _ = writeln!(out, "{},{},{}", fmt_num(e.lambda), e.mult, fmt_num(e.weight));
    }
    out
}

fn kind_name(kind: EigenKind) -> &'static str {
    match kind {
        EigenKind::New => "new",
        EigenKind::Inherited => "inherited",
        EigenKind::Ground => "ground",
    }
}

/// Perturbed spectrum rows in `lambda` order; inherited rows carry the
/// degenerate bracket `[lambda, lambda]`.
pub fn perturbed_to_csv(rows: &[PerturbedRow]) -> String {
    let mut out = format!("{PERTURBED_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            kind_name(r.kind),
            fmt_num(r.lambda),
            r.mult,
            fmt_num(r.bracket.0),
            fmt_num(r.bracket.1)
        );
    }
    out
}

pub fn parse_perturbed(text: &str, path: &str) -> Result<Vec<PerturbedRow>> {
    let mut lines = content_lines(text);
    expect_header(path, &mut lines, PERTURBED_HEADER)?;
    lines
        .map(|(n, l)| {
            let f = fields(path, n, l, 5)?;
            let kind = match f[0].trim() {
                "new" => EigenKind::New,
                "inherited" => EigenKind::Inherited,
                "ground" => EigenKind::Ground,
                other => return Err(parse_err(path, format!("line {n}: unknown type {other:?}"))),
            };
            Ok(PerturbedRow {
                kind,
                lambda: num(path, n, "lambda", f[1])?,
                mult: count(path, n, "mult", f[2])?,
                bracket: (num(path, n, "bracket_lo", f[3])?, num(path, n, "bracket_hi", f[4])?),
            })
        })
        .collect()
}

/// Orbit length table with `key=value` metadata lines for the stabilizer
/// order, radius and exhaustiveness flag.
pub fn orbit_to_csv(orbit: &OrbitSpectrum) -> String {
    let mut out = format!(
        "stabilizer_order={}\nradius={}\nexhaustive={}\n{ORBIT_HEADER}\n",
        orbit.stabilizer_order,
        fmt_num(orbit.radius),
        orbit.exhaustive
    );
    for l in &orbit.lengths {
        let _ = writeln!(out, "{},{}", fmt_num(l.length), l.mult);
    }
    out
}

pub fn parse_orbit(text: &str, path: &str) -> Result<OrbitSpectrum> {
    let mut lines = content_lines(text);
    let mut meta = |key: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => l
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(|v| (n, v.to_string()))
                .ok_or_else(|| parse_err(path, format!("line {n}: expected {key}=<value>"))),
            None => Err(parse_err(path, format!("missing {key}"))),
        }
    };
    let (n, m) = meta("stabilizer_order")?;
    let m = count(path, n, "stabilizer_order", &m)?;
    let (n, r) = meta("radius")?;
    let radius = num(path, n, "radius", &r)?;
    let (n, ex) = meta("exhaustive")?;
    let exhaustive = ex
        .parse::<bool>()
        .map_err(|_| parse_err(path, format!("line {n}: exhaustive must be true or false")))?;
    expect_header(path, &mut lines, ORBIT_HEADER)?;
    let mut lengths = Vec::new();
    for (n, l) in lines {
        let f = fields(path, n, l, 2)?;
        lengths.push(OrbitLength {
            length: num(path, n, "length", f[0])?,
            mult: count(path, n, "mult", f[1])?,
        });
    }
    let mut orbit = OrbitSpectrum::from_lengths(lengths, m, radius).map_err(|e| parse_err(path, e.to_string()))?;
    orbit.exhaustive = exhaustive;
    Ok(orbit)
}

pub fn read_orbit(path: &Path) -> Result<OrbitSpectrum> {
    parse_orbit(&read(path)?, &path.display().to_string())
}

/// Generic numeric table with a header row.
pub fn table_to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Parses a table written by [`table_to_csv`].
pub fn parse_table(text: &str, path: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = content_lines(text);
    let header: Vec<String> = match lines.next() {
        Some((_, l)) => l.split(',').map(str::to_string).collect(),
        None => return Err(parse_err(path, "missing header")),
    };
    let rows = lines
        .map(|(n, l)| {
            fields(path, n, l, header.len())?
                .iter()
                .zip(&header)
                .map(|(v, h)| num(path, n, h, v))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::config("io", e.to_string()))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
