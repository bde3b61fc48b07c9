use thiserror::Error;

use crate::orbits::OrbitSpectrum;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] domain error: {what}")]
    Domain { module: &'static str, what: String },

    #[error("[{module}] configuration error: {what}")]
    Config { module: &'static str, what: String },

    #[error("[orbits] incomplete enumeration after {words} elements (radius {radius})")]
    IncompleteEnumeration {
        words: usize,
        radius: f64,
        partial: Box<OrbitSpectrum>,
    },

    #[error("[special] 1 + m*beta*psi has no zero for beta = 0")]
    NoDenominatorZero,

    #[error("[spectral] coupling alpha = {alpha} is within tolerance of the singular value {singular}")]
    SingularCoupling { alpha: f64, singular: f64 },

    #[error("[spectral] evaluation at lambda = {lambda} lies within {tol} of eigenvalue #{index} = {pole}")]
    PoleProximity {
        index: usize,
        pole: f64,
        lambda: f64,
        tol: f64,
    },

    #[error("[trace] contour height {height} collides with the zero -i*{zero} of 1 + m*beta*psi")]
    ContourCollision { height: f64, zero: f64 },

    #[error("[trace] series ratio {ratio} >= 1 on the contour; diffractive expansion refused")]
    SeriesDivergence { ratio: f64 },

    #[error("[trace] no admissible sigma up to {cap}: {diagnostics}")]
    NoAdmissibleSigma { cap: f64, diagnostics: String },

    #[error("[trace] argument jump {jump} between adjacent nodes near Re rho = {at}")]
    BranchResolution { jump: f64, at: f64 },

    #[error("[trace] contour boundary within {distance} of {kind} at rho = {at}")]
    BoundaryTooClose { kind: &'static str, at: f64, distance: f64 },

    #[error("[trace] mismatched truncation: {0}")]
    Truncation(String),

    #[error("[testfn] {0}")]
    TestFunction(String),

    #[error("[io] {path}: {what}")]
    Parse { path: String, what: String },

    #[error("[io] {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(module: &'static str, what: impl Into<String>) -> Self {
        Error::Domain {
            module,
            what: what.into(),
        }
    }

    pub(crate) fn config(module: &'static str, what: impl Into<String>) -> Self {
        Error::Config {
            module,
            what: what.into(),
        }
    }
}
