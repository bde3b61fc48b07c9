//! Numerical tolerances shared by every module.

/// Tolerance knobs. `Tolerances::default()` holds the values used by the
/// library; individual operations take the record so callers can tighten
/// or loosen them in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of `ad - bc` from one when validating a matrix.
    pub det: f64,
    /// Grid used when hashing sign-normalized matrix entries.
    pub dedup: f64,
    /// Distance below which a group element is counted as fixing z0.
    pub fix: f64,
    /// Orbit lengths closer than this merge into one multiplicity.
    pub cluster: f64,
    /// Minimal distance in lambda to an unperturbed eigenvalue before the
    /// spectral function refuses to evaluate.
    pub pole: f64,
    /// Absolute target for the free Green function quadrature.
    pub green_abs: f64,
    /// Margin required below Im rho = -1/2 for the integral representation.
    pub green_margin: f64,
    /// Bisection stopping width (relative to max(1, |lambda|)).
    pub bisect: f64,
    /// Minimal distance of a contour height from the zero of 1 + m beta psi.
    pub contour_collision: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            det: 1e-9,
            dedup: 1e-9,
            fix: 1e-9,
            cluster: 1e-8,
            pole: 1e-8,
            green_abs: 1e-10,
            green_margin: 1e-3,
            bisect: 1e-12,
            contour_collision: 1e-6,
        }
    }
}
