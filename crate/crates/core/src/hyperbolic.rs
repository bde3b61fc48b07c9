//! Upper half-plane model: points, hyperbolic distance and PSL(2,R) maps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `x + iy` of the upper half-plane (`y > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    x: f64,
    y: f64,
}

impl HPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::domain(
                "hyperbolic",
                format!("point ({x}, {y}) is not in the upper half-plane"),
            ));
        }
        Ok(Self { x, y })
    }

    /// The base point `i`.
    pub fn i() -> Self {
        Self { x: 0.0, y: 1.0 }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }
}

/// `cosh d(z, w) - 1 = |z - w|^2 / (2 Im z Im w)`.
pub fn cosh_dist_minus_one(z: HPoint, w: HPoint) -> f64 {
    let dx = z.x - w.x;
    let dy = z.y - w.y;
    (dx * dx + dy * dy) / (2.0 * z.y * w.y)
}

/// Hyperbolic distance.
///
/// For tiny separations `arccosh(1 + u)` loses half the digits, so below
/// `u = 5e-13` (d ~ 1e-6) we use `sqrt(2u) (1 - u/12)`.
pub fn dist(z: HPoint, w: HPoint) -> f64 {
    let u = cosh_dist_minus_one(z, w);
    if u < 5e-13 {
        (2.0 * u).sqrt() * (1.0 - u / 12.0)
    } else {
        // arccosh(1+u) = ln(1 + u + sqrt(u(u+2))) written to keep digits for small u
        (u + (u * (u + 2.0)).sqrt()).ln_1p()
    }
}

/// An element of PSL(2,R), stored sign-normalized: the first entry of
/// `(a, b, c, d)` with magnitude above [`MoebiusMap::SIGN_EPS`] is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MoebiusMap {
    /// Entries below this magnitude are treated as zero when choosing the
    /// representative sign.
    pub const SIGN_EPS: f64 = 1e-9;

    /// Validates `|ad - bc - 1| <= det_tol` and normalizes the sign.
    pub fn new(a: f64, b: f64, c: f64, d: f64, det_tol: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !(det - 1.0).abs().le(&det_tol) {
            return Err(Error::domain(
                "hyperbolic",
                format!("matrix ({a}, {b}, {c}, {d}) has determinant {det}, expected 1"),
            ));
        }
        Ok(Self::normalized(a, b, c, d))
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// Hyperbolic translation by `length` along the imaginary axis.
    pub fn translation(length: f64) -> Self {
        let s = (0.5 * length).exp();
        Self::normalized(s, 0.0, 0.0, 1.0 / s)
    }

    /// Rotation by `angle` about `i`.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::normalized(c, s, -s, c)
    }

    fn normalized(a: f64, b: f64, c: f64, d: f64) -> Self {
        let lead = [a, b, c, d]
            .into_iter()
            .find(|e| e.abs() > Self::SIGN_EPS)
            .unwrap_or(1.0);
        if lead < 0.0 {
            Self {
                a: -a,
                b: -b,
                c: -c,
                d: -d,
            }
        } else {
            Self { a, b, c, d }
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// `(az + b) / (cz + d)`.
    pub fn apply(&self, z: HPoint) -> HPoint {
        let zc = z.to_complex();
        let w = (zc * self.a + self.b) / (zc * self.c + self.d);
        // Im w = Im z / |cz + d|^2 exactly; use it to keep y > 0 under rounding
        let den = (zc * self.c + self.d).norm_sqr();
        HPoint { x: w.re, y: z.y / den }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self::normalized(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
    }

    pub fn inverse(&self) -> Self {
        Self::normalized(self.d, -self.b, -self.c, self.a)
    }

    /// Entrywise comparison of sign-normalized representatives.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.entries()
            .iter()
            .zip(other.entries())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Translation length `d(z, Mz)` for the given base point.
    pub fn displacement(&self, z: HPoint) -> f64 {
        dist(z, self.apply(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> HPoint {
        HPoint::new(x, y).unwrap()
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(HPoint::new(0.0, 0.0).is_err());
        assert!(HPoint::new(1.0, -2.0).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dist(p(0.3, 1.7), p(0.3, 1.7)), 0.0);
        let d = dist(HPoint::i(), p(0.0, 2.0));
        assert!((d - 2f64.ln()).abs() < 1e-15);
        assert!((d.cosh() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn small_distance_series_matches_vertical_log() {
        // d(i, (1+h)i) = ln(1+h) exactly
        for step in [1e-7, 1e-9, 1e-12] {
            let y = 1.0 + step;
            let h = y - 1.0;
            let d = dist(HPoint::i(), p(0.0, y));
            assert!(((d - h.ln_1p()) / h).abs() < 1e-6, "h = {h}");
        }
    }

    #[test]
    fn translation_acts_on_i() {
        let m = MoebiusMap::new(1.0, 1.0, 0.0, 1.0, 1e-12).unwrap();
        let w = m.apply(HPoint::i());
        assert_eq!((w.x(), w.y()), (1.0, 1.0));
        assert_eq!(MoebiusMap::identity().apply(p(0.2, 3.0)), p(0.2, 3.0));
    }

    #[test]
    fn sign_normalization_and_inverse() {
        let m = MoebiusMap::new(-1.0, 0.0, 0.0, -1.0, 1e-12).unwrap();
        assert_eq!(m, MoebiusMap::identity());
        let g = MoebiusMap::new(2.0, 1.0, 3.0, 2.0, 1e-12).unwrap();
        assert!(g.compose(&g.inverse()).approx_eq(&MoebiusMap::identity(), 1e-14));
        assert!(g.compose(&MoebiusMap::identity()).approx_eq(&g, 0.0));
        let z = p(-0.4, 0.9);
        let back = g.apply(g.inverse().apply(z));
        assert!((back.x() - z.x()).abs() < 1e-12 && (back.y() - z.y()).abs() < 1e-12);
    }

    #[test]
    fn rotation_by_pi_squares_to_identity() {
        let r = MoebiusMap::rotation(std::f64::consts::PI);
        assert!(r.compose(&r).approx_eq(&MoebiusMap::identity(), 1e-12));
        assert!(r.displacement(HPoint::i()) < 1e-12);
    }

    #[test]
    fn bad_determinant_is_rejected() {
        assert!(MoebiusMap::new(1.0, 1.0, 1.0, 1.0, 1e-9).is_err());
    }
}
