use nalgebra::Matrix3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::{HomogeneousLine, Point};

/// Homographies whose singular values spread wider than this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Planar projective transform, stored with unit Frobenius norm and a
/// non-negative bottom-right entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

fn normalize(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let n = m.norm();
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    let mut out = m / n;
    let sign_ref = if out[(2, 2)] != 0.0 {
        out[(2, 2)]
    } else {
        out.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0)
    };
    if sign_ref < 0.0 {
        out = -out;
    }
    Some(out)
}

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let m = normalize(&m)
            .ok_or_else(|| Error::DegenerateHomography("zero or non-finite matrix".into()))?;
        let sv = m.svd(false, false).singular_values;
        let (max, min) = (sv.max(), sv.min());
        if !(min > 0.0) || max / min > MAX_CONDITION {
            return Err(Error::DegenerateHomography(format!(
                "condition number {:e} exceeds {MAX_CONDITION:e}",
                max / min
            )));
        }
        Ok(Self { m })
    }

    pub fn from_row_major(h: [f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(&h))
    }

    pub fn identity() -> Self {
        Self { m: normalize(&Matrix3::identity()).expect("identity") }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_matrix(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
            .expect("translations are invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    #[inline]
    pub fn map(&self, p: &Point) -> Option<Point> {
        let m = &self.m;
        let x = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
        let y = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        let scale = (m[(2, 0)] * p.x).abs() + (m[(2, 1)] * p.y).abs() + m[(2, 2)].abs();
        if w.abs() <= 1e-12 * scale {
            return None;
        }
        Some(Point::new(x / w, y / w))
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.m.try_inverse().expect("condition-bounded homography is invertible");
        Self { m: normalize(&inv).expect("inverse is finite") }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::from_matrix(self.m * other.m)
    }

    /// Image of a line under the point map, `H^{-T} l`.
    pub fn map_line(&self, line: &HomogeneousLine) -> Option<HomogeneousLine> {
        let inv_t = self.m.try_inverse()?.transpose();
        HomogeneousLine::from_vector(&(inv_t * line.as_vector()))
    }

    /// Frobenius distance between the normalized matrices.
    pub fn distance(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm()
    }
}

impl Serialize for Homography {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let h = <[f64; 9]>::deserialize(d)?;
        Homography::from_row_major(h).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let h = Homography::from_matrix(Matrix3::identity() * -3.0).unwrap();
        assert!((h.matrix().norm() - 1.0).abs() < 1e-15);
        assert!(h.matrix()[(2, 2)] > 0.0);
        assert!(h.distance(&Homography::identity()) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(Homography::from_matrix(m).is_err());
        assert!(Homography::from_matrix(Matrix3::zeros()).is_err());
    }

    #[test]
    fn map_and_inverse() {
        let h = Homography::from_row_major([1.1, 0.05, 12.0, -0.02, 0.95, -4.0, 1e-4, -2e-4, 1.0])
            .unwrap();
        let p = Point::new(37.0, 81.5);
        let q = h.map(&p).unwrap();
        let back = h.inverse().map(&q).unwrap();
        assert!((back - p).norm() < 1e-10);
    }

    #[test]
    fn line_mapping_keeps_incidence() {
        let h = Homography::from_row_major([0.9, 0.1, 5.0, -0.05, 1.02, 3.0, 2e-4, 1e-4, 1.0])
            .unwrap();
        let a = Point::new(3.0, 4.0);
        let b = Point::new(50.0, 20.0);
        let l = HomogeneousLine::through(&crate::features::LineSegment::new(a, b)).unwrap();
        let lm = h.map_line(&l).unwrap();
        assert!(lm.distance(&h.map(&a).unwrap()).abs() < 1e-10);
        assert!(lm.distance(&h.map(&b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn points_at_infinity_are_reported() {
        let h = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.01, 0.0, 1.0]).unwrap();
        assert!(h.map(&Point::new(-100.0, 3.0)).is_none());
    }

    #[test]
    fn serde_is_row_major() {
        let h = Homography::translation(2.0, 3.0);
        let json = serde_json::to_string(&h).unwrap();
        let back: Homography = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
        let v: Vec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(v.len(), 9);
        assert!((v[2] / v[8] - 2.0).abs() < 1e-12);
    }
}
