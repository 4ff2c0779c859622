//! Point and line correspondences between the source and target images.
//!
//! The built-in detectors are deliberately plain: Harris corners matched by
//! normalized cross-correlation of patches, and line segments grown from
//! gradient-aligned pixel regions. Externally computed correspondences can be
//! supplied through the JSON format in [`io`].

mod harris;
pub mod io;
mod lines;
mod points;

pub use harris::{detect_corners, Corner};
pub use io::{load_correspondences, save_correspondences};
pub use lines::{detect_and_match_lines, detect_lines, match_lines};
pub use points::detect_and_match_points;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct PointMatch {
    /// Position on the source image.
    pub p: Point,
    /// Position on the target image.
    pub p_prime: Point,
    /// Match confidence in `[0, 1]`.
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    pub start: Point,
    pub end: Point,
}

impl LineSegment {
    pub fn new(start: Point, end: Point) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn point_at(&self, t: f64) -> Point {
        self.start + (self.end - self.start) * t
    }

    /// Uniformly spaced key points including both endpoints, roughly one per
    /// `spacing` pixels and never fewer than `min_count`. Each comes with its
    /// parameter `u ∈ [0, 1]` along the segment.
    pub fn key_points(&self, spacing: f64, min_count: usize) -> Vec<(Point, f64)> {
        let by_length = (self.length() / spacing).ceil() as usize + 1;
        let count = by_length.max(min_count).max(2);
        (0..count)
            .map(|k| {
                let u = k as f64 / (count - 1) as f64;
                (self.point_at(u), u)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.start.iter().chain(self.end.iter()).all(|v| v.is_finite())
    }
}

/// Homogeneous line `a·x + b·y + c = 0` stored with `a² + b² = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousLine {
    coeffs: [f64; 3],
}

impl HomogeneousLine {
    /// Normalizes `(a, b, c)`; `None` when `(a, b)` vanishes.
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = a.hypot(b);
        if !(n > 1e-300) || !c.is_finite() {
            return None;
        }
        let (mut a, mut b, mut c) = (a / n, b / n, c / n);
        // Fix the sign so equal lines compare equal.
        if a < 0.0 || (a == 0.0 && b < 0.0) {
            a = -a;
            b = -b;
            c = -c;
        }
        Some(Self { coeffs: [a, b, c] })
    }

    pub fn from_vector(v: &Vector3<f64>) -> Option<Self> {
        Self::new(v.x, v.y, v.z)
    }

    /// Line through both endpoints of a segment.
    pub fn through(seg: &LineSegment) -> Option<Self> {
        let p = Vector3::new(seg.start.x, seg.start.y, 1.0);
        let q = Vector3::new(seg.end.x, seg.end.y, 1.0);
        Self::from_vector(&p.cross(&q))
    }

    pub fn coeffs(&self) -> [f64; 3] {
        self.coeffs
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from(self.coeffs)
    }

    /// Signed distance of `p` to the line.
    pub fn distance(&self, p: &Point) -> f64 {
        let [a, b, c] = self.coeffs;
        a * p.x + b * p.y + c
    }

    /// The same line expressed in coordinates shifted by `-offset`.
    pub fn translated(&self, offset: (f64, f64)) -> Self {
        let [a, b, c] = self.coeffs;
        Self { coeffs: [a, b, c + a * offset.0 + b * offset.1] }
    }

    /// The same line in coordinates scaled by `1 / factor`.
    pub fn scaled_down(&self, factor: f64) -> Self {
        let [a, b, c] = self.coeffs;
        Self { coeffs: [a, b, c / factor] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineMatch {
    /// Segment on the source image.
    pub seg: LineSegment,
    /// Matching line on the target image.
    pub line_prime: HomogeneousLine,
    /// The target segment `line_prime` was derived from.
    pub seg_prime: LineSegment,
}

impl LineMatch {
    pub fn new(seg: LineSegment, seg_prime: LineSegment) -> Option<Self> {
        Some(Self { seg, line_prime: HomogeneousLine::through(&seg_prime)?, seg_prime })
    }
}

/// All correspondences fed into global alignment and the warp energy.
///
/// `unmatched_lines` together with the source segments of `matched_lines`
/// make up every extracted source line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub points: Vec<PointMatch>,
    pub matched_lines: Vec<LineMatch>,
    pub unmatched_lines: Vec<LineSegment>,
}

impl CorrespondenceSet {
    /// Every extracted source segment, matched first.
    pub fn all_source_lines(&self) -> Vec<LineSegment> {
        self.matched_lines
            .iter()
            .map(|m| m.seg)
            .chain(self.unmatched_lines.iter().copied())
            .collect()
    }

    /// Checks the structural invariants that do not depend on image sizes.
    pub fn validate(&self, min_line_length: f64) -> Result<()> {
        for (i, m) in self.points.iter().enumerate() {
            let finite = m.p.iter().chain(m.p_prime.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidCorrespondence(format!("points[{i}] is not finite")));
            }
            if !(0.0..=1.0).contains(&m.score) {
                return Err(Error::InvalidCorrespondence(format!(
                    "points[{i}] score {} outside [0, 1]",
                    m.score
                )));
            }
        }
        let check_seg = |what: &str, i: usize, s: &LineSegment| -> Result<()> {
            if !s.is_finite() {
                return Err(Error::InvalidCorrespondence(format!("{what}[{i}] is not finite")));
            }
            if !(s.length() >= min_line_length) || s.length() == 0.0 {
                return Err(Error::InvalidCorrespondence(format!(
                    "{what}[{i}] has length {} below the minimum {}",
                    s.length(),
                    min_line_length
                )));
            }
            Ok(())
        };
        for (i, m) in self.matched_lines.iter().enumerate() {
            check_seg("lines_matched.src", i, &m.seg)?;
            check_seg("lines_matched.dst", i, &m.seg_prime)?;
            let [a, b, _] = m.line_prime.coeffs();
            if (a * a + b * b - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidCorrespondence(format!(
                    "lines_matched[{i}] target line is not normalized"
                )));
            }
        }
        for (i, s) in self.unmatched_lines.iter().enumerate() {
            check_seg("lines_unmatched", i, s)?;
        }
        Ok(())
    }

    /// Checks that all positions lie inside their image rectangles.
    pub fn validate_bounds(&self, src: (usize, usize), dst: (usize, usize)) -> Result<()> {
        let inside = |p: &Point, (w, h): (usize, usize)| {
            p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64
        };
        for (i, m) in self.points.iter().enumerate() {
            if !inside(&m.p, src) || !inside(&m.p_prime, dst) {
                return Err(Error::InvalidCorrespondence(format!(
                    "points[{i}] lies outside its image"
                )));
            }
        }
        for (i, m) in self.matched_lines.iter().enumerate() {
            if !inside(&m.seg.start, src) || !inside(&m.seg.end, src) {
                return Err(Error::InvalidCorrespondence(format!(
                    "lines_matched[{i}] source segment lies outside the source image"
                )));
            }
        }
        for (i, s) in self.unmatched_lines.iter().enumerate() {
            if !inside(&s.start, src) || !inside(&s.end, src) {
                return Err(Error::InvalidCorrespondence(format!(
                    "lines_unmatched[{i}] lies outside the source image"
                )));
            }
        }
        Ok(())
    }
}

/// Settings of the built-in detectors and matchers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub harris_k: f64,
    /// Corners kept per image after non-maximum suppression.
    pub max_corners: usize,
    /// Minimum spacing between kept corners, in pixels.
    pub corner_spacing: usize,
    /// Response threshold relative to the strongest corner.
    pub corner_threshold: f64,
    /// Side of the square NCC patch (odd).
    pub patch_size: usize,
    /// Lowe-style ratio on patch distances `sqrt(2·(1 − NCC))`.
    pub ratio_test: f64,
    /// Matches with a lower NCC are discarded.
    pub min_ncc: f64,
    pub min_line_length: f64,
    /// Gradient magnitude (intensity per pixel) below which pixels are not edges.
    pub edge_threshold: f64,
    /// Orientation tolerance when growing line regions, in degrees.
    pub region_angle_tolerance: f64,
    /// Orientation tolerance when matching transferred segments, in degrees.
    pub line_match_angle: f64,
    /// Endpoint-to-line distance tolerance when matching segments, in pixels.
    pub line_match_distance: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            harris_k: 0.04,
            max_corners: 1500,
            corner_spacing: 5,
            corner_threshold: 0.005,
            patch_size: 11,
            ratio_test: 0.8,
            min_ncc: 0.6,
            min_line_length: 10.0,
            edge_threshold: 0.04,
            region_angle_tolerance: 22.5,
            line_match_angle: 5.0,
            line_match_distance: 4.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_line_is_normalized_and_canonical() {
        let seg = LineSegment::new(Point::new(0.0, 3.0), Point::new(10.0, 3.0));
        let l = HomogeneousLine::through(&seg).unwrap();
        let [a, b, c] = l.coeffs();
        assert!((a * a + b * b - 1.0).abs() < 1e-15);
        assert!((l.distance(&Point::new(5.0, 5.0)).abs() - 2.0).abs() < 1e-12);
        let rev = HomogeneousLine::through(&LineSegment::new(seg.end, seg.start)).unwrap();
        assert_eq!(rev.coeffs(), [a, b, c]);
        assert!(HomogeneousLine::through(&LineSegment::new(seg.start, seg.start)).is_none());
    }

    #[test]
    fn translated_and_scaled_lines_keep_incidence() {
        let seg = LineSegment::new(Point::new(1.0, 2.0), Point::new(7.0, 11.0));
        let l = HomogeneousLine::through(&seg).unwrap();
        let t = l.translated((5.0, -3.0));
        assert!(t.distance(&Point::new(1.0 - 5.0, 2.0 + 3.0)).abs() < 1e-12);
        let s = l.scaled_down(4.0);
        assert!(s.distance(&Point::new(7.0 / 4.0, 11.0 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn key_points_cover_the_segment() {
        let seg = LineSegment::new(Point::new(0.0, 0.0), Point::new(35.0, 0.0));
        let kp = seg.key_points(10.0, 3);
        assert_eq!(kp.len(), 5);
        assert_eq!(kp[0].0, seg.start);
        assert_eq!(kp[4].0, seg.end);
        let short = LineSegment::new(Point::new(0.0, 0.0), Point::new(4.0, 0.0));
        assert_eq!(short.key_points(10.0, 3).len(), 3);
    }

    #[test]
    fn validation_catches_zero_length() {
        let mut set = CorrespondenceSet::default();
        set.unmatched_lines.push(LineSegment::new(Point::new(1.0, 1.0), Point::new(1.0, 1.0)));
        assert!(set.validate(0.0).is_err());
    }
}
