//! JSON exchange format for correspondences.
//!
//! ```json
//! {
//!   "points": [[x1, y1, x2, y2], ...],
//!   "lines_matched": [{"src": [xs, ys, xe, ye], "dst": [xs, ys, xe, ye]}, ...],
//!   "lines_unmatched": [[xs, ys, xe, ye], ...]
//! }
//! ```
//!
//! Pixel coordinates, origin top-left, x right, y down. Point pairs and
//! `src` segments are on the source image, `dst` segments on the target.
//! Point scores are not stored; loaded matches get score 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorrespondenceSet, LineMatch, LineSegment, Point, PointMatch};
use crate::error::{Error, Result};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrespondenceFile {
    #[serde(default)]
    points: Vec<[f64; 4]>,
    #[serde(default)]
    lines_matched: Vec<MatchedLine>,
    #[serde(default)]
    lines_unmatched: Vec<[f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchedLine {
    src: [f64; 4],
    dst: [f64; 4],
}

fn segment(v: &[f64; 4]) -> LineSegment {
    LineSegment::new(Point::new(v[0], v[1]), Point::new(v[2], v[3]))
}

fn quad(s: &LineSegment) -> [f64; 4] {
    [s.start.x, s.start.y, s.end.x, s.end.y]
}

/// Parses and validates a correspondence document. `origin` only labels errors.
pub fn parse_correspondences(text: &str, origin: &Path) -> Result<CorrespondenceSet> {
    let file: CorrespondenceFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let points = file
        .points
        .iter()
        .map(|v| PointMatch {
            p: Point::new(v[0], v[1]),
            p_prime: Point::new(v[2], v[3]),
            score: 1.0,
        })
        .collect();
    let matched_lines = file
        .lines_matched
        .iter()
        .enumerate()
        .map(|(i, m)| {
            LineMatch::new(segment(&m.src), segment(&m.dst)).ok_or_else(|| {
                Error::InvalidCorrespondence(format!(
                    "lines_matched[{i}].dst is degenerate (zero length)"
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unmatched_lines = file.lines_unmatched.iter().map(segment).collect();
    let set = CorrespondenceSet { points, matched_lines, unmatched_lines };
    set.validate(0.0)?;
    Ok(set)
}

pub fn load_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_correspondences(&text, path)
}

pub fn correspondences_to_json(set: &CorrespondenceSet) -> String {
    let file = CorrespondenceFile {
        points: set.points.iter().map(|m| [m.p.x, m.p.y, m.p_prime.x, m.p_prime.y]).collect(),
        lines_matched: set
            .matched_lines
            .iter()
            .map(|m| MatchedLine { src: quad(&m.seg), dst: quad(&m.seg_prime) })
            .collect(),
        lines_unmatched: set.unmatched_lines.iter().map(quad).collect(),
    };
    serde_json::to_string_pretty(&file).expect("correspondences serialize")
}

pub fn save_correspondences(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, correspondences_to_json(set) + "\n")
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
