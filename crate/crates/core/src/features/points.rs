use rayon::prelude::*;

use super::{detect_corners, DetectorConfig, Point, PointMatch};
use crate::imaging::{Plane, RasterImage};

struct Descriptor {
    pos: Point,
    /// Zero-mean, unit-norm patch.
    patch: Vec<f64>,
}

fn describe(lum: &Plane, pos: Point, half: isize) -> Option<Descriptor> {
    let mut patch = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for dy in -half..=half {
        for dx in -half..=half {
            patch.push(lum.sample_bilinear(pos.x + dx as f64, pos.y + dy as f64)?);
        }
    }
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    patch.iter_mut().for_each(|v| *v -= mean);
    let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    patch.iter_mut().for_each(|v| *v /= norm);
    Some(Descriptor { pos, patch })
}

fn descriptors(lum: &Plane, cfg: &DetectorConfig) -> Vec<Descriptor> {
    let half = (cfg.patch_size / 2) as isize;
    detect_corners(lum, cfg, half as usize + 2)
        .into_iter()
        .filter_map(|c| describe(lum, c.pos, half))
        .collect()
}

#[inline]
fn patch_distance(ncc: f64) -> f64 {
    (2.0 * (1.0 - ncc)).max(0.0).sqrt()
}

/// Harris corners matched by patch NCC with a ratio test and mutual-best check.
///
/// Returns matches sorted by descending score (the NCC, clamped to `[0, 1]`).
pub fn detect_and_match_points(
    src: &RasterImage,
    dst: &RasterImage,
    cfg: &DetectorConfig,
) -> Vec<PointMatch> {
    let (a, b) = rayon::join(
        || descriptors(&src.luminance_plane(), cfg),
        || descriptors(&dst.luminance_plane(), cfg),
    );
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let scores: Vec<Vec<f64>> = a
        .par_iter()
        .map(|da| {
            b.iter()
                .map(|db| da.patch.iter().zip(&db.patch).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();

    // Best target per source and best source per target; lowest index wins ties.
    let mut best_for_dst = vec![(usize::MAX, f64::NEG_INFINITY); b.len()];
    for (i, row) in scores.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            if s > best_for_dst[j].1 {
                best_for_dst[j] = (i, s);
            }
        }
    }

    let mut matches = Vec::new();
    for (i, row) in scores.iter().enumerate() {
        let (mut best, mut second) = ((usize::MAX, f64::NEG_INFINITY), f64::NEG_INFINITY);
        for (j, &s) in row.iter().enumerate() {
            if s > best.1 {
                second = best.1;
                best = (j, s);
            } else if s > second {
                second = s;
            }
        }
        let (j, ncc) = best;
        if best_for_dst[j].0 != i || ncc < cfg.min_ncc {
            continue;
        }
        if second.is_finite() && patch_distance(ncc) >= cfg.ratio_test * patch_distance(second) {
            continue;
        }
        matches.push((i, PointMatch { p: a[i].pos, p_prime: b[j].pos, score: ncc.clamp(0.0, 1.0) }));
    }
    matches.sort_by(|x, y| y.1.score.total_cmp(&x.1.score).then(x.0.cmp(&y.0)));
    matches.into_iter().map(|(_, m)| m).collect()
}
