use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dlt::{dlt_estimate_refs, line_residual, point_residual};
use super::Homography;
use crate::error::{Error, Result};
use crate::features::{CorrespondenceSet, LineMatch, PointMatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier bound on `‖H p − p'‖`, pixels.
    pub point_threshold: f64,
    /// Inlier bound on the endpoint-to-line distance, pixels.
    pub line_threshold: f64,
    pub ransac_iterations: usize,
    /// Confidence driving the adaptive iteration count.
    pub ransac_confidence: f64,
    /// Minimum number of inlier features (points plus lines).
    pub min_inliers: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            point_threshold: 3.0,
            line_threshold: 3.0,
            ransac_iterations: 2000,
            ransac_confidence: 0.999,
            min_inliers: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub model: Homography,
    pub point_inliers: Vec<usize>,
    pub line_inliers: Vec<usize>,
    pub iterations_used: usize,
}

struct Consensus {
    points: Vec<usize>,
    lines: Vec<usize>,
    /// Sum of truncated residuals, the tie-breaker between equal counts.
    cost: f64,
}

impl Consensus {
    fn count(&self) -> usize {
        self.points.len() + self.lines.len()
    }

    fn better_than(&self, other: &Consensus) -> bool {
        self.count() > other.count() || (self.count() == other.count() && self.cost < other.cost)
    }
}

fn consensus(h: &Homography, pts: &[PointMatch], lines: &[LineMatch], cfg: &RansacConfig) -> Consensus {
    let mut c = Consensus { points: Vec::new(), lines: Vec::new(), cost: 0.0 };
    for (i, m) in pts.iter().enumerate() {
        let r = point_residual(h, m);
        if r <= cfg.point_threshold {
            c.points.push(i);
            c.cost += r * r;
        } else {
            c.cost += cfg.point_threshold * cfg.point_threshold;
        }
    }
    for (i, l) in lines.iter().enumerate() {
        let r = line_residual(h, l);
        if r <= cfg.line_threshold {
            c.lines.push(i);
            c.cost += r * r;
        } else {
            c.cost += cfg.line_threshold * cfg.line_threshold;
        }
    }
    c
}

fn twice_area(a: &crate::features::Point, b: &crate::features::Point, c: &crate::features::Point) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs()
}

/// Rejects minimal samples with three (nearly) collinear points on either side.
fn degenerate_sample(sample: &[&PointMatch]) -> bool {
    let sides: [Vec<_>; 2] = [
        sample.iter().map(|m| m.p).collect(),
        sample.iter().map(|m| m.p_prime).collect(),
    ];
    sides.iter().any(|s| {
        (0..4).any(|skip| {
            let t: Vec<_> = (0..4).filter(|&k| k != skip).map(|k| &s[k]).collect();
            twice_area(t[0], t[1], t[2]) < 1e-6
        })
    })
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let good = inlier_ratio.powi(4);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() { n.ceil().max(1.0) as usize } else { usize::MAX }
}

/// Robust homography: hypotheses from 4-point samples, consensus over points
/// and lines, final least-squares refit on all inliers. Deterministic per seed.
pub fn ransac_homography(corr: &CorrespondenceSet, cfg: &RansacConfig, seed: u64) -> Result<RansacResult> {
    let pts = &corr.points;
    let lines = &corr.matched_lines;
    if pts.len() < 4 {
        return Err(Error::Ransac(format!("need at least 4 point matches, got {}", pts.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Homography, Consensus)> = None;
    let mut budget = cfg.ransac_iterations.max(1);
    let mut it = 0;
    while it < budget {
        it += 1;
        let idx = sample(&mut rng, pts.len(), 4);
        let chosen: Vec<&PointMatch> = idx.iter().map(|i| &pts[i]).collect();
        if degenerate_sample(&chosen) {
            continue;
        }
        let Ok(h) = dlt_estimate_refs(&chosen, &[]) else { continue };
        let c = consensus(&h, pts, lines, cfg);
        if best.as_ref().is_none_or(|(_, b)| c.better_than(b)) {
            let ratio = c.points.len() as f64 / pts.len() as f64;
            budget = budget.min(required_iterations(ratio, cfg.ransac_confidence).max(it));
            best = Some((h, c));
        }
    }
    let Some((mut model, mut inliers)) = best else {
        return Err(Error::Ransac("every minimal sample was degenerate".into()));
    };

    // Refit on the consensus set until it stops growing.
    for _ in 0..5 {
        let p: Vec<&PointMatch> = inliers.points.iter().map(|&i| &pts[i]).collect();
        let l: Vec<&LineMatch> = inliers.lines.iter().map(|&i| &lines[i]).collect();
        let Ok(refit) = dlt_estimate_refs(&p, &l) else { break };
        let c = consensus(&refit, pts, lines, cfg);
        if c.count() < inliers.count() {
            break;
        }
        let unchanged = c.points == inliers.points && c.lines == inliers.lines;
        model = refit;
        inliers = c;
        if unchanged {
            break;
        }
    }

    if inliers.points.len() < 4 || inliers.count() < cfg.min_inliers {
        return Err(Error::Ransac(format!(
            "best model has {} point and {} line inliers (need ≥ 4 points and ≥ {} features)",
            inliers.points.len(),
            inliers.lines.len(),
            cfg.min_inliers
        )));
    }
    Ok(RansacResult {
        model,
        point_inliers: inliers.points,
        line_inliers: inliers.lines,
        iterations_used: it,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Point;
    use rand::Rng;

    fn truth() -> Homography {
        Homography::from_row_major([0.98, 0.06, -40.0, -0.05, 1.03, 15.0, 1e-4, 5e-5, 1.0]).unwrap()
    }

    fn synthetic(inliers: usize, outliers: usize, seed: u64) -> CorrespondenceSet {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        for _ in 0..inliers {
            let p = Point::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            points.push(PointMatch { p, p_prime: h.map(&p).unwrap(), score: 1.0 });
        }
        for _ in 0..outliers {
            let p = Point::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let q = Point::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            points.push(PointMatch { p, p_prime: q, score: 1.0 });
        }
        CorrespondenceSet { points, ..Default::default() }
    }

    #[test]
    fn clean_data_recovers_everything() {
        let corr = synthetic(100, 0, 1);
        let r = ransac_homography(&corr, &RansacConfig::default(), 42).unwrap();
        assert_eq!(r.point_inliers.len(), 100);
        assert!(r.model.distance(&truth()) < 1e-6);
    }

    #[test]
    fn contaminated_data() {
        let corr = synthetic(60, 40, 2);
        let r = ransac_homography(&corr, &RansacConfig::default(), 42).unwrap();
        let true_found = r.point_inliers.iter().filter(|&&i| i < 60).count();
        assert!(true_found >= 57, "{true_found}");
        for &i in &r.point_inliers {
            assert!(point_residual(&r.model, &corr.points[i]) <= 3.0);
        }
        for i in 0..60 {
            assert!(point_residual(&r.model, &corr.points[i]) < 0.5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let corr = synthetic(30, 30, 3);
        let a = ransac_homography(&corr, &RansacConfig::default(), 7).unwrap();
        let b = ransac_homography(&corr, &RansacConfig::default(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_points() {
        let corr = synthetic(3, 0, 4);
        assert!(matches!(ransac_homography(&corr, &RansacConfig::default(), 1), Err(Error::Ransac(_))));
    }

    #[test]
    fn adaptive_iteration_count() {
        assert_eq!(required_iterations(1.0, 0.999), 1);
        let n = required_iterations(0.5, 0.999);
        assert!((100..120).contains(&n), "{n}");
    }
}
