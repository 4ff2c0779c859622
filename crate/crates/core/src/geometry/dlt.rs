//! Direct linear transform from mixed point and line correspondences.
//!
//! Each point pair contributes the two independent rows of `p' × (H p) = 0`.
//! Each line pair contributes one row per source endpoint, `l'ᵀ (H p) = 0`,
//! which asks the mapped endpoints to fall on the target line.

use nalgebra::{DMatrix, Matrix3};

use super::Homography;
use crate::error::{Error, Result};
use crate::features::{LineMatch, Point, PointMatch};

/// Relative singular-value threshold used to decide numerical rank.
const RANK_TOLERANCE: f64 = 1e-10;

/// Similarity moving the centroid to the origin with RMS distance √2.
fn normalizing_transform<'a>(points: impl Iterator<Item = &'a Point>) -> Option<Matrix3<f64>> {
    let pts: Vec<&Point> = points.collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let rms = (pts.iter().map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: &Point) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Least-squares homography from point and line matches (Hartley-normalized).
pub fn dlt_estimate(points: &[PointMatch], lines: &[LineMatch]) -> Result<Homography> {
    let point_refs: Vec<&PointMatch> = points.iter().collect();
    let line_refs: Vec<&LineMatch> = lines.iter().collect();
    dlt_estimate_refs(&point_refs, &line_refs)
}

pub(crate) fn dlt_estimate_refs(points: &[&PointMatch], lines: &[&LineMatch]) -> Result<Homography> {
    let rows = 2 * points.len() + 2 * lines.len();
    if rows < 8 {
        return Err(Error::TooFewConstraints { rows });
    }
    let src_pts = points
        .iter()
        .map(|m| &m.p)
        .chain(lines.iter().flat_map(|l| [&l.seg.start, &l.seg.end]));
    let dst_pts = points
        .iter()
        .map(|m| &m.p_prime)
        .chain(lines.iter().flat_map(|l| [&l.seg_prime.start, &l.seg_prime.end]));
    let (Some(t1), Some(t2)) = (normalizing_transform(src_pts), normalizing_transform(dst_pts))
    else {
        return Err(Error::RankDeficient { rank: 0 });
    };
    let t2_inv = t2.try_inverse().expect("similarity is invertible");
    let t2_inv_t = t2_inv.transpose();

    let mut a = DMatrix::<f64>::zeros(rows.max(9), 9);
    let mut r = 0;
    for m in points {
        let (x, y) = apply(&t1, &m.p);
        let (u, v) = apply(&t2, &m.p_prime);
        a.row_mut(r).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        a.row_mut(r + 1).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        r += 2;
    }
    for l in lines {
        let ln = t2_inv_t * l.line_prime.as_vector();
        let ln = ln / ln.x.hypot(ln.y);
        let (la, lb, lc) = (ln.x, ln.y, ln.z);
        for p in [&l.seg.start, &l.seg.end] {
            let (x, y) = apply(&t1, p);
            a.row_mut(r)
                .copy_from_slice(&[la * x, la * y, la, lb * x, lb * y, lb, lc * x, lc * y, lc]);
            r += 1;
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count();
    if rank < 8 {
        return Err(Error::RankDeficient { rank });
    }
    let (min_idx, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    Homography::from_matrix(t2_inv * hn * t1)
}

/// Point residual `‖H p − p'‖`, infinite when `p` maps to infinity.
pub fn point_residual(h: &Homography, m: &PointMatch) -> f64 {
    h.map(&m.p).map_or(f64::INFINITY, |q| (q - m.p_prime).norm())
}

/// Line residual: the larger endpoint distance from `H·endpoint` to `l'`.
pub fn line_residual(h: &Homography, l: &LineMatch) -> f64 {
    [l.seg.start, l.seg.end]
        .iter()
        .map(|p| h.map(p).map_or(f64::INFINITY, |q| l.line_prime.distance(&q).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::LineSegment;

    fn truth() -> Homography {
        Homography::from_row_major([1.05, 0.08, 30.0, -0.04, 0.97, -12.0, 2e-4, -1e-4, 1.0]).unwrap()
    }

    fn pm(h: &Homography, x: f64, y: f64) -> PointMatch {
        let p = Point::new(x, y);
        PointMatch { p, p_prime: h.map(&p).unwrap(), score: 1.0 }
    }

    #[test]
    fn four_exact_points() {
        let h = truth();
        let pts = [pm(&h, 10.0, 15.0), pm(&h, 300.0, 20.0), pm(&h, 280.0, 240.0), pm(&h, 25.0, 200.0)];
        let est = dlt_estimate(&pts, &[]).unwrap();
        assert!(est.distance(&h) < 1e-6, "{}", est.distance(&h));
    }

    #[test]
    fn identity_fit() {
        let h = Homography::identity();
        let pts: Vec<_> =
            [(0.0, 0.0), (10.0, 1.0), (3.0, 17.0), (22.0, 25.0), (8.0, 9.0)].iter().map(|&(x, y)| pm(&h, x, y)).collect();
        assert!(dlt_estimate(&pts, &[]).unwrap().distance(&h) < 1e-9);
    }

    fn line(h: &Homography, a: Point, b: Point) -> LineMatch {
        let seg = LineSegment::new(a, b);
        // Target segment: a different stretch of the mapped line.
        let (pa, pb) = (h.map(&seg.point_at(-0.3)).unwrap(), h.map(&seg.point_at(1.4)).unwrap());
        LineMatch::new(seg, LineSegment::new(pa, pb)).unwrap()
    }

    #[test]
    fn three_points_one_line() {
        let h = truth();
        let pts = [pm(&h, 10.0, 15.0), pm(&h, 280.0, 240.0), pm(&h, 25.0, 200.0)];
        let lines = [line(&h, Point::new(300.0, 20.0), Point::new(200.0, 90.0))];
        let est = dlt_estimate(&pts, &lines).unwrap();
        assert!(est.distance(&h) < 1e-6, "{}", est.distance(&h));
    }

    #[test]
    fn two_points_three_lines() {
        let h = truth();
        let pts = [pm(&h, 10.0, 15.0), pm(&h, 280.0, 240.0)];
        let lines = [
            line(&h, Point::new(300.0, 20.0), Point::new(200.0, 90.0)),
            line(&h, Point::new(25.0, 200.0), Point::new(120.0, 260.0)),
            line(&h, Point::new(60.0, 30.0), Point::new(90.0, 150.0)),
        ];
        let est = dlt_estimate(&pts, &lines).unwrap();
        assert!(est.distance(&h) < 1e-6, "{}", est.distance(&h));
    }

    #[test]
    fn two_points_two_lines_leave_a_homology_free() {
        // Homologies with the line through both points as axis and the
        // crossing of both lines as centre satisfy every constraint.
        let h = truth();
        let pts = [pm(&h, 10.0, 15.0), pm(&h, 280.0, 240.0)];
        let lines = [
            line(&h, Point::new(300.0, 20.0), Point::new(200.0, 90.0)),
            line(&h, Point::new(25.0, 200.0), Point::new(120.0, 260.0)),
        ];
        assert!(matches!(dlt_estimate(&pts, &lines), Err(Error::RankDeficient { rank: 7 })));
    }

    #[test]
    fn collinear_points_are_rank_deficient() {
        let h = Homography::identity();
        let pts: Vec<_> = (0..6).map(|i| pm(&h, i as f64 * 3.0, i as f64 * 2.0)).collect();
        assert!(matches!(dlt_estimate(&pts, &[]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn too_few_rows() {
        let h = Homography::identity();
        let pts = [pm(&h, 0.0, 0.0), pm(&h, 1.0, 0.0), pm(&h, 0.0, 1.0)];
        assert!(matches!(dlt_estimate(&pts, &[]), Err(Error::TooFewConstraints { rows: 6 })));
    }
}
