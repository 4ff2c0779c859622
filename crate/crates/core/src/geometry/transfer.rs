use super::{Canvas, Homography};
use crate::features::{CorrespondenceSet, LineMatch, LineSegment, Point, PointMatch};

#[derive(Clone, Debug, PartialEq)]
pub struct Transferred {
    /// Correspondences in canvas coordinates: source side warped by `h`,
    /// target side shifted by the canvas offset.
    pub set: CorrespondenceSet,
    /// Features dropped because they left the canvas.
    pub dropped: usize,
}

/// Re-expresses correspondences on the shared canvas.
pub fn transfer_correspondences(corr: &CorrespondenceSet, h: &Homography, canvas: &Canvas) -> Transferred {
    let (ox, oy) = (canvas.offset.0 as f64, canvas.offset.1 as f64);
    let src = |p: &Point| h.map(p).map(|q| canvas.to_canvas(&q)).filter(|q| canvas.contains(q));
    let dst = |p: &Point| Some(canvas.to_canvas(p)).filter(|q| canvas.contains(q));
    let src_seg = |s: &LineSegment| Some(LineSegment::new(src(&s.start)?, src(&s.end)?));
    let dst_seg = |s: &LineSegment| Some(LineSegment::new(dst(&s.start)?, dst(&s.end)?));

    let mut dropped = 0;
    let mut out = CorrespondenceSet::default();
    for m in &corr.points {
        match (src(&m.p), dst(&m.p_prime)) {
            (Some(p), Some(p_prime)) => out.points.push(PointMatch { p, p_prime, score: m.score }),
            _ => dropped += 1,
        }
    }
    for l in &corr.matched_lines {
        match (src_seg(&l.seg), dst_seg(&l.seg_prime)) {
            (Some(seg), Some(seg_prime)) => out.matched_lines.push(LineMatch {
                seg,
                line_prime: l.line_prime.translated((ox, oy)),
                seg_prime,
            }),
            _ => dropped += 1,
        }
    }
    for s in &corr.unmatched_lines {
        match src_seg(s) {
            Some(seg) => out.unmatched_lines.push(seg),
            None => dropped += 1,
        }
    }
    Transferred { set: out, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_set() -> CorrespondenceSet {
        let seg = LineSegment::new(Point::new(5.0, 5.0), Point::new(40.0, 12.0));
        let seg2 = LineSegment::new(Point::new(6.0, 4.0), Point::new(41.0, 11.0));
        CorrespondenceSet {
            points: vec![PointMatch { p: Point::new(10.0, 20.0), p_prime: Point::new(12.0, 21.0), score: 0.9 }],
            matched_lines: vec![LineMatch::new(seg, seg2).unwrap()],
            unmatched_lines: vec![LineSegment::new(Point::new(1.0, 30.0), Point::new(30.0, 30.0))],
        }
    }

    #[test]
    fn identity_is_a_no_op() {
        let corr = sample_set();
        let canvas = Canvas { offset: (0, 0), width: 64, height: 48 };
        let t = transfer_correspondences(&corr, &Homography::identity(), &canvas);
        assert_eq!(t.dropped, 0);
        let p = &t.set.points[0];
        assert!((p.p - corr.points[0].p).norm() < 1e-12);
        assert_eq!(p.p_prime, corr.points[0].p_prime);
        assert_eq!(t.set.matched_lines[0].line_prime, corr.matched_lines[0].line_prime);
    }

    #[test]
    fn translation_shifts_source_only() {
        let corr = sample_set();
        let canvas = Canvas { offset: (0, 0), width: 100, height: 100 };
        let t = transfer_correspondences(&corr, &Homography::translation(7.0, 3.0), &canvas);
        let p = &t.set.points[0];
        assert!((p.p - Point::new(17.0, 23.0)).norm() < 1e-12);
        assert_eq!(p.p_prime, corr.points[0].p_prime);
        let s = t.set.unmatched_lines[0];
        assert!((s.start - Point::new(8.0, 33.0)).norm() < 1e-12);
    }

    #[test]
    fn target_line_follows_offset() {
        let corr = sample_set();
        let canvas = Canvas { offset: (-10, -5), width: 100, height: 100 };
        let t = transfer_correspondences(&corr, &Homography::identity(), &canvas);
        let l = &t.set.matched_lines[0];
        let [a, b, _] = l.line_prime.coeffs();
        assert!((a * a + b * b - 1.0).abs() < 1e-15);
        for p in [l.seg_prime.start, l.seg_prime.end] {
            assert!(l.line_prime.distance(&p).abs() < 1e-9);
        }
    }

    #[test]
    fn features_off_canvas_are_counted() {
        let corr = sample_set();
        let canvas = Canvas { offset: (0, 0), width: 20, height: 20 };
        let t = transfer_correspondences(&corr, &Homography::identity(), &canvas);
        assert_eq!(t.set.points.len(), 0);
        assert_eq!(t.dropped, 3);
    }

    #[test]
    fn residuals_survive_transfer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Homography::from_row_major([1.03, -0.04, 20.0, 0.05, 0.97, -8.0, 1e-4, 2e-4, 1.0]).unwrap();
        let canvas = Canvas { offset: (-30, -40), width: 400, height: 400 };
        let points: Vec<_> = (0..50)
            .map(|_| PointMatch {
                p: Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)),
                p_prime: Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)),
                score: 1.0,
            })
            .collect();
        let corr = CorrespondenceSet { points, ..Default::default() };
        let t = transfer_correspondences(&corr, &h, &canvas);
        assert_eq!(t.dropped, 0);
        for (orig, moved) in corr.points.iter().zip(&t.set.points) {
            let m = h.matrix();
            let w = m[(2, 0)] * orig.p.x + m[(2, 1)] * orig.p.y + m[(2, 2)];
            let x = (m[(0, 0)] * orig.p.x + m[(0, 1)] * orig.p.y + m[(0, 2)]) / w;
            let y = (m[(1, 0)] * orig.p.x + m[(1, 1)] * orig.p.y + m[(1, 2)]) / w;
            let direct = ((x - orig.p_prime.x).powi(2) + (y - orig.p_prime.y).powi(2)).sqrt();
            assert!(((moved.p - moved.p_prime).norm() - direct).abs() < 1e-9);
        }
    }
}
