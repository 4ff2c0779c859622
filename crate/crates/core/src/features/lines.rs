use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use super::{DetectorConfig, HomogeneousLine, LineMatch, LineSegment, Point};
use crate::geometry::Homography;
use crate::imaging::{blur_binomial, central_gradient, Mask, Plane, RasterImage};

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Line segments grown from 8-connected regions of pixels whose gradient
/// direction agrees within the configured tolerance, then fitted by
/// magnitude-weighted principal axes.
pub fn detect_lines(lum: &Plane, cfg: &DetectorConfig) -> Vec<LineSegment> {
    let (w, h) = (lum.width(), lum.height());
    let smooth = blur_binomial(lum, &Mask::filled(w, h, true));
    let (gx, gy) = central_gradient(&smooth);
    let mag: Vec<f64> = gx.data().iter().zip(gy.data()).map(|(a, b)| a.hypot(*b)).collect();
    let ang: Vec<f64> = gx.data().iter().zip(gy.data()).map(|(a, b)| b.atan2(*a)).collect();
    let tol = cfg.region_angle_tolerance.to_radians();

    let mut order: Vec<usize> = (0..w * h).filter(|&i| mag[i] > cfg.edge_threshold).collect();
    order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));

    let mut used = vec![false; w * h];
    let mut segments = Vec::new();
    let mut queue = VecDeque::new();
    for seed in order {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let (mut sum_cos, mut sum_sin) = (ang[seed].cos(), ang[seed].sin());
        let mut region_angle = ang[seed];
        let mut region = vec![seed];
        queue.clear();
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx < 0 || yy < 0 || xx as usize >= w || yy as usize >= h {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    if used[j] || mag[j] <= cfg.edge_threshold {
                        continue;
                    }
                    if wrap_angle(ang[j] - region_angle).abs() > tol {
                        continue;
                    }
                    used[j] = true;
                    region.push(j);
                    queue.push_back(j);
                    sum_cos += ang[j].cos();
                    sum_sin += ang[j].sin();
                    region_angle = sum_sin.atan2(sum_cos);
                }
            }
        }
        if let Some(seg) = fit_segment(&region, &mag, w, h, region_angle, tol, cfg) {
            segments.push(seg);
        }
    }
    segments
}

fn fit_segment(
    region: &[usize],
    mag: &[f64],
    w: usize,
    h: usize,
    grad_angle: f64,
    tol: f64,
    cfg: &DetectorConfig,
) -> Option<LineSegment> {
    if (region.len() as f64) < cfg.min_line_length * 0.5 || region.len() < 4 {
        return None;
    }
    let pos = |i: usize| Vector2::new((i % w) as f64, (i / w) as f64);
    let total: f64 = region.iter().map(|&i| mag[i]).sum();
    let centroid = region.iter().map(|&i| pos(i) * mag[i]).sum::<Vector2<f64>>() / total;
    let cov = region
        .iter()
        .map(|&i| {
            let d = pos(i) - centroid;
            d * d.transpose() * mag[i]
        })
        .sum::<Matrix2<f64>>()
        / total;
    let eig = cov.symmetric_eigen();
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let dir: Vector2<f64> = eig.eigenvectors.column(major).into_owned();
    if eig.eigenvalues[minor].max(0.0).sqrt() > 2.5 {
        return None;
    }
    // The segment must run across the region's gradient.
    let normal = Vector2::new(grad_angle.cos(), grad_angle.sin());
    if dir.dot(&normal).abs() > tol.sin() {
        return None;
    }
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in region {
        let t = (pos(i) - centroid).dot(&dir);
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    let clamp = |v: Vector2<f64>| {
        Point::new(v.x.clamp(0.0, (w - 1) as f64), v.y.clamp(0.0, (h - 1) as f64))
    };
    let mut a = clamp(centroid + dir * tmin);
    let mut b = clamp(centroid + dir * tmax);
    if (b.x, b.y) < (a.x, a.y) {
        std::mem::swap(&mut a, &mut b);
    }
    let seg = LineSegment::new(a, b);
    (seg.length() >= cfg.min_line_length).then_some(seg)
}

/// Pairs source segments with target segments after transferring the source
/// segments through `prior`. Matches must agree in orientation, lie close to
/// the target line, overlap along it, and be mutually best.
///
/// Returns the matches and the source segments left unmatched; every source
/// segment lands in exactly one of the two.
pub fn match_lines(
    src: &[LineSegment],
    dst: &[LineSegment],
    prior: &Homography,
    cfg: &DetectorConfig,
) -> (Vec<LineMatch>, Vec<LineSegment>) {
    let cos_tol = cfg.line_match_angle.to_radians().cos();
    let dst_lines: Vec<Option<HomogeneousLine>> = dst.iter().map(HomogeneousLine::through).collect();

    let cost = |s: &LineSegment, j: usize| -> Option<f64> {
        let line = dst_lines[j]?;
        let t = &dst[j];
        let ps = prior.map(&s.start)?;
        let pe = prior.map(&s.end)?;
        let dp = pe - ps;
        let dt = t.end - t.start;
        if dp.norm() < 1e-9 {
            return None;
        }
        let cos = (dp.dot(&dt) / (dp.norm() * dt.norm())).abs();
        if cos < cos_tol {
            return None;
        }
        let dist = line.distance(&ps).abs().max(line.distance(&pe).abs());
        if dist > cfg.line_match_distance {
            return None;
        }
        let axis = dt / dt.norm();
        let proj = |p: &Point| (p - t.start).dot(&axis);
        let (a0, a1) = {
            let (u, v) = (proj(&ps), proj(&pe));
            (u.min(v), u.max(v))
        };
        let (b0, b1) = (0.0, dt.norm());
        let overlap = a1.min(b1) - a0.max(b0);
        if overlap <= 0.3 * (a1 - a0).min(b1 - b0) {
            return None;
        }
        Some(dist + (1.0 - cos))
    };

    let costs: Vec<Vec<Option<f64>>> =
        src.iter().map(|s| (0..dst.len()).map(|j| cost(s, j)).collect()).collect();
    let best_of = |vals: &mut dyn Iterator<Item = (usize, Option<f64>)>| {
        vals.filter_map(|(k, c)| c.map(|c| (k, c)))
            .fold(None, |acc: Option<(usize, f64)>, (k, c)| match acc {
                Some((_, bc)) if bc <= c => acc,
                _ => Some((k, c)),
            })
    };

    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for (i, s) in src.iter().enumerate() {
        let best_dst = best_of(&mut costs[i].iter().copied().enumerate());
        let mutual = best_dst.and_then(|(j, _)| {
            let best_src = best_of(&mut costs.iter().map(|row| row[j]).enumerate());
            (best_src.map(|b| b.0) == Some(i)).then_some(j)
        });
        match mutual.and_then(|j| LineMatch::new(*s, dst[j])) {
            Some(m) => matched.push(m),
            None => unmatched.push(*s),
        }
    }
    (matched, unmatched)
}

/// Detects segments in both images and matches them through `prior`
/// (identity when absent, i.e. plain geometric proximity).
pub fn detect_and_match_lines(
    src: &RasterImage,
    dst: &RasterImage,
    prior: Option<&Homography>,
    cfg: &DetectorConfig,
) -> (Vec<LineMatch>, Vec<LineSegment>) {
    let (a, b) = rayon::join(
        || detect_lines(&src.luminance_plane(), cfg),
        || detect_lines(&dst.luminance_plane(), cfg),
    );
    let identity = Homography::identity();
    match_lines(&a, &b, prior.unwrap_or(&identity), cfg)
}
