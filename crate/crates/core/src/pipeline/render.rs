use rayon::prelude::*;

use crate::features::{Point, PointMatch};
use crate::geometry::{dlt_estimate_refs, render, snap, Canvas, Homography, Mesh};
use crate::imaging::{Mask, RasterImage};

#[derive(Clone, Debug)]
pub struct MeshWarp {
    pub image: RasterImage,
    pub mask: Mask,
    /// Quads left empty because their deformed shape folded or collapsed.
    pub skipped_cells: usize,
}

/// Backward map of one deformed quad onto its rest quad.
enum QuadMap {
    Shift(f64, f64),
    Projective(Homography),
}

impl QuadMap {
    fn apply(&self, p: &Point) -> Option<Point> {
        match self {
            QuadMap::Shift(dx, dy) => Some(Point::new(p.x - dx, p.y - dy)),
            QuadMap::Projective(h) => h.map(p),
        }
    }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Corners in boundary order: top-left, top-right, bottom-right, bottom-left.
fn ring(points: &[Point], ids: [usize; 4]) -> [Point; 4] {
    [points[ids[0]], points[ids[1]], points[ids[3]], points[ids[2]]]
}

fn signed_area(q: &[Point; 4]) -> f64 {
    0.5 * (0..4).map(|i| q[i].x * q[(i + 1) % 4].y - q[(i + 1) % 4].x * q[i].y).sum::<f64>()
}

/// Convex, same orientation as at rest, and not collapsed.
fn well_formed(deformed: &[Point; 4], rest: &[Point; 4]) -> bool {
    let rest_area = signed_area(rest);
    let sign = rest_area.signum();
    let convex = (0..4).all(|i| cross(&deformed[i], &deformed[(i + 1) % 4], &deformed[(i + 2) % 4]) * sign > 0.0);
    convex && signed_area(deformed) * sign > 1e-3 * rest_area.abs()
}

fn inside(q: &[Point; 4], p: &Point, sign: f64) -> bool {
    (0..4).all(|i| cross(&q[i], &q[(i + 1) % 4], p) * sign >= -1e-9)
}

fn quad_map(deformed: &[Point; 4], rest: &[Point; 4]) -> Option<QuadMap> {
    let (dx, dy) = (deformed[0].x - rest[0].x, deformed[0].y - rest[0].y);
    let shifted = (0..4).all(|i| {
        (deformed[i].x - rest[i].x - dx).abs() < 1e-9 && (deformed[i].y - rest[i].y - dy).abs() < 1e-9
    });
    if shifted {
        return Some(QuadMap::Shift(dx, dy));
    }
    let matches: Vec<PointMatch> =
        (0..4).map(|i| PointMatch { p: deformed[i], p_prime: rest[i], score: 1.0 }).collect();
    let refs: Vec<&PointMatch> = matches.iter().collect();
    dlt_estimate_refs(&refs, &[]).ok().map(QuadMap::Projective)
}

/// Renders `src` (on the canvas, aligned with the rest mesh) under the
/// deformation from rest to current vertices, one homography per quad.
pub fn warp_mesh(src: &RasterImage, mask: &Mask, mesh: &Mesh) -> MeshWarp {
    let (w, h) = (src.width(), src.height());
    warp_mesh_onto(src, mask, mesh, (w, h), |p| Some(*p))
}

/// Like [`warp_mesh`], but samples the original source through the global
/// homography so the result is resampled only once.
pub fn warp_mesh_global(src: &RasterImage, global: &Homography, canvas: &Canvas, mesh: &Mesh) -> MeshWarp {
    let inv = global.inverse();
    let mask = Mask::filled(src.width(), src.height(), true);
    warp_mesh_onto(src, &mask, mesh, (canvas.width, canvas.height), |p| inv.map(&canvas.from_canvas(p)))
}

/// Output pixel → rest position (per-quad homography) → `source_of` → `src`.
fn warp_mesh_onto(
    src: &RasterImage,
    mask: &Mask,
    mesh: &Mesh,
    (w, h): (usize, usize),
    source_of: impl Fn(&Point) -> Option<Point> + Sync,
) -> MeshWarp {
    let quads: Vec<(usize, usize)> = mesh.quads().collect();
    // Per quad: the pixels it covers and the rest position of each.
    let covered: Vec<Option<Vec<(usize, Point)>>> = quads
        .par_iter()
        .map(|&(r, c)| {
            let ids = mesh.quad_vertices(r, c);
            let deformed = ring(&mesh.vertices, ids);
            let rest = ring(mesh.rest(), ids);
            if !well_formed(&deformed, &rest) {
                return None;
            }
            let map = quad_map(&deformed, &rest)?;
            let sign = signed_area(&rest).signum();
            let lo = |f: fn(&Point) -> f64| deformed.iter().map(f).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let hi = |f: fn(&Point) -> f64, n: usize| {
                deformed.iter().map(f).fold(f64::NEG_INFINITY, f64::max).floor().min((n - 1) as f64)
            };
            let (x0, x1) = (lo(|p| p.x), hi(|p| p.x, w));
            let (y0, y1) = (lo(|p| p.y), hi(|p| p.y, h));
            let mut out = Vec::new();
            let mut y = y0;
            while y <= y1 {
                let mut x = x0;
                while x <= x1 {
                    let p = Point::new(x, y);
                    if inside(&deformed, &p, sign) {
                        if let Some(s) = map.apply(&p) {
                            out.push((y as usize * w + x as usize, s));
                        }
                    }
                    x += 1.0;
                }
                y += 1.0;
            }
            Some(out)
        })
        .collect();

    let mut rest_of: Vec<Option<Point>> = vec![None; w * h];
    let mut skipped_cells = 0;
    for cell in &covered {
        match cell {
            None => skipped_cells += 1,
            Some(pixels) => {
                for &(i, s) in pixels {
                    rest_of[i].get_or_insert(s);
                }
            }
        }
    }
    let (image, mask) = render(w, h, src.channels(), |u, v| {
        let s = source_of(&rest_of[v * w + u]?)?;
        let (x, y) = (snap(s.x), snap(s.y));
        if !mask.covers_bilinear(x, y) {
            return None;
        }
        src.sample_bilinear(x, y)
    });
    MeshWarp { image, mask, skipped_cells }
}

/// Exact Euclidean distance from each pixel to the nearest invalid pixel
/// (pixels beyond the raster count as invalid).
pub fn distance_to_invalid(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let inf = ((w + h + 2) * (w + h + 2)) as f64;
    // Pad by one invalid pixel on each side.
    let (pw, ph) = (w + 2, h + 2);
    let mut f = vec![0.0; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                f[(y + 1) * pw + x + 1] = inf;
            }
        }
    }
    let mut buf = vec![0.0; pw.max(ph)];
    for x in 0..pw {
        let col: Vec<f64> = (0..ph).map(|y| f[y * pw + x]).collect();
        squared_distance_1d(&col, &mut buf[..ph]);
        for y in 0..ph {
            f[y * pw + x] = buf[y];
        }
    }
    for y in 0..ph {
        let row: Vec<f64> = f[y * pw..(y + 1) * pw].to_vec();
        squared_distance_1d(&row, &mut buf[..pw]);
        f[y * pw..(y + 1) * pw].copy_from_slice(&buf[..pw]);
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = f[(y + 1) * pw + x + 1].sqrt();
        }
    }
    out
}

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
fn squared_distance_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from the start.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Feathered blend: each image weighted by its distance to its own mask
/// boundary; exclusive regions are copied.
pub fn blend_linear(a: &RasterImage, a_mask: &Mask, b: &RasterImage, b_mask: &Mask) -> (RasterImage, Mask) {
    assert_eq!((a.width(), a.height(), a.channels()), (b.width(), b.height(), b.channels()));
    let (da, db) = rayon::join(|| distance_to_invalid(a_mask), || distance_to_invalid(b_mask));
    let (w, c) = (a.width(), a.channels());
    let mut data = vec![0.0; a.samples().len()];
    let mut valid = vec![false; w * a.height()];
    for (i, px) in data.chunks_exact_mut(c).enumerate() {
        let (x, y) = (i % w, i / w);
        let (wa, wb) = match (a_mask.get(x, y), b_mask.get(x, y)) {
            (true, true) => (da[i] / (da[i] + db[i]), db[i] / (da[i] + db[i])),
            (true, false) => (1.0, 0.0),
            (false, true) => (0.0, 1.0),
            (false, false) => continue,
        };
        valid[i] = true;
        let (pa, pb) = (a.pixel(x, y), b.pixel(x, y));
        for k in 0..c {
            px[k] = wa * pa[k] + wb * pb[k];
        }
    }
    (RasterImage::from_raw(w, a.height(), c, data), Mask::new(w, a.height(), valid))
}
