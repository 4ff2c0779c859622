//! Procedural test imagery: smooth random textures, checkerboards, polygons,
//! and image pairs related by a homography plus smooth parallax.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::Point;
use crate::geometry::Homography;
use crate::imaging::RasterImage;

/// Colour image of bilinearly interpolated random values on a lattice with
/// the given cell size.
pub fn noise_image(width: usize, height: usize, cell: usize, seed: u64) -> RasterImage {
    let cell = cell.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gw, gh) = (width / cell + 2, height / cell + 2);
    let grid: Vec<[f64; 3]> =
        (0..gw * gh).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (gx, gy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
            for c in 0..3 {
                let v = (1.0 - fx) * (1.0 - fy) * grid[y0 * gw + x0][c]
                    + fx * (1.0 - fy) * grid[y0 * gw + x0 + 1][c]
                    + (1.0 - fx) * fy * grid[(y0 + 1) * gw + x0][c]
                    + fx * fy * grid[(y0 + 1) * gw + x0 + 1][c];
                data.push(v);
            }
        }
    }
    RasterImage::new(width, height, 3, data).expect("values in [0, 1]")
}

/// Grayscale checkerboard with additive uniform noise of the given amplitude.
pub fn checkerboard(width: usize, height: usize, square: usize, noise: f64, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let square = square.max(1);
    let data = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let base = if (x / square + y / square).is_multiple_of(2) { 0.2 } else { 0.8 };
            (base + noise * (rng.random::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0)
        })
        .collect();
    RasterImage::new(width, height, 1, data).expect("values in [0, 1]")
}

/// Renders `f` with 4×4 supersampling per pixel.
pub fn render_antialiased(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> RasterImage {
    let data = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let mut acc = 0.0;
            for sy in 0..4 {
                for sx in 0..4 {
                    acc += f(x + (sx as f64 + 0.5) / 4.0 - 0.5, y + (sy as f64 + 0.5) / 4.0 - 0.5);
                }
            }
            (acc / 16.0).clamp(0.0, 1.0)
        })
        .collect();
    RasterImage::new(width, height, 1, data).expect("values in [0, 1]")
}

/// Indicator of a convex polygon with counter-clockwise or clockwise vertices.
pub fn inside_convex(poly: &[Point], x: f64, y: f64) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug)]
struct Blob {
    centre: (f64, f64),
    inv_two_sigma_sq: f64,
    reach: f64,
    amplitude: [f64; 3],
}

#[derive(Clone, Debug)]
struct Patch {
    centre: (f64, f64),
    half: (f64, f64),
    cos: f64,
    sin: f64,
    softness: f64,
    amplitude: [f64; 3],
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Smooth procedural colour texture defined on the whole plane: Gaussian
/// blobs of mixed sizes plus soft-edged rotated rectangles, squashed into
/// `[0, 1]`. It carries corners and straight edges for the detectors and
/// smooth shading for the photometric term.
#[derive(Clone, Debug)]
pub struct Texture {
    blobs: Vec<Blob>,
    patches: Vec<Patch>,
    bucket: f64,
    origin: (f64, f64),
    grid: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl Texture {
    /// Texture with features spread over `[x0, x1] × [y0, y1]`.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let area = (x1 - x0) * (y1 - y0);
        let colour = |rng: &mut ChaCha8Rng, scale: f64| {
            let lum = scale * if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.5..1.0);
            [lum + rng.random_range(-0.2..0.2), lum, lum + rng.random_range(-0.2..0.2)]
        };
        let blobs: Vec<Blob> = (0..(area / 300.0) as usize)
            .map(|_| {
                let sigma: f64 = if rng.random::<f64>() < 0.7 {
                    rng.random_range(2.5..6.0)
                } else {
                    rng.random_range(6.0..18.0)
                };
                Blob {
                    centre: (rng.random_range(x0..x1), rng.random_range(y0..y1)),
                    inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                    reach: 3.5 * sigma,
                    amplitude: colour(&mut rng, 0.9),
                }
            })
            .collect();
        let patches: Vec<Patch> = (0..(area / 6000.0).ceil() as usize)
            .map(|_| {
                let angle: f64 = rng.random_range(0.0..PI);
                Patch {
                    centre: (rng.random_range(x0..x1), rng.random_range(y0..y1)),
                    half: (rng.random_range(10.0..45.0), rng.random_range(10.0..45.0)),
                    cos: angle.cos(),
                    sin: angle.sin(),
                    softness: 0.8,
                    amplitude: colour(&mut rng, 0.8),
                }
            })
            .collect();
        let bucket = 24.0;
        let pad = 60.0;
        let origin = (x0 - pad, y0 - pad);
        let grid = (
            ((x1 - x0 + 2.0 * pad) / bucket).ceil() as usize + 1,
            ((y1 - y0 + 2.0 * pad) / bucket).ceil() as usize + 1,
        );
        let mut buckets = vec![Vec::new(); grid.0 * grid.1];
        for (i, b) in blobs.iter().enumerate() {
            let cell = |v: f64, o: f64, n: usize| (((v - o) / bucket).floor().max(0.0) as usize).min(n - 1);
            let (bx0, bx1) = (cell(b.centre.0 - b.reach, origin.0, grid.0), cell(b.centre.0 + b.reach, origin.0, grid.0));
            let (by0, by1) = (cell(b.centre.1 - b.reach, origin.1, grid.1), cell(b.centre.1 + b.reach, origin.1, grid.1));
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    buckets[by * grid.0 + bx].push(i);
                }
            }
        }
        Self { blobs, patches, bucket, origin, grid, buckets }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let bx = ((x - self.origin.0) / self.bucket).floor();
        let by = ((y - self.origin.1) / self.bucket).floor();
        if bx >= 0.0 && by >= 0.0 && (bx as usize) < self.grid.0 && (by as usize) < self.grid.1 {
            for &i in &self.buckets[by as usize * self.grid.0 + bx as usize] {
                let b = &self.blobs[i];
                let d2 = (x - b.centre.0).powi(2) + (y - b.centre.1).powi(2);
                let g = (-d2 * b.inv_two_sigma_sq).exp();
                for c in 0..3 {
                    acc[c] += b.amplitude[c] * g;
                }
            }
        }
        for p in &self.patches {
            let (dx, dy) = (x - p.centre.0, y - p.centre.1);
            let u = p.cos * dx + p.sin * dy;
            let v = -p.sin * dx + p.cos * dy;
            let inside = logistic((p.half.0 - u.abs()) / p.softness) * logistic((p.half.1 - v.abs()) / p.softness);
            for c in 0..3 {
                acc[c] += p.amplitude[c] * inside;
            }
        }
        acc.map(|v| 0.5 + 0.45 * v.tanh())
    }

    /// Renders pixel `(x, y)` as the texture at `map(x, y)`.
    pub fn render_mapped(&self, width: usize, height: usize, map: impl Fn(Point) -> Point + Sync) -> RasterImage {
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = (0..height)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::with_capacity(width * 3);
                for x in 0..width {
                    let q = map(Point::new(x as f64, y as f64));
                    row.extend(self.eval(q.x, q.y));
                }
                row
            })
            .collect();
        RasterImage::new(width, height, 3, rows.concat()).expect("texture values lie in [0, 1]")
    }

    pub fn render(&self, width: usize, height: usize) -> RasterImage {
        self.render_mapped(width, height, |p| p)
    }
}

/// Smooth displacement field whose magnitude never exceeds `amplitude`.
#[derive(Clone, Debug)]
pub struct ParallaxField {
    amplitude: f64,
    freq: [(f64, f64); 3],
    phase: [f64; 4],
}

impl ParallaxField {
    /// Field varying on the scale of a `width × height` image.
    pub fn random(width: usize, height: usize, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (width as f64, height as f64);
        let mut wave = || (2.0 * PI / (w * rng.random_range(0.7..1.4)), 2.0 * PI / (h * rng.random_range(0.7..1.4)));
        let freq = [wave(), wave(), wave()];
        let phase = [0; 4].map(|_| rng.random_range(0.0..2.0 * PI));
        Self { amplitude, freq, phase }
    }

    pub fn displacement(&self, p: &Point) -> (f64, f64) {
        let [(ax, ay), (bx, by), (cx, cy)] = self.freq;
        let magnitude = 0.5 + 0.5 * (ax * p.x + self.phase[0]).sin() * (ay * p.y + self.phase[1]).sin();
        let direction = PI * ((bx * p.x + self.phase[2]).sin() + (cy * p.y + self.phase[3]).cos() + (cx * p.x - by * p.y).sin());
        let m = self.amplitude * magnitude;
        (m * direction.cos(), m * direction.sin())
    }
}

/// Source/target pair: the target shows the texture directly, the source
/// shows it through `homography` followed by the parallax field, so source
/// pixel `y` corresponds to target position `H(y) + d(H(y))`.
#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub source: RasterImage,
    pub target: RasterImage,
    pub homography: Homography,
    pub field: Option<ParallaxField>,
}

/// Moderate random homography for a `width × height` pair: small rotation
/// and scale change, a horizontal shift of about a fifth of the width, and a
/// little perspective.
pub fn random_homography(width: usize, height: usize, seed: u64) -> Homography {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let angle: f64 = rng.random_range(-3.0f64..3.0).to_radians();
    let scale = rng.random_range(0.97..1.03);
    let tx = -w * rng.random_range(0.15..0.25);
    let ty = h * rng.random_range(-0.05..0.05);
    let px = rng.random_range(-4e-5..4e-5);
    let py = rng.random_range(-4e-5..4e-5);
    let (c, s) = (scale * angle.cos(), scale * angle.sin());
    // Rotate about the image centre.
    let (cx, cy) = (w / 2.0, h / 2.0);
    let m = [
        c, -s, cx - c * cx + s * cy + tx,
        s, c, cy - s * cx - c * cy + ty,
        px, py, 1.0,
    ];
    Homography::from_row_major(m).expect("well-conditioned by construction")
}

pub fn homography_pair(width: usize, height: usize, seed: u64) -> SyntheticPair {
    build_pair(width, height, None, seed)
}

pub fn parallax_pair(width: usize, height: usize, max_displacement: f64, seed: u64) -> SyntheticPair {
    let field = ParallaxField::random(width, height, max_displacement, seed ^ 0x5eed);
    build_pair(width, height, Some(field), seed)
}

fn build_pair(width: usize, height: usize, field: Option<ParallaxField>, seed: u64) -> SyntheticPair {
    let h = random_homography(width, height, seed);
    let (w, hh) = (width as f64, height as f64);
    let texture = Texture::new(-0.4 * w, -0.4 * hh, 1.4 * w, 1.4 * hh, seed.wrapping_mul(31).wrapping_add(7));
    let target = texture.render(width, height);
    let source = texture.render_mapped(width, height, |p| {
        let q = h.map(&p).unwrap_or(p);
        match &field {
            Some(f) => {
                let (dx, dy) = f.displacement(&q);
                Point::new(q.x + dx, q.y + dy)
            }
            None => q,
        }
    });
    SyntheticPair { source, target, homography: h, field }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_and_in_range() {
        let a = Texture::new(0.0, 0.0, 100.0, 80.0, 3).render(100, 80);
        let b = Texture::new(0.0, 0.0, 100.0, 80.0, 3).render(100, 80);
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        let lum = a.luminance_plane();
        let mean = lum.data().iter().sum::<f64>() / lum.data().len() as f64;
        let var = lum.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lum.data().len() as f64;
        assert!(var > 0.005, "texture too flat: {var}");
    }

    #[test]
    fn parallax_is_bounded() {
        let f = ParallaxField::random(200, 150, 8.0, 1);
        let mut max: f64 = 0.0;
        for y in 0..150 {
            for x in 0..200 {
                let (dx, dy) = f.displacement(&Point::new(x as f64, y as f64));
                max = max.max(dx.hypot(dy));
            }
        }
        assert!(max <= 8.0 + 1e-12 && max > 4.0, "{max}");
    }

    #[test]
    fn homography_pair_is_consistent() {
        let pair = homography_pair(120, 90, 5);
        let tex = Texture::new(-48.0, -36.0, 168.0, 126.0, 5u64.wrapping_mul(31).wrapping_add(7));
        let p = Point::new(40.0, 30.0);
        let q = pair.homography.map(&p).unwrap();
        let expect = tex.eval(q.x, q.y);
        for c in 0..3 {
            assert!((pair.source.get(40, 30, c) - expect[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn polygon_membership() {
        let tri = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)];
        assert!(inside_convex(&tri, 2.0, 2.0));
        assert!(!inside_convex(&tri, 8.0, 8.0));
    }
}
