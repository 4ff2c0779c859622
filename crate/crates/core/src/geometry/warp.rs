use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Homography;
use crate::error::{Error, Result};
use crate::features::Point;
use crate::imaging::{Mask, RasterImage, Sample};

/// Canvases larger than this are treated as a degenerate alignment.
const MAX_CANVAS_PIXELS: usize = 64 << 20;

/// Pixel grid shared by the warped source and the target. Canvas pixel
/// `(u, v)` sits at `(u + offset.0, v + offset.1)` in target coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub offset: (i64, i64),
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug)]
pub struct WarpedImage {
    pub image: RasterImage,
    pub mask: Mask,
    pub offset: (i64, i64),
}

/// Bounding box `(x0, y0, x1, y1)` of the image corners mapped through `h`.
pub fn footprint(h: &Homography, width: usize, height: usize) -> Result<(f64, f64, f64, f64)> {
    let (w, hh) = ((width.max(1) - 1) as f64, (height.max(1) - 1) as f64);
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let m = h.matrix();
    let corners = [Point::new(0.0, 0.0), Point::new(w, 0.0), Point::new(w, hh), Point::new(0.0, hh)];
    let depth = |c: &Point| m[(2, 0)] * c.x + m[(2, 1)] * c.y + m[(2, 2)];
    if corners.iter().any(|c| depth(c).signum() != depth(&corners[0]).signum()) {
        return Err(Error::DegenerateHomography("the line at infinity crosses the image".into()));
    }
    for c in corners {
        let q = h.map(&c).ok_or_else(|| {
            Error::DegenerateHomography(format!("corner ({}, {}) maps to infinity", c.x, c.y))
        })?;
        b = (b.0.min(q.x), b.1.min(q.y), b.2.max(q.x), b.3.max(q.y));
    }
    Ok(b)
}

impl Canvas {
    pub fn from_bounds(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (fx, fy) = (snap(x0).floor(), snap(y0).floor());
        let (cx, cy) = (snap(x1).ceil(), snap(y1).ceil());
        let width = (cx - fx) as usize + 1;
        let height = (cy - fy) as usize + 1;
        if !(cx - fx).is_finite() || width.saturating_mul(height) > MAX_CANVAS_PIXELS {
            return Err(Error::DegenerateHomography(format!(
                "canvas of {}x{} pixels is too large",
                cx - fx + 1.0,
                cy - fy + 1.0
            )));
        }
        Ok(Self { offset: (fx as i64, fy as i64), width, height })
    }

    /// Union of the warped source footprint and the target image.
    pub fn covering(src: (usize, usize), h: &Homography, dst: (usize, usize)) -> Result<Self> {
        let (x0, y0, x1, y1) = footprint(h, src.0, src.1)?;
        let (tw, th) = ((dst.0 - 1) as f64, (dst.1 - 1) as f64);
        Self::from_bounds(x0.min(0.0), y0.min(0.0), x1.max(tw), y1.max(th))
    }

    pub fn to_canvas(&self, p: &Point) -> Point {
        Point::new(p.x - self.offset.0 as f64, p.y - self.offset.1 as f64)
    }

    pub fn from_canvas(&self, p: &Point) -> Point {
        Point::new(p.x + self.offset.0 as f64, p.y + self.offset.1 as f64)
    }

    /// Whether a canvas-coordinate point lies within the pixel grid.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }
}

/// Rounds values within 1e-9 of an integer, so exact lattice mappings stay on
/// the lattice despite rounding in the homography.
#[inline]
pub(crate) fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 { r } else { v }
}

/// Renders a `width × height` image whose pixel `(u, v)` is `f(u, v)`; `None`
/// leaves a black, masked-out pixel.
pub(crate) fn render(
    width: usize,
    height: usize,
    channels: usize,
    f: impl Fn(usize, usize) -> Option<Sample> + Sync,
) -> (RasterImage, Mask) {
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut data = vec![0.0; width * channels];
            let mut valid = vec![false; width];
            for u in 0..width {
                if let Some(s) = f(u, v) {
                    data[u * channels..(u + 1) * channels].copy_from_slice(&s);
                    valid[u] = true;
                }
            }
            (data, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(width * height * channels);
    let mut mask = Vec::with_capacity(width * height);
    for (d, m) in rows {
        data.extend(d);
        mask.extend(m);
    }
    (RasterImage::from_raw(width, height, channels, data), Mask::new(width, height, mask))
}

/// Samples `img` at a snapped position.
#[inline]
pub(crate) fn sample_snapped(img: &RasterImage, p: &Point) -> Option<Sample> {
    img.sample_bilinear(snap(p.x), snap(p.y))
}

/// Backward-maps `img` through `h` onto `canvas`.
pub fn warp_into(img: &RasterImage, h: &Homography, canvas: &Canvas) -> (RasterImage, Mask) {
    let inv = h.inverse();
    render(canvas.width, canvas.height, img.channels(), |u, v| {
        let q = canvas.from_canvas(&Point::new(u as f64, v as f64));
        inv.map(&q).and_then(|p| sample_snapped(img, &p))
    })
}

/// Places the target image on `canvas` (an exact integer shift).
pub fn place(img: &RasterImage, canvas: &Canvas) -> (RasterImage, Mask) {
    let (ox, oy) = canvas.offset;
    render(canvas.width, canvas.height, img.channels(), |u, v| {
        let x = u as i64 + ox;
        let y = v as i64 + oy;
        if x < 0 || y < 0 || x as usize >= img.width() || y as usize >= img.height() {
            return None;
        }
        img.sample_bilinear(x as f64, y as f64)
    })
}

/// Warps `img` by `h` onto the bounding box of its own footprint.
pub fn warp_global(img: &RasterImage, h: &Homography) -> Result<WarpedImage> {
    let (x0, y0, x1, y1) = footprint(h, img.width(), img.height())?;
    let canvas = Canvas::from_bounds(x0, y0, x1, y1)?;
    let (image, mask) = warp_into(img, h, &canvas);
    Ok(WarpedImage { image, mask, offset: canvas.offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::noise_image;

    #[test]
    fn identity_is_a_copy() {
        let img = noise_image(40, 30, 5, 1);
        let w = warp_global(&img, &Homography::identity()).unwrap();
        assert_eq!(w.offset, (0, 0));
        assert_eq!(w.image, img);
        assert_eq!(w.mask.count(), 40 * 30);
    }

    #[test]
    fn integer_translation_is_exact() {
        let img = noise_image(30, 20, 4, 2);
        let w = warp_global(&img, &Homography::translation(7.0, -3.0)).unwrap();
        assert_eq!(w.offset, (7, -3));
        assert_eq!((w.image.width(), w.image.height()), (30, 20));
        assert_eq!(w.image, img);
        assert!(w.mask.data().iter().all(|&v| v));
    }

    #[test]
    fn backward_map_matches_forward_map() {
        let h = Homography::from_row_major([0.95, 0.1, 12.0, -0.07, 1.05, 4.0, 2e-4, -1e-4, 1.0]).unwrap();
        let img = noise_image(60, 50, 6, 3);
        let w = warp_global(&img, &h).unwrap();
        let canvas = Canvas { offset: w.offset, width: w.image.width(), height: w.image.height() };
        let inv = h.inverse();
        for y in (0..50).step_by(3) {
            for x in (0..60).step_by(3) {
                let p = Point::new(x as f64, y as f64);
                let q = canvas.to_canvas(&h.map(&p).unwrap());
                let back = inv.map(&canvas.from_canvas(&q)).unwrap();
                assert!((back - p).norm() < 1e-6);
            }
        }
        // Every valid canvas pixel holds the source sampled at its preimage.
        for v in 0..canvas.height {
            for u in 0..canvas.width {
                if !w.mask.get(u, v) {
                    continue;
                }
                let p = inv.map(&canvas.from_canvas(&Point::new(u as f64, v as f64))).unwrap();
                let expect = img.sample_bilinear(snap(p.x), snap(p.y)).unwrap();
                assert!((w.image.get(u, v, 0) - expect[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_restores_valid_region() {
        let h = Homography::from_row_major([1.02, 0.03, 5.0, -0.02, 0.99, 2.0, 0.0, 0.0, 1.0]).unwrap();
        let img = noise_image(50, 40, 16, 4);
        let canvas = Canvas::covering((50, 40), &h, (50, 40)).unwrap();
        let (fwd, fmask) = warp_into(&img, &h, &canvas);
        // Map back: canvas image (in target frame shifted by offset) through H⁻¹.
        let shift = Homography::translation(canvas.offset.0 as f64, canvas.offset.1 as f64);
        let back_h = h.inverse().compose(&shift).unwrap();
        let back_canvas = Canvas { offset: (0, 0), width: 50, height: 40 };
        let (back, bmask) = warp_into(&fwd, &back_h, &back_canvas);
        let support = fmask.erode(1);
        let mut checked = 0;
        for y in 2..38 {
            for x in 2..48 {
                if !bmask.get(x, y) {
                    continue;
                }
                let q = back_h.inverse().map(&Point::new(x as f64, y as f64)).unwrap();
                let (qu, qv) = (q.x.round() as usize, q.y.round() as usize);
                if !support.get(qu.min(canvas.width - 1), qv.min(canvas.height - 1)) {
                    continue;
                }
                // Smooth texture: double resampling stays close to the original.
                assert!((back.get(x, y, 0) - img.get(x, y, 0)).abs() < 0.05);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn corner_at_infinity_is_rejected() {
        let h = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.1, 0.0, 1.0]).unwrap();
        let img = noise_image(20, 20, 4, 5);
        assert!(matches!(warp_global(&img, &h), Err(Error::DegenerateHomography(_))));
    }
}
