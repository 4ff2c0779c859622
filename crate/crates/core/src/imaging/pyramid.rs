use super::{Mask, Plane, RasterImage};
use crate::error::{Error, Result};

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Gaussian pyramid; level 0 is full resolution, each further level halves
/// the size (rounding up).
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub levels: Vec<RasterImage>,
}

/// Pyramid of an image with a validity mask. Invalid pixels never leak into
/// valid ones: smoothing is a normalized convolution over valid neighbours.
#[derive(Clone, Debug)]
pub struct MaskedPyramid {
    pub levels: Vec<(RasterImage, Mask)>,
}

/// Separable `[1 4 6 4 1]/16` blur restricted to `mask`, renormalized by the
/// kernel mass that falls on valid pixels. Pixels outside the raster count as
/// invalid, which also keeps constants constant at the border.
pub fn blur_binomial(plane: &Plane, mask: &Mask) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let valid = |x: usize, y: usize| if mask.get(x, y) { 1.0 } else { 0.0 };
    let mut num_h = vec![0.0; w * h];
    let mut den_h = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut n, mut d) = (0.0, 0.0);
            for (k, wk) in BINOMIAL.iter().enumerate() {
                let xx = x as isize + k as isize - 2;
                if xx < 0 || xx as usize >= w {
                    continue;
                }
                let m = valid(xx as usize, y);
                n += wk * m * plane.get(xx as usize, y);
                d += wk * m;
            }
            num_h[y * w + x] = n;
            den_h[y * w + x] = d;
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut n, mut d) = (0.0, 0.0);
            for (k, wk) in BINOMIAL.iter().enumerate() {
                let yy = y as isize + k as isize - 2;
                if yy < 0 || yy as usize >= h {
                    continue;
                }
                n += wk * num_h[yy as usize * w + x];
                d += wk * den_h[yy as usize * w + x];
            }
            out.set(x, y, if d > 0.0 { n / d } else { 0.0 });
        }
    }
    out
}

fn decimate(plane: &Plane) -> Plane {
    let (w, h) = (plane.width().div_ceil(2), plane.height().div_ceil(2));
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, plane.get(2 * x, 2 * y));
        }
    }
    out
}

fn decimate_mask(mask: &Mask) -> Mask {
    let (w, h) = (mask.width().div_ceil(2), mask.height().div_ceil(2));
    let mut out = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, mask.get(2 * x, 2 * y));
        }
    }
    out
}

fn downsample(img: &RasterImage, mask: &Mask) -> (RasterImage, Mask) {
    let planes: Vec<Plane> = (0..img.channels())
        .map(|c| decimate(&blur_binomial(&img.channel_plane(c), mask)))
        .collect();
    (RasterImage::from_planes(&planes), decimate_mask(mask))
}

pub fn build_pyramid(img: &RasterImage, levels: usize) -> Result<Pyramid> {
    let mask = Mask::filled(img.width(), img.height(), true);
    let masked = MaskedPyramid::build(img, &mask, levels)?;
    Ok(Pyramid { levels: masked.levels.into_iter().map(|(i, _)| i).collect() })
}

impl MaskedPyramid {
    pub fn build(img: &RasterImage, mask: &Mask, levels: usize) -> Result<Self> {
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::EmptyImage);
        }
        if (mask.width(), mask.height()) != (img.width(), img.height()) {
            return Err(Error::DimensionMismatch(
                img.width(),
                img.height(),
                mask.width(),
                mask.height(),
            ));
        }
        let mut out = vec![(img.clone(), mask.clone())];
        for _ in 1..levels.max(1) {
            let (prev, prev_mask) = out.last().expect("pyramid has a base level");
            let next = downsample(prev, prev_mask);
            out.push(next);
        }
        Ok(Self { levels: out })
    }
}

/// Largest level count `≤ requested` whose coarsest level still has both
/// dimensions `≥ min_dim`. Never returns less than 1.
pub fn clamp_levels(width: usize, height: usize, requested: usize, min_dim: usize) -> usize {
    let mut levels = requested.max(1);
    while levels > 1 {
        let f = 1usize << (levels - 1);
        if width.div_ceil(f) >= min_dim && height.div_ceil(f) >= min_dim {
            break;
        }
        levels -= 1;
    }
    levels
}
