//! Image containers, bilinear sampling, gradients and Gaussian pyramids.
//!
//! Intensities are stored as `f64` in `[0, 1]`. Anything that is not an
//! intensity (gradients, Harris responses, distance maps) lives in a
//! [`Plane`], which carries no range constraint.

mod gradient;
mod io;
mod pyramid;

pub use gradient::{central_gradient, gradient_magnitude, GradientImage};
pub use io::{load_image, load_mask, save_image, save_mask};
pub use pyramid::{blur_binomial, build_pyramid, clamp_levels, MaskedPyramid, Pyramid};

use crate::error::{Error, Result};

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Locates the bilinear support of `(x, y)` on a `width × height` lattice.
///
/// Returns the top-left lattice point and the fractional offsets. A zero
/// fractional part means the second row/column carries no weight and is not
/// required to exist, so lattice points on the last row or column are valid.
#[inline]
pub(crate) fn bilinear_support(
    x: f64,
    y: f64,
    width: usize,
    height: usize,
) -> Option<(usize, usize, f64, f64)> {
    if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    if x0 >= width || y0 >= height {
        return None;
    }
    if (fx > 0.0 && x0 + 1 >= width) || (fy > 0.0 && y0 + 1 >= height) {
        return None;
    }
    Some((x0, y0, fx, fy))
}

/// Per-channel result of [`RasterImage::sample_bilinear`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    values: [f64; 3],
    channels: usize,
}

impl std::ops::Deref for Sample {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values[..self.channels]
    }
}

/// Row-major intensity image with 1 (luminance) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage(format!(
                "sample {bad} = {} is outside [0, 1]",
                data[bad]
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds from data known to be in range (results of convex combinations).
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { width, height, channels, data }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a function of pixel coordinates.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear interpolation, `None` when the weighted support leaves the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<Sample> {
        let (x0, y0, fx, fy) = bilinear_support(x, y, self.width, self.height)?;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let mut values = [0.0; 3];
        for (c, v) in values.iter_mut().enumerate().take(self.channels) {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *v = top * (1.0 - fy) + bottom * fy;
        }
        Some(Sample { values, channels: self.channels })
    }

    /// Rec. 601 luminance. Single-channel images are returned as a copy.
    pub fn to_luminance(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        RasterImage::from_raw(self.width, self.height, 1, data)
    }

    /// Luminance as an unconstrained plane.
    pub fn luminance_plane(&self) -> Plane {
        let lum = self.to_luminance();
        Plane { width: lum.width, height: lum.height, data: lum.data }
    }

    pub(crate) fn from_plane(plane: &Plane) -> RasterImage {
        RasterImage::from_raw(plane.width, plane.height, 1, plane.data.clone())
    }

    pub(crate) fn channel_plane(&self, c: usize) -> Plane {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Plane { width: self.width, height: self.height, data }
    }

    pub(crate) fn from_planes(planes: &[Plane]) -> RasterImage {
        let (w, h) = (planes[0].width, planes[0].height);
        let mut data = Vec::with_capacity(w * h * planes.len());
        for i in 0..w * h {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        RasterImage::from_raw(w, h, planes.len(), data)
    }
}

/// Single-channel real-valued grid without a range constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size");
        Self { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let (x0, y0, fx, fy) = bilinear_support(x, y, self.width, self.height)?;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Binary validity raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask buffer size");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Mask::new(self.width, self.height, data)
    }

    /// Erosion by a `(2r+1)²` square; pixels outside the raster count as invalid.
    pub fn erode(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let r = radius as isize;
        // Separable: rows then columns.
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                rows[y * w + x] = (-r..=r).all(|d| {
                    let xx = x as isize + d;
                    xx >= 0 && (xx as usize) < w && self.data[y * w + xx as usize]
                });
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = (-r..=r).all(|d| {
                    let yy = y as isize + d;
                    yy >= 0 && (yy as usize) < h && rows[yy as usize * w + x]
                });
            }
        }
        Mask::new(w, h, out)
    }

    /// True when every pixel carrying bilinear weight at `(x, y)` is set.
    pub fn covers_bilinear(&self, x: f64, y: f64) -> bool {
        let Some((x0, y0, fx, fy)) = bilinear_support(x, y, self.width, self.height) else {
            return false;
        };
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        self.get(x0, y0) && self.get(x1, y0) && self.get(x0, y1) && self.get(x1, y1)
    }

    /// Bounding box `(x_min, y_min, x_max, y_max)` of set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        bb
    }
}
