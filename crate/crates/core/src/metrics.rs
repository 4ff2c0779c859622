//! Alignment quality as the root mean of `1 − NCC` over local windows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Mask, Plane, RasterImage};

/// Windows whose summed squared deviation falls below this count as constant.
const FLAT_WINDOW: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Odd window side, at least 3.
    pub window: usize,
    /// Factor applied to the raw value for reporting.
    pub intensity_scale: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { window: 3, intensity_scale: 255.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd and at least 3, got {}", self.window)));
        }
        if !(self.intensity_scale.is_finite() && self.intensity_scale > 0.0) {
            return Err(Error::Config(format!("metric scale must be positive, got {}", self.intensity_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    /// Scaled value.
    pub rmse_ncc: f64,
    pub overlap_pixels: usize,
    pub window: usize,
    /// Unscaled value, `sqrt(mean(1 − NCC))`.
    #[serde(skip)]
    pub raw: f64,
}

/// NCC of two equally long patches, with the flat-window conventions:
/// both flat gives 1, exactly one flat gives 0.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    match (saa <= FLAT_WINDOW, sbb <= FLAT_WINDOW) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Summed-area table of a mask, `(w + 1) × (h + 1)`.
fn integral(mask: &Mask) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut s = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += mask.get(x, y) as u32;
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

/// Luminance RMSE of `1 − NCC` over every pixel whose full window lies in
/// both masks.
pub fn rmse_ncc(
    a: &RasterImage,
    a_mask: &Mask,
    b: &RasterImage,
    b_mask: &Mask,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let dims = |i: &RasterImage| (i.width(), i.height());
    let mdims = |m: &Mask| (m.width(), m.height());
    for other in [dims(b), mdims(a_mask), mdims(b_mask)] {
        if other != dims(a) {
            return Err(Error::DimensionMismatch(a.width(), a.height(), other.0, other.1));
        }
    }
    rmse_ncc_planes(&a.luminance_plane(), &b.luminance_plane(), &a_mask.and(b_mask), cfg)
}

fn rmse_ncc_planes(a: &Plane, b: &Plane, both: &Mask, cfg: &MetricConfig) -> Result<MetricReport> {
    let (w, h) = (a.width(), a.height());
    let r = cfg.window / 2;
    let full = (cfg.window * cfg.window) as u32;
    let table = integral(both);
    let count = |x0: usize, y0: usize, x1: usize, y1: usize| {
        table[y1 * (w + 1) + x1] + table[y0 * (w + 1) + x0] - table[y0 * (w + 1) + x1] - table[y1 * (w + 1) + x0]
    };
    let rows: Vec<(usize, f64)> = (r..h.saturating_sub(r))
        .into_par_iter()
        .map(|y| {
            let mut pa = Vec::with_capacity(cfg.window * cfg.window);
            let mut pb = Vec::with_capacity(cfg.window * cfg.window);
            let (mut n, mut sum) = (0, 0.0);
            for x in r..w.saturating_sub(r) {
                if count(x - r, y - r, x + r + 1, y + r + 1) != full {
                    continue;
                }
                pa.clear();
                pb.clear();
                for yy in y - r..=y + r {
                    for xx in x - r..=x + r {
                        pa.push(a.get(xx, yy));
                        pb.push(b.get(xx, yy));
                    }
                }
                n += 1;
                sum += 1.0 - ncc(&pa, &pb);
            }
            (n, sum)
        })
        .collect();
    let n: usize = rows.iter().map(|r| r.0).sum();
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    let total: f64 = rows.iter().map(|r| r.1).sum();
    let raw = (total / n as f64).max(0.0).sqrt();
    Ok(MetricReport { rmse_ncc: raw * cfg.intensity_scale, overlap_pixels: n, window: cfg.window, raw })
}
