use rayon::prelude::*;

use super::EnergySystem;
use crate::error::{Error, Result};
use crate::features::Point;
use crate::geometry::{BilinearAnchor, Mesh};
use crate::imaging::{central_gradient, Mask, Plane};

/// A source pixel in the overlap, sampled at its rest position.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotometricSample {
    pub position: Point,
    pub anchor: BilinearAnchor,
    pub intensity: f64,
    pub gradient: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhotometricSampleSet {
    pub samples: Vec<PhotometricSample>,
}

/// Target luminance, its gradient magnitude, and the derivatives of both,
/// precomputed for repeated linearization.
#[derive(Clone, Debug)]
pub struct PhotometricTarget {
    pub intensity: Plane,
    pub intensity_dx: Plane,
    pub intensity_dy: Plane,
    pub magnitude: Plane,
    pub magnitude_dx: Plane,
    pub magnitude_dy: Plane,
    /// Pixels whose two-pixel neighbourhood is valid, so every derivative
    /// above is computed from real data.
    pub valid: Mask,
}

fn magnitude(dx: &Plane, dy: &Plane) -> Plane {
    Plane::new(dx.width(), dx.height(), dx.data().iter().zip(dy.data()).map(|(a, b)| a.hypot(*b)).collect())
}

impl PhotometricTarget {
    pub fn new(luminance: &Plane, mask: &Mask) -> Self {
        let (dx, dy) = central_gradient(luminance);
        let mag = magnitude(&dx, &dy);
        let (mdx, mdy) = central_gradient(&mag);
        Self {
            intensity: luminance.clone(),
            intensity_dx: dx,
            intensity_dy: dy,
            magnitude: mag,
            magnitude_dx: mdx,
            magnitude_dy: mdy,
            valid: mask.erode(2),
        }
    }
}

/// Samples the overlap of the (globally warped) source and the target on a
/// grid of the given stride. Source pixels need a valid one-pixel
/// neighbourhood so their gradient magnitude is meaningful.
pub fn sample_photometric(
    source: &Plane,
    source_mask: &Mask,
    target_mask: &Mask,
    mesh: &Mesh,
    stride: usize,
) -> Result<PhotometricSampleSet> {
    let stride = stride.max(1);
    let overlap = source_mask.and(target_mask);
    if overlap.count() == 0 {
        return Err(Error::EmptyOverlap);
    }
    let (dx, dy) = central_gradient(source);
    let support = source_mask.erode(1);
    let mut samples = Vec::new();
    for y in (0..source.height()).step_by(stride) {
        for x in (0..source.width()).step_by(stride) {
            if !overlap.get(x, y) || !support.get(x, y) {
                continue;
            }
            let position = Point::new(x as f64, y as f64);
            let Ok(anchor) = mesh.anchor(&position) else { continue };
            samples.push(PhotometricSample {
                position,
                anchor,
                intensity: source.get(x, y),
                gradient: dx.get(x, y).hypot(dy.get(x, y)),
            });
        }
    }
    Ok(PhotometricSampleSet { samples })
}

/// One Gauss-Newton linearization of a sample at `q`: value, gradient, for
/// intensity and gradient magnitude. `None` outside the valid target.
pub fn linearize(target: &PhotometricTarget, q: &Point) -> Option<[(f64, f64, f64); 2]> {
    if !target.valid.covers_bilinear(q.x, q.y) {
        return None;
    }
    let at = |p: &Plane| p.sample_bilinear(q.x, q.y);
    Some([
        (at(&target.intensity)?, at(&target.intensity_dx)?, at(&target.intensity_dy)?),
        (at(&target.magnitude)?, at(&target.magnitude_dx)?, at(&target.magnitude_dy)?),
    ])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhotometricStats {
    pub used: usize,
    pub skipped: usize,
}

/// Linearized intensity and gradient-magnitude residuals around the current
/// vertices: `T(q) + ∇T(q)·(q_new − q) − S` with weight `gamma`, and the same
/// on gradient magnitudes with weight `gamma·lambda`.
pub fn add_photometric_term(
    sys: &mut EnergySystem,
    samples: &PhotometricSampleSet,
    target: &PhotometricTarget,
    vertices: &[Point],
    gamma: f64,
    lambda: f64,
) -> PhotometricStats {
    // Samples of one quad share their four vertices, so accumulate dense 8×8
    // blocks per quad before touching the sparse system.
    type Block = ([usize; 4], [f64; 64], [f64; 8], f64);
    let per_sample: Vec<Option<(BilinearAnchor, [(f64, f64, f64); 2], Point)>> = samples
        .samples
        .par_iter()
        .map(|s| {
            let q = s.anchor.interpolate(vertices);
            linearize(target, &q).map(|lin| (s.anchor, lin, q))
        })
        .collect();

    let mut blocks: std::collections::BTreeMap<(usize, usize), Block> = Default::default();
    let mut stats = PhotometricStats::default();
    for (s, lin) in samples.samples.iter().zip(&per_sample) {
        let Some((anchor, lin, q)) = lin else {
            stats.skipped += 1;
            continue;
        };
        stats.used += 1;
        let block = blocks.entry(anchor.quad).or_insert((anchor.vertex_ids, [0.0; 64], [0.0; 8], 0.0));
        let source = [s.intensity, s.gradient];
        for (channel, weight) in [(0, gamma), (1, gamma * lambda)] {
            if weight == 0.0 {
                continue;
            }
            let (value, gx, gy) = lin[channel];
            // Residual J·z − k with z the quad's 8 coordinates.
            let mut j = [0.0; 8];
            for k in 0..4 {
                j[2 * k] = gx * anchor.weights[k];
                j[2 * k + 1] = gy * anchor.weights[k];
            }
            let k = source[channel] - value + gx * q.x + gy * q.y;
            for a in 0..8 {
                block.2[a] += weight * j[a] * k;
                for b in 0..8 {
                    block.1[a * 8 + b] += weight * j[a] * j[b];
                }
            }
            block.3 += weight * k * k;
        }
    }
    for (ids, hessian, rhs, constant) in blocks.values() {
        let indices: Vec<usize> = ids.iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
        sys.add_block(&indices, hessian, rhs, *constant);
    }
    stats
}
