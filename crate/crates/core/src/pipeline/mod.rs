//! End-to-end stitching: features, global homography, coarse-to-fine mesh
//! refinement, per-quad rendering and feathered blending.

mod render;

pub use render::{blend_linear, distance_to_invalid, warp_mesh, warp_mesh_global, MeshWarp};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::{
    add_collinearity_term, add_line_term, add_photometric_term, add_point_term, add_similarity_term, anchor_lines,
    anchor_points, anchor_segments, pack, sample_photometric, solve, unpack, AnchoredLine, AnchoredPoint,
    EnergySystem, EnergyWeights, PhotometricSampleSet, PhotometricTarget,
};
use crate::error::{AtStage, Error, Result, Stage, StitchError};
use crate::features::{
    detect_and_match_lines, detect_and_match_points, CorrespondenceSet, DetectorConfig,
};
use crate::geometry::{
    footprint, mean_distance, place, ransac_homography, transfer_correspondences, warp_into, Canvas, Homography,
    Mesh, RansacConfig,
};
use crate::imaging::{clamp_levels, Mask, MaskedPyramid, RasterImage};
use crate::metrics::{rmse_ncc, MetricConfig, MetricReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchConfig {
    pub mesh_rows: usize,
    pub mesh_cols: usize,
    pub levels: usize,
    /// Solves per pyramid level.
    pub max_iterations: usize,
    /// Mean vertex displacement (full-resolution pixels) below which a level stops.
    pub convergence_threshold: f64,
    /// Photometric sample spacing at full resolution; halved per coarser level.
    pub photometric_stride: usize,
    /// Intensity units of the photometric residuals (255: 8-bit levels).
    pub photometric_scale: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub weights: EnergyWeights,
    #[serde(flatten)]
    pub detector: DetectorConfig,
    #[serde(flatten)]
    pub ransac: RansacConfig,
    #[serde(flatten)]
    pub metric: MetricConfig,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            mesh_rows: 32,
            mesh_cols: 32,
            levels: 3,
            max_iterations: 10,
            convergence_threshold: 1.0,
            photometric_stride: 4,
            photometric_scale: 255.0,
            seed: 42,
            weights: EnergyWeights::default(),
            detector: DetectorConfig::default(),
            ransac: RansacConfig::default(),
            metric: MetricConfig::default(),
        }
    }
}

impl StitchConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("mesh_rows", self.mesh_rows),
            ("mesh_cols", self.mesh_cols),
            ("levels", self.levels),
            ("max_iterations", self.max_iterations),
            ("photometric_stride", self.photometric_stride),
            ("ransac_iterations", self.ransac.ransac_iterations),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.convergence_threshold.is_finite() && self.convergence_threshold > 0.0) {
            return Err(Error::Config("convergence_threshold must be positive".into()));
        }
        if !(self.photometric_scale.is_finite() && self.photometric_scale > 0.0) {
            return Err(Error::Config("photometric_scale must be positive".into()));
        }
        self.weights.validate()?;
        self.metric.validate()
    }

    /// Overrides fields with the keys of a flat JSON object, rejecting keys
    /// that name no field.
    pub fn merge_json(&self, overrides: &Value) -> Result<Self> {
        let Value::Object(patch) = overrides else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        let Value::Object(mut fields) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config serializes to an object");
        };
        for (key, value) in patch {
            if !fields.contains_key(key) {
                return Err(Error::Config(format!("unknown configuration key `{key}`")));
            }
            fields.insert(key.clone(), value.clone());
        }
        let merged: Self = serde_json::from_value(Value::Object(fields))
            .map_err(|e| Error::Config(e.to_string()))?;
        merged.validate()?;
        Ok(merged)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::default().merge_json(&value)
    }

    /// Every field name accepted by [`StitchConfig::merge_json`].
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(Self::default()) {
            Ok(Value::Object(m)) => m.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }
}

/// One solve of the refinement loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    /// Assembled energy at the vertices before the solve.
    pub energy_before: f64,
    /// Assembled energy at the vertices kept after the solve.
    pub energy_after: f64,
    /// Mean vertex movement, full-resolution pixels.
    pub displacement: f64,
    pub photometric_used: usize,
    pub photometric_skipped: usize,
    /// False when rounding made the solution worse than the previous
    /// vertices, which were then kept.
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelTrace {
    pub level: usize,
    pub scale: f64,
    pub samples: usize,
    pub converged: bool,
    pub iterations: Vec<IterationTrace>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StitchReport {
    pub homography: Homography,
    pub points_total: usize,
    pub lines_total: usize,
    pub point_inliers: usize,
    pub line_inliers: usize,
    pub ransac_iterations: usize,
    /// Inlier features that fell outside the canvas.
    pub dropped_features: usize,
    pub canvas: Canvas,
    pub levels: Vec<LevelTrace>,
    pub mesh: Mesh,
    /// Mean distance of the final vertices from their rest positions.
    pub mesh_displacement: f64,
    pub skipped_cells: usize,
    pub global_metric: MetricReport,
    pub final_metric: MetricReport,
    pub config: StitchConfig,
    #[serde(skip)]
    pub panorama: RasterImage,
    #[serde(skip)]
    pub panorama_mask: Mask,
    /// Source after the mesh warp, on the canvas.
    #[serde(skip)]
    pub warped_source: RasterImage,
    #[serde(skip)]
    pub warped_mask: Mask,
}

impl StitchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Built-in detection: point matches, a point-only RANSAC estimate when
/// possible, then line matching guided by that estimate.
pub fn extract_correspondences(src: &RasterImage, dst: &RasterImage, cfg: &StitchConfig) -> CorrespondenceSet {
    let points = detect_and_match_points(src, dst, &cfg.detector);
    let prior = if points.len() >= 4 {
        let only_points = CorrespondenceSet { points: points.clone(), ..Default::default() };
        ransac_homography(&only_points, &cfg.ransac, cfg.seed).ok().map(|r| r.model)
    } else {
        None
    };
    let (matched_lines, unmatched_lines) = detect_and_match_lines(src, dst, prior.as_ref(), &cfg.detector);
    CorrespondenceSet { points, matched_lines, unmatched_lines }
}

fn same_channels(a: &RasterImage, b: &RasterImage) -> (RasterImage, RasterImage) {
    if a.channels() == b.channels() {
        (a.clone(), b.clone())
    } else {
        (a.to_luminance(), b.to_luminance())
    }
}

/// Keeps RANSAC inliers; matched lines rejected as outliers still take part
/// in the collinearity term as unmatched segments.
fn inlier_set(corr: &CorrespondenceSet, points: &[usize], lines: &[usize]) -> CorrespondenceSet {
    let mut keep_line = vec![false; corr.matched_lines.len()];
    lines.iter().for_each(|&i| keep_line[i] = true);
    let mut unmatched_lines = corr.unmatched_lines.clone();
    let mut matched_lines = Vec::new();
    for (l, keep) in corr.matched_lines.iter().zip(keep_line) {
        if keep {
            matched_lines.push(l.clone());
        } else {
            unmatched_lines.push(l.seg);
        }
    }
    CorrespondenceSet { points: points.iter().map(|&i| corr.points[i].clone()).collect(), matched_lines, unmatched_lines }
}

/// Geometric part of the energy, fixed within a level.
struct GeometricTerms {
    points: Vec<AnchoredPoint>,
    lines: Vec<AnchoredLine>,
    segments: Vec<crate::energy::AnchoredSegment>,
}

impl GeometricTerms {
    fn assemble(&self, mesh: &Mesh, scale: f64, w: &EnergyWeights) -> EnergySystem {
        let mut sys = EnergySystem::for_vertices(mesh.vertex_count());
        // Residuals are in level pixels; scale² puts them back in full-resolution units.
        let unit = scale * scale;
        let points: Vec<_> = self.points.iter().map(|p| p.scaled_down(scale)).collect();
        let lines: Vec<_> = self.lines.iter().map(|l| l.scaled_down(scale)).collect();
        add_point_term(&mut sys, &points, unit * w.alpha);
        add_line_term(&mut sys, &lines, unit * w.beta);
        add_collinearity_term(&mut sys, &self.segments, unit * w.delta);
        add_similarity_term(&mut sys, mesh, unit * w.eta);
        sys
    }
}

/// Full pipeline. `img1` is warped onto `img2`, which stays fixed.
pub fn stitch(
    img1: &RasterImage,
    img2: &RasterImage,
    corr_override: Option<&CorrespondenceSet>,
    cfg: &StitchConfig,
) -> Result<StitchReport, StitchError> {
    cfg.validate().at(Stage::Input)?;
    let (src, dst) = same_channels(img1, img2);
    let corr = match corr_override {
        Some(c) => {
            c.validate(0.0).at(Stage::Input)?;
            c.validate_bounds((src.width(), src.height()), (dst.width(), dst.height())).at(Stage::Input)?;
            c.clone()
        }
        None => extract_correspondences(&src, &dst, cfg),
    };
    if corr.points.len() < 4 {
        return Err(StitchError::new(
            Stage::Features,
            Error::InvalidCorrespondence(format!("{} point matches, at least 4 are needed", corr.points.len())),
        ));
    }

    let fit = ransac_homography(&corr, &cfg.ransac, cfg.seed).at(Stage::Ransac)?;
    let h = fit.model;
    let canvas = Canvas::covering((src.width(), src.height()), &h, (dst.width(), dst.height())).at(Stage::Ransac)?;
    let (warped, warped_mask) = warp_into(&src, &h, &canvas);
    let (target, target_mask) = place(&dst, &canvas);
    if warped_mask.and(&target_mask).count() == 0 {
        return Err(StitchError::new(Stage::Overlap, Error::EmptyOverlap));
    }
    let global_metric = rmse_ncc(&warped, &warped_mask, &target, &target_mask, &cfg.metric).at(Stage::Overlap)?;

    let inliers = inlier_set(&corr, &fit.point_inliers, &fit.line_inliers);
    let transferred = transfer_correspondences(&inliers, &h, &canvas);
    let (x0, y0, x1, y1) = footprint(&h, src.width(), src.height()).at(Stage::Ransac)?;
    let (ox, oy) = (canvas.offset.0 as f64, canvas.offset.1 as f64);
    let full_mesh = Mesh::new(cfg.mesh_rows, cfg.mesh_cols, x0 - ox, y0 - oy, x1 - ox, y1 - oy).at(Stage::Ransac)?;
    let geometric = GeometricTerms {
        points: anchor_points(&full_mesh, &transferred.set.points).at(Stage::Solve)?,
        lines: anchor_lines(&full_mesh, &transferred.set.matched_lines).at(Stage::Solve)?,
        segments: anchor_segments(&full_mesh, &transferred.set.all_source_lines()).at(Stage::Solve)?,
    };

    let min_dim = 2 * cfg.mesh_rows.max(cfg.mesh_cols);
    let levels = clamp_levels(canvas.width, canvas.height, cfg.levels, min_dim);
    let src_lum = RasterImage::from_plane(&warped.luminance_plane());
    let dst_lum = RasterImage::from_plane(&target.luminance_plane());
    let (src_pyr, dst_pyr) = rayon::join(
        || MaskedPyramid::build(&src_lum, &warped_mask, levels),
        || MaskedPyramid::build(&dst_lum, &target_mask, levels),
    );
    let (src_pyr, dst_pyr) = (src_pyr.at(Stage::Overlap)?, dst_pyr.at(Stage::Overlap)?);

    let top = (1usize << (levels - 1)) as f64;
    let mut mesh = full_mesh.scaled(1.0 / top);
    let mut traces = Vec::with_capacity(levels);
    for level in (0..levels).rev() {
        let scale = (1usize << level) as f64;
        let (s_img, s_mask) = &src_pyr.levels[level];
        let (t_img, t_mask) = &dst_pyr.levels[level];
        let s_plane = s_img.luminance_plane();
        let stride = (cfg.photometric_stride >> level).max(1);
        let samples = match sample_photometric(&s_plane, s_mask, t_mask, &mesh, stride) {
            Ok(s) => s,
            Err(Error::EmptyOverlap) => PhotometricSampleSet::default(),
            Err(e) => return Err(StitchError::new(Stage::Overlap, e)),
        };
        let target_field = PhotometricTarget::new(&t_img.luminance_plane(), t_mask);
        let base = geometric.assemble(&mesh, scale, &cfg.weights);

        let mut trace = LevelTrace { level, scale, samples: samples.samples.len(), converged: false, iterations: Vec::new() };
        for _ in 0..cfg.max_iterations {
            let mut sys = base.clone();
            let stats = add_photometric_term(
                &mut sys,
                &samples,
                &target_field,
                &mesh.vertices,
                cfg.weights.gamma * cfg.photometric_scale * cfg.photometric_scale,
                cfg.weights.lambda,
            );
            let before = pack(&mesh.vertices);
            let energy_before = sys.energy(&before);
            let solution = solve(&sys).at(Stage::Solve)?;
            let energy_solution = sys.energy(&solution);
            let accepted = energy_solution <= energy_before;
            let next = if accepted { unpack(&solution) } else { mesh.vertices.clone() };
            let displacement = mean_distance(&next, &mesh.vertices) * scale;
            mesh.vertices = next;
            trace.iterations.push(IterationTrace {
                energy_before,
                energy_after: if accepted { energy_solution } else { energy_before },
                displacement,
                photometric_used: stats.used,
                photometric_skipped: stats.skipped,
                accepted,
            });
            if displacement < cfg.convergence_threshold {
                trace.converged = true;
                break;
            }
        }
        traces.push(trace);
        if level > 0 {
            mesh = mesh.scaled(2.0);
        }
    }

    let local = warp_mesh_global(&src, &h, &canvas, &mesh);
    let (panorama, panorama_mask) = blend_linear(&local.image, &local.mask, &target, &target_mask);
    let final_metric = rmse_ncc(&local.image, &local.mask, &target, &target_mask, &cfg.metric).at(Stage::Overlap)?;
    Ok(StitchReport {
        homography: h,
        points_total: corr.points.len(),
        lines_total: corr.matched_lines.len(),
        point_inliers: fit.point_inliers.len(),
        line_inliers: fit.line_inliers.len(),
        ransac_iterations: fit.iterations_used,
        dropped_features: transferred.dropped,
        canvas,
        levels: traces,
        mesh_displacement: mesh.mean_displacement(mesh.rest()),
        mesh,
        skipped_cells: local.skipped_cells,
        global_metric,
        final_metric,
        config: cfg.clone(),
        panorama,
        panorama_mask,
        warped_source: local.image,
        warped_mask: local.mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{homography_pair, noise_image};

    #[test]
    fn config_merge_and_unknown_keys() {
        let cfg = StitchConfig::from_json_str(r#"{"mesh_rows": 8, "eta": 0.5, "window": 5}"#).unwrap();
        assert_eq!((cfg.mesh_rows, cfg.mesh_cols), (8, 32));
        assert_eq!(cfg.weights.eta, 0.5);
        assert_eq!(cfg.metric.window, 5);
        assert!(matches!(StitchConfig::from_json_str(r#"{"mesh": 8}"#), Err(Error::Config(_))));
        assert!(matches!(StitchConfig::from_json_str(r#"{"window": 4}"#), Err(Error::Config(_))));
        assert!(matches!(StitchConfig::from_json_str(r#"{"levels": 0}"#), Err(Error::Config(_))));
        let keys = StitchConfig::keys();
        assert!(keys.iter().any(|k| k == "lambda") && keys.iter().any(|k| k == "ransac_iterations"));
        let round: StitchConfig = serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn self_stitch_stays_at_rest() {
        let img = noise_image(160, 120, 6, 3);
        let cfg = StitchConfig { mesh_rows: 8, mesh_cols: 8, ..Default::default() };
        let r = stitch(&img, &img, None, &cfg).unwrap();
        assert!(r.homography.distance(&Homography::identity()) < 1e-6);
        assert!(r.mesh_displacement < 0.5);
        assert!(r.final_metric.rmse_ncc < 1e-3, "{}", r.final_metric.rmse_ncc);
        assert_eq!(r.skipped_cells, 0);
    }

    #[test]
    fn too_few_points_is_a_feature_error() {
        let flat = RasterImage::constant(80, 60, 1, 0.5).unwrap();
        let err = stitch(&flat, &flat, None, &StitchConfig::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Features);
    }

    #[test]
    fn homography_pair_aligns() {
        let pair = homography_pair(240, 180, 11);
        let cfg = StitchConfig { mesh_rows: 12, mesh_cols: 12, ..Default::default() };
        let r = stitch(&pair.source, &pair.target, None, &cfg).unwrap();
        assert!(r.homography.distance(&pair.homography) < 1e-2);
        assert!(r.final_metric.rmse_ncc < 0.05 * 255.0);
        for level in &r.levels {
            for it in &level.iterations {
                assert!(it.energy_after <= it.energy_before);
            }
        }
    }
}
