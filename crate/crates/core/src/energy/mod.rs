//! The warp energy: five weighted terms assembled into one sparse quadratic
//! over the mesh vertices, and its solver.

mod photometric;
mod solver;
mod system;
mod terms;

pub use photometric::{
    add_photometric_term, linearize, sample_photometric, PhotometricSample, PhotometricSampleSet,
    PhotometricStats, PhotometricTarget,
};
pub use solver::{solve, SOLVE_TOLERANCE};
pub use system::{pack, unpack, EnergySystem};
pub use terms::{
    add_collinearity_term, add_line_term, add_point_term, add_similarity_term, anchor_lines,
    anchor_points, anchor_segments, similarity_constraints, AnchoredLine, AnchoredPoint,
    AnchoredSegment, TriangleConstraint, KEY_POINT_SPACING, MIN_KEY_POINTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    /// Point alignment.
    pub alpha: f64,
    /// Line alignment.
    pub beta: f64,
    /// Photometric alignment.
    pub gamma: f64,
    /// Collinearity.
    pub delta: f64,
    /// Triangle similarity.
    pub eta: f64,
    /// Gradient-magnitude share of the photometric term.
    pub lambda: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0, delta: 1.0, eta: 0.2, lambda: 1.0 }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta, self.eta, self.lambda];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("weights must be finite and non-negative: {all:?}")))
        }
    }
}
