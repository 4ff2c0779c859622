//! Homographies, their robust estimation, the warp mesh and canvas mapping.

mod dlt;
mod homography;
mod mesh;
mod ransac;
mod transfer;
mod warp;

pub use dlt::{dlt_estimate, line_residual, point_residual};
pub use homography::{Homography, MAX_CONDITION};
pub use mesh::{mean_distance, BilinearAnchor, Mesh};
pub use ransac::{ransac_homography, RansacConfig, RansacResult};
pub use transfer::{transfer_correspondences, Transferred};
pub use warp::{footprint, place, warp_global, warp_into, Canvas, WarpedImage};

pub(crate) use dlt::dlt_estimate_refs;
pub(crate) use warp::{render, snap};
