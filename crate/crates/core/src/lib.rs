//! Two-image stitching: a global homography from point and line matches,
//! refined by a content-preserving mesh warp that balances feature
//! alignment, photometric consistency and shape preservation.

pub mod energy;
pub mod error;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result, Stage, StitchError};
