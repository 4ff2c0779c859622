use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("invalid image buffer: {0}")]
    InvalidImage(String),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("failed to decode or encode {path}: {source}")]
    ImageIo {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid correspondences: {0}")]
    InvalidCorrespondence(String),
    #[error("point ({x:.3}, {y:.3}) lies outside the mesh")]
    OutsideMesh { x: f64, y: f64 },
    #[error("DLT system is rank deficient (numerical rank {rank} < 8)")]
    RankDeficient { rank: usize },
    #[error("not enough constraints for DLT: {rows} rows, need at least 8")]
    TooFewConstraints { rows: usize },
    #[error("RANSAC failed: {0}")]
    Ransac(String),
    #[error("degenerate homography: {0}")]
    DegenerateHomography(String),
    #[error("source and target do not overlap")]
    EmptyOverlap,
    #[error("singular system at unknown {index} (vertex {vertex}, {axis}): {reason}")]
    SingularSystem {
        index: usize,
        vertex: usize,
        axis: char,
        reason: String,
    },
    #[error("linear solve did not reach tolerance: relative residual {0:e}")]
    SolveInaccurate(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Pipeline stage that produced a [`StitchError`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Input,
    Features,
    Ransac,
    Overlap,
    Solve,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Stage::Input => "INPUT",
            Stage::Features => "FEATURES",
            Stage::Ransac => "RANSAC",
            Stage::Overlap => "OVERLAP",
            Stage::Solve => "SOLVE",
        };
        f.write_str(tag)
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {source}")]
pub struct StitchError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StitchError {
    pub fn new(stage: Stage, source: Error) -> Self {
        Self { stage, source }
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StitchError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StitchError> {
        self.map_err(|e| StitchError::new(stage, e))
    }
}
