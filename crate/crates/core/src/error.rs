use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to tag errors surfaced by [`crate::pipeline::coarse_register`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    RangeImage,
    Detection,
    Description,
    Matching,
    Alignment,
    Evaluation,
    Io,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::RangeImage => "range_image",
            Stage::Detection => "detection",
            Stage::Description => "description",
            Stage::Matching => "matching",
            Stage::Alignment => "alignment",
            Stage::Evaluation => "evaluation",
            Stage::Io => "io",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
    #[error("threshold must be positive and finite, got {0}")]
    NonPositiveThreshold(f64),
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("insufficient neighbors: need {needed}, found {found}")]
    InsufficientNeighbors { needed: usize, found: usize },
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("need at least 3 point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("source and destination lengths differ ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("bounding box is degenerate")]
    DegenerateBBox,
    #[error("invalid camera parameters: {0}")]
    InvalidParams(String),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("point cloud has no scalar channel")]
    MissingScalar,
    #[error("ISS gamma ratios must lie in (0, 1), got {0} and {1}")]
    InvalidGamma(f64, f64),
    #[error("range image has no border labels")]
    BordersMissing,
    #[error("keypoint support exceeds the range image")]
    PatchOutOfImage,
    #[error("descriptor methods differ ({0} vs {1})")]
    MethodMismatch(String, String),
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("descriptor length {got} does not match {method} cardinality {expected}")]
    Cardinality { method: String, expected: usize, got: usize },
    #[error("too few keypoints: {0}")]
    TooFewKeypoints(usize),
    #[error("alignment did not converge")]
    NotConverged,
    #[error("invalid scene specification: {0}")]
    InvalidSpec(String),
    #[error("fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Errors caused by inputs that offer nothing to align (no keypoints,
    /// no features, collinear samples) rather than by bad arguments or IO.
    /// They count as failed alignments.
    pub fn is_alignment_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::EmptyFeatureSet
                | Error::TooFewKeypoints(_)
                | Error::TooFewPairs(_)
                | Error::DegenerateConfiguration
                | Error::NotConverged
        )
    }

    /// The innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveRadius(radius))
    }
}
