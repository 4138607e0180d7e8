//! Descriptor matching and pre-rejective RANSAC alignment.

mod matching;
mod ransac;

pub use matching::{match_features, Correspondence, Metric};
pub use ransac::{count_inliers, prerejective_ransac, AlignmentResult, RansacParams};
