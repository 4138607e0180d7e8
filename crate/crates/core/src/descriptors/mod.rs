//! Feature descriptors: FPFH (33 values), spin images (radial × elevation
//! grid) and NARF (36 beams).
//!
//! Keypoints whose support is insufficient produce no vector; every
//! returned [`FeatureVector`] records which keypoint it describes.

use std::fmt;
use std::str::FromStr;

use crate::cloud::PointCloud;
use crate::detectors::Keypoint;
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

mod fpfh;
mod narf;
mod spin;

pub use fpfh::{describe_fpfh, pair_features, FPFH_BINS};
pub use narf::{describe_narf, NARF_BEAMS, NARF_RINGS};
pub use spin::describe_spin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DescriptorKind {
    Fpfh,
    Spin,
    Narf,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 3] = [DescriptorKind::Narf, DescriptorKind::Fpfh, DescriptorKind::Spin];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Fpfh => "FPFH",
            DescriptorKind::Spin => "SPIN",
            DescriptorKind::Narf => "NARF",
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FPFH" => Ok(DescriptorKind::Fpfh),
            "SPIN" => Ok(DescriptorKind::Spin),
            "NARF" => Ok(DescriptorKind::Narf),
            other => Err(Error::InvalidParameter(format!("unknown descriptor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub method: DescriptorKind,
    /// Position of the described keypoint in the keypoint list.
    pub keypoint: usize,
    values: Vec<f64>,
}

impl FeatureVector {
    /// Checks the length against the method's cardinality.
    pub fn new(method: DescriptorKind, keypoint: usize, values: Vec<f64>, expected: usize) -> Result<Self> {
        if values.len() != expected {
            return Err(Error::Cardinality {
                method: method.name().to_string(),
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{method} descriptor has non-finite values")));
        }
        Ok(Self {
            method,
            keypoint,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinParams {
    pub radial_bins: usize,
    pub elevation_bins: usize,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            radial_bins: 8,
            elevation_bins: 16,
        }
    }
}

impl DescriptorKind {
    /// Vector length for this method.
    pub fn cardinality(self, spin: &SpinParams) -> usize {
        match self {
            DescriptorKind::Fpfh => 3 * FPFH_BINS,
            DescriptorKind::Spin => spin.radial_bins * spin.elevation_bins,
            DescriptorKind::Narf => NARF_BEAMS,
        }
    }
}

/// Index of the cloud point a keypoint sits on: its source index when it has
/// one, else the nearest point.
pub(crate) fn anchor(index: &SpatialIndex, kp: &Keypoint) -> usize {
    match kp.source_index {
        Some(i) if i < index.len() && index.points()[i] == kp.position => i,
        _ => index
            .nearest_neighbor(&kp.position, None)
            .map(|(i, _)| i)
            .expect("index is non-empty"),
    }
}

pub(crate) fn check_cloud(cloud: &PointCloud, index: &SpatialIndex) -> Result<()> {
    if cloud.len() != index.len() {
        return Err(Error::LengthMismatch {
            src: cloud.len(),
            dst: index.len(),
        });
    }
    Ok(())
}

/// Divides by the sum unless the sum is zero.
pub(crate) fn normalize(values: &mut [f64]) -> bool {
    let s: f64 = values.iter().sum();
    if s > 0.0 {
        values.iter_mut().for_each(|v| *v /= s);
        true
    } else {
        false
    }
}
