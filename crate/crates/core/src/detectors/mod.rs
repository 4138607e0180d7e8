//! Keypoint detectors: HARRIS (normal covariance), ISS (scatter eigenvalues),
//! SIFT (difference of Gaussians on the scalar channel) and NARF (range-image
//! borders and surface change).
//!
//! Every detector scores candidates, suppresses non-maxima over the complete
//! score field within `non_max_radius`, then applies its threshold. Raising a
//! threshold therefore only ever removes keypoints.

use std::fmt;
use std::str::FromStr;

use crate::cloud::Point3;
use crate::error::{check_radius, Error, Result};
use crate::index::SpatialIndex;

mod harris;
mod iss;
mod narf;
mod sift;

pub use harris::{detect_harris, detect_harris_with_index};
pub use iss::{detect_iss, detect_iss_with_index};
pub use narf::detect_narf;
pub(crate) use narf::window_half_size;
pub use sift::{detect_sift, detect_sift_with_index, median_spacing, poisson_subsample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    Harris,
    Iss,
    Sift,
    Narf,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Iss,
        DetectorKind::Harris,
        DetectorKind::Sift,
        DetectorKind::Narf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Harris => "HARRIS",
            DetectorKind::Iss => "ISS",
            DetectorKind::Sift => "SIFT",
            DetectorKind::Narf => "NARF",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HARRIS" => Ok(DetectorKind::Harris),
            "ISS" => Ok(DetectorKind::Iss),
            "SIFT" => Ok(DetectorKind::Sift),
            "NARF" => Ok(DetectorKind::Narf),
            other => Err(Error::InvalidParameter(format!("unknown detector `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub position: Point3,
    /// Index into the cloud the detector ran on. For NARF this is the
    /// filled-pixel ordinal, i.e. the index into `to_point_cloud(img)`.
    pub source_index: Option<usize>,
    pub saliency: f64,
    /// Characteristic radius: the detection scale for SIFT, the support
    /// radius otherwise.
    pub scale: f64,
    pub detector: DetectorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisParams {
    pub k: f64,
    pub threshold: f64,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self {
            k: 0.04,
            threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssParams {
    pub gamma21: f64,
    pub gamma32: f64,
    pub min_neighbors: usize,
}

impl Default for IssParams {
    fn default() -> Self {
        Self {
            gamma21: 0.975,
            gamma32: 0.975,
            min_neighbors: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftParams {
    /// `None` uses the median nearest-neighbor spacing of the cloud.
    pub min_scale: Option<f64>,
    pub n_octaves: usize,
    pub scales_per_octave: usize,
    pub min_contrast: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            min_scale: None,
            n_octaves: 4,
            scales_per_octave: 8,
            min_contrast: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarfParams {
    pub threshold: f64,
    pub border_weight: f64,
    pub surface_weight: f64,
}

impl Default for NarfParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            border_weight: 0.5,
            surface_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub support_radius: f64,
    pub non_max_radius: f64,
    pub harris: HarrisParams,
    pub iss: IssParams,
    pub sift: SiftParams,
    pub narf: NarfParams,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            support_radius: 2.0,
            non_max_radius: 1.0,
            harris: HarrisParams::default(),
            iss: IssParams::default(),
            sift: SiftParams::default(),
            narf: NarfParams::default(),
        }
    }
}

impl DetectorParams {
    pub(crate) fn check_radii(&self) -> Result<()> {
        check_radius(self.support_radius)?;
        check_radius(self.non_max_radius)
    }
}

/// Keeps the candidates whose score beats every other scored point within
/// `radius`; equal scores resolve to the lower index. Unscored points carry
/// `f64::NEG_INFINITY`.
pub(crate) fn suppress_non_maxima(
    index: &SpatialIndex,
    scores: &[f64],
    candidates: &[usize],
    radius: f64,
) -> Vec<usize> {
    let pts = index.points();
    let keep = crate::par::map_slice(candidates, |&c| {
        let sc = scores[c];
        let mut is_max = true;
        index.for_each_within(&pts[c], radius, |q, _| {
            if q != c && (scores[q] > sc || (scores[q] == sc && q < c)) {
                is_max = false;
            }
        });
        is_max
    });
    candidates
        .iter()
        .zip(keep)
        .filter_map(|(&c, k)| k.then_some(c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suppression_keeps_one_per_cluster() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.5, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(5.2, 0.0, 0.0),
        ];
        let idx = SpatialIndex::new(&pts).unwrap();
        let scores = [1.0, 2.0, 3.0, 3.0];
        assert_eq!(suppress_non_maxima(&idx, &scores, &[0, 1, 2, 3], 1.0), vec![1, 2]);
    }

    #[test]
    fn detector_names_round_trip() {
        for d in DetectorKind::ALL {
            assert_eq!(d.name().parse::<DetectorKind>().unwrap(), d);
        }
        assert!("SURF".parse::<DetectorKind>().is_err());
    }
}
