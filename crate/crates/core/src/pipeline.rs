//! End-to-end coarse registration: range image, keypoints, descriptors,
//! matching and prerejective RANSAC.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vector3};
use crate::config::PipelineConfig;
use crate::descriptors::{describe_fpfh, describe_narf, describe_spin, DescriptorKind, FeatureVector};
use crate::detectors::{
    detect_harris_with_index, detect_iss_with_index, detect_narf, detect_sift_with_index, DetectorKind, Keypoint,
};
use crate::error::{Error, Result, Stage};
use crate::index::SpatialIndex;
use crate::range_image::{camera_for, detect_borders, project, to_point_cloud, RangeImage};
use crate::registration::{match_features, prerejective_ransac, AlignmentResult};
use crate::surface::{compute_sphericity, normals_at};

/// Wall time per stage in seconds, summed over both clouds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub range_image: f64,
    pub detection: f64,
    pub description: f64,
    pub matching: f64,
    pub alignment: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.range_image + self.detection + self.description + self.matching + self.alignment
    }
}

/// One cloud after projection and keypoint detection.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub image: RangeImage,
    /// The simplified cloud, one point per filled pixel.
    pub cloud: PointCloud,
    pub index: SpatialIndex,
    pub keypoints: Vec<Keypoint>,
}

#[derive(Debug, Clone)]
pub struct RegistrationOutput {
    /// Maps the registered cloud onto the reference cloud.
    pub alignment: AlignmentResult,
    pub pref_keypoints: usize,
    pub preg_keypoints: usize,
    pub pref_features: usize,
    pub preg_features: usize,
    pub timings: StageTimings,
}

/// Projects `cloud` through its own camera, labels borders, simplifies and
/// runs the configured detector.
pub fn prepare(cloud: &PointCloud, config: &PipelineConfig, timings: &mut StageTimings) -> Result<PreparedCloud> {
    let t = Instant::now();
    let image = range_stage(cloud, config).map_err(|e| e.at(Stage::RangeImage))?;
    let simplified = to_point_cloud(&image);
    timings.range_image += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (simplified, index, keypoints) =
        detect_stage(&image, simplified, config).map_err(|e| e.at(Stage::Detection))?;
    timings.detection += t.elapsed().as_secs_f64();
    Ok(PreparedCloud {
        image,
        cloud: simplified,
        index,
        keypoints,
    })
}

fn range_stage(cloud: &PointCloud, config: &PipelineConfig) -> Result<RangeImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ri = &config.range_image;
    let camera = camera_for(cloud, ri.height_factor, ri.resolution_deg)?;
    let image = project(cloud, &camera)?;
    detect_borders(&image, ri.border_threshold)
}

fn detect_stage(
    image: &RangeImage,
    simplified: PointCloud,
    config: &PipelineConfig,
) -> Result<(PointCloud, SpatialIndex, Vec<Keypoint>)> {
    let params = &config.detection;
    let index = SpatialIndex::new(simplified.points())?;
    let (cloud, keypoints) = match config.detector {
        DetectorKind::Harris => {
            let all: Vec<usize> = (0..simplified.len()).collect();
            let normals = normals_at(&simplified, &index, &all, config.normal_radius)?;
            let cloud = simplified.with_normals(normals)?;
            let kps = detect_harris_with_index(&cloud, &index, params)?;
            (cloud, kps)
        }
        DetectorKind::Iss => {
            let kps = detect_iss_with_index(&simplified, &index, params)?;
            (simplified, kps)
        }
        DetectorKind::Sift => {
            // sphericity stands in for intensity, which is not comparable
            // between scans taken from different viewpoints
            let cloud = compute_sphericity(&simplified, config.normal_radius)?;
            let kps = detect_sift_with_index(&cloud, &index, params)?;
            (cloud, kps)
        }
        DetectorKind::Narf => {
            let kps = detect_narf(image, params)?;
            (simplified, kps)
        }
    };
    Ok((cloud, index, keypoints))
}

/// Descriptors for the prepared keypoints. Normals are estimated only where
/// the descriptor reads them; everything else keeps the zero sentinel.
pub fn describe(prepared: &PreparedCloud, config: &PipelineConfig) -> Result<Vec<FeatureVector>> {
    let radius = config.support_radius();
    let kps = &prepared.keypoints;
    if kps.is_empty() {
        return Ok(Vec::new());
    }
    match config.descriptor {
        DescriptorKind::Narf => describe_narf(&prepared.image, kps, radius),
        DescriptorKind::Fpfh => {
            // neighbors of neighbors: everything within 2R of a keypoint
            let mut mask = vec![false; prepared.cloud.len()];
            for kp in kps {
                prepared
                    .index
                    .for_each_within(&kp.position, 2.0 * radius, |j, _| mask[j] = true);
            }
            let cloud = with_normals_where(prepared, &mask, config)?;
            describe_fpfh(&cloud, &prepared.index, kps, radius)
        }
        DescriptorKind::Spin => {
            let mut mask = vec![false; prepared.cloud.len()];
            for kp in kps {
                mask[crate::descriptors::anchor(&prepared.index, kp)] = true;
            }
            let cloud = with_normals_where(prepared, &mask, config)?;
            describe_spin(&cloud, &prepared.index, kps, radius, &config.spin)
        }
    }
}

fn with_normals_where(prepared: &PreparedCloud, mask: &[bool], config: &PipelineConfig) -> Result<PointCloud> {
    if let Some(n) = prepared.cloud.normals() {
        if n.len() == prepared.cloud.len() {
            return Ok(prepared.cloud.clone());
        }
    }
    let wanted: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let computed = normals_at(&prepared.cloud, &prepared.index, &wanted, config.normal_radius)?;
    let mut normals = vec![Vector3::zeros(); prepared.cloud.len()];
    for (&i, n) in wanted.iter().zip(computed) {
        normals[i] = n;
    }
    prepared.cloud.clone().with_normals(normals)
}

/// Registers `registered` onto `reference`.
///
/// A run that finishes without reaching the inlier fraction still returns
/// `Ok` with `converged = false`; stage failures come back tagged with the
/// stage that raised them.
pub fn coarse_register(
    reference: &PointCloud,
    registered: &PointCloud,
    config: &PipelineConfig,
) -> Result<RegistrationOutput> {
    let mut timings = StageTimings::default();
    let pref = prepare(reference, config, &mut timings)?;
    let preg = prepare(registered, config, &mut timings)?;
    align_prepared(&pref, &preg, config, timings)
}

/// Description, matching and alignment of two prepared clouds. `timings`
/// carries whatever the preparation cost.
pub fn align_prepared(
    pref: &PreparedCloud,
    preg: &PreparedCloud,
    config: &PipelineConfig,
    mut timings: StageTimings,
) -> Result<RegistrationOutput> {
    let t = Instant::now();
    let fref = describe(pref, config).map_err(|e| e.at(Stage::Description))?;
    let freg = describe(preg, config).map_err(|e| e.at(Stage::Description))?;
    timings.description += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let matches = match_features(&freg, &fref, config.ransac.correspondence_randomness, config.metric)
        .map_err(|e| e.at(Stage::Matching))?;
    timings.matching += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let alignment = prerejective_ransac(&preg.keypoints, &pref.keypoints, &matches, &config.ransac)
        .map_err(|e| e.at(Stage::Alignment))?;
    timings.alignment += t.elapsed().as_secs_f64();

    log::info!(
        "registered: {} / {} keypoints, {} inliers, converged {}",
        pref.keypoints.len(),
        preg.keypoints.len(),
        alignment.inlier_count,
        alignment.converged
    );
    Ok(RegistrationOutput {
        pref_keypoints: pref.keypoints.len(),
        preg_keypoints: preg.keypoints.len(),
        pref_features: fref.len(),
        preg_features: freg.len(),
        alignment,
        timings,
    })
}

/// Configuration keys that change what [`prepare`] produces.
pub fn preparation_keys(config: &PipelineConfig) -> Vec<(&'static str, String)> {
    const LATER: [&str; 6] = ["descriptor", "spin.", "matching.", "ransac.", "evaluation.", "output."];
    config
        .entries()
        .into_iter()
        .filter(|(k, _)| k != &"report.include_timings" && !LATER.iter().any(|p| k.starts_with(p)))
        .collect()
}
