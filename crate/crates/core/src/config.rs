//! Flat `key=value` pipeline configuration with dotted keys.
//!
//! Every key is optional; missing keys keep their defaults. Serialization
//! writes every key, so a written config documents the effective settings
//! and parses back to the same value.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::descriptors::{DescriptorKind, SpinParams};
use crate::detectors::{DetectorKind, DetectorParams};
use crate::error::{Error, Result};
use crate::range_image::{DEFAULT_ANGULAR_RESOLUTION_DEG, DEFAULT_BORDER_THRESHOLD, DEFAULT_HEIGHT_FACTOR};
use crate::registration::{Metric, RansacParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImageConfig {
    pub resolution_deg: f64,
    pub height_factor: f64,
    pub border_threshold: f64,
}

impl Default for RangeImageConfig {
    fn default() -> Self {
        Self {
            resolution_deg: DEFAULT_ANGULAR_RESOLUTION_DEG,
            height_factor: DEFAULT_HEIGHT_FACTOR,
            border_threshold: DEFAULT_BORDER_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    /// File of `x y z [radius]` lines; empty for none.
    pub spheres: Option<PathBuf>,
    pub sphere_radius: f64,
    pub max_match_distance: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            spheres: None,
            sphere_radius: 2.0,
            max_match_distance: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorKind,
    pub descriptor: DescriptorKind,
    /// Normals and sphericity radius.
    pub normal_radius: f64,
    /// Support radius, non-max radius and per-detector settings.
    pub detection: DetectorParams,
    pub range_image: RangeImageConfig,
    pub spin: SpinParams,
    pub ransac: RansacParams,
    pub metric: Metric,
    pub evaluation: EvaluationConfig,
    pub output_dir: PathBuf,
    /// When false, reports carry zero timings so that repeated runs are
    /// byte-identical.
    pub include_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::Narf,
            descriptor: DescriptorKind::Fpfh,
            normal_radius: 0.5,
            detection: DetectorParams::default(),
            range_image: RangeImageConfig::default(),
            spin: SpinParams::default(),
            ransac: RansacParams::default(),
            metric: Metric::L2,
            evaluation: EvaluationConfig::default(),
            output_dir: PathBuf::from("."),
            include_timings: true,
        }
    }
}

impl PipelineConfig {
    pub fn support_radius(&self) -> f64 {
        self.detection.support_radius
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.detection;
        let r = &self.ransac;
        vec![
            ("detector", self.detector.name().to_string()),
            ("descriptor", self.descriptor.name().to_string()),
            ("support_radius", d.support_radius.to_string()),
            ("normal_radius", self.normal_radius.to_string()),
            ("non_max_radius", d.non_max_radius.to_string()),
            ("range_image.resolution_deg", self.range_image.resolution_deg.to_string()),
            ("range_image.height_factor", self.range_image.height_factor.to_string()),
            ("range_image.border_threshold", self.range_image.border_threshold.to_string()),
            ("harris.k", d.harris.k.to_string()),
            ("harris.threshold", d.harris.threshold.to_string()),
            ("iss.gamma21", d.iss.gamma21.to_string()),
            ("iss.gamma32", d.iss.gamma32.to_string()),
            ("iss.min_neighbors", d.iss.min_neighbors.to_string()),
            ("sift.min_scale", d.sift.min_scale.map_or("auto".to_string(), |s| s.to_string())),
            ("sift.octaves", d.sift.n_octaves.to_string()),
            ("sift.scales_per_octave", d.sift.scales_per_octave.to_string()),
            ("sift.min_contrast", d.sift.min_contrast.to_string()),
            ("narf.threshold", d.narf.threshold.to_string()),
            ("narf.border_weight", d.narf.border_weight.to_string()),
            ("narf.surface_weight", d.narf.surface_weight.to_string()),
            ("spin.radial_bins", self.spin.radial_bins.to_string()),
            ("spin.elevation_bins", self.spin.elevation_bins.to_string()),
            ("matching.metric", self.metric.name().to_string()),
            ("ransac.similarity_threshold", r.similarity_threshold.to_string()),
            ("ransac.inlier_threshold", r.inlier_threshold.to_string()),
            ("ransac.max_iterations", r.max_iterations.to_string()),
            ("ransac.correspondence_randomness", r.correspondence_randomness.to_string()),
            ("ransac.min_inlier_fraction", r.min_inlier_fraction.to_string()),
            ("ransac.seed", r.rng_seed.to_string()),
            (
                "evaluation.spheres",
                self.evaluation.spheres.as_ref().map_or(String::new(), |p| p.display().to_string()),
            ),
            ("evaluation.sphere_radius", self.evaluation.sphere_radius.to_string()),
            ("evaluation.max_match_distance", self.evaluation.max_match_distance.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("report.include_timings", self.include_timings.to_string()),
        ]
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}`"))
        }
        let d = &mut self.detection;
        let r = &mut self.ransac;
        match key {
            "detector" => self.detector = v_err(value.parse())?,
            "descriptor" => self.descriptor = v_err(value.parse())?,
            "support_radius" => d.support_radius = num(value)?,
            "normal_radius" => self.normal_radius = num(value)?,
            "non_max_radius" => d.non_max_radius = num(value)?,
            "range_image.resolution_deg" => self.range_image.resolution_deg = num(value)?,
            "range_image.height_factor" => self.range_image.height_factor = num(value)?,
            "range_image.border_threshold" => self.range_image.border_threshold = num(value)?,
            "harris.k" => d.harris.k = num(value)?,
            "harris.threshold" => d.harris.threshold = num(value)?,
            "iss.gamma21" => d.iss.gamma21 = num(value)?,
            "iss.gamma32" => d.iss.gamma32 = num(value)?,
            "iss.min_neighbors" => d.iss.min_neighbors = num(value)?,
            "sift.min_scale" => {
                d.sift.min_scale = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(num(value)?)
                }
            }
            "sift.octaves" => d.sift.n_octaves = num(value)?,
            "sift.scales_per_octave" => d.sift.scales_per_octave = num(value)?,
            "sift.min_contrast" => d.sift.min_contrast = num(value)?,
            "narf.threshold" => d.narf.threshold = num(value)?,
            "narf.border_weight" => d.narf.border_weight = num(value)?,
            "narf.surface_weight" => d.narf.surface_weight = num(value)?,
            "spin.radial_bins" => self.spin.radial_bins = num(value)?,
            "spin.elevation_bins" => self.spin.elevation_bins = num(value)?,
            "matching.metric" => self.metric = v_err(value.parse())?,
            "ransac.similarity_threshold" => r.similarity_threshold = num(value)?,
            "ransac.inlier_threshold" => r.inlier_threshold = num(value)?,
            "ransac.max_iterations" => r.max_iterations = num(value)?,
            "ransac.correspondence_randomness" => r.correspondence_randomness = num(value)?,
            "ransac.min_inlier_fraction" => r.min_inlier_fraction = num(value)?,
            "ransac.seed" => r.rng_seed = num(value)?,
            "evaluation.spheres" => {
                self.evaluation.spheres = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "evaluation.sphere_radius" => self.evaluation.sphere_radius = num(value)?,
            "evaluation.max_match_distance" => self.evaluation.max_match_distance = num(value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            "report.include_timings" => self.include_timings = num(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: n + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }
}

fn v_err<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
