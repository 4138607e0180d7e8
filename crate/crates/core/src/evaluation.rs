//! Check-sphere accuracy and the benchmark tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{check_radius, Error, Result};
use crate::index::SpatialIndex;
use crate::par;
use crate::registration::AlignmentResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl CheckSphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self {
            center: [center.x, center.y, center.z],
            radius,
        })
    }

    pub fn center(&self) -> Point3 {
        Point3::from(self.center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereAccuracy {
    pub sphere: CheckSphere,
    /// Zero when failed.
    pub mean_distance: f64,
    /// Population standard deviation; zero when failed.
    pub sd_distance: f64,
    pub matched_count: usize,
    pub failed: bool,
}

/// Cloud-to-cloud distances inside each sphere: every aligned point inside
/// (closed ball) is matched to its nearest reference point within
/// `max_match_distance`. A sphere fails when nothing matches.
pub fn evaluate_spheres(
    reference: &PointCloud,
    aligned: &PointCloud,
    spheres: &[CheckSphere],
    max_match_distance: f64,
) -> Result<Vec<SphereAccuracy>> {
    check_radius(max_match_distance)?;
    if spheres.is_empty() {
        return Err(Error::InvalidParameter("no check spheres".into()));
    }
    for s in spheres {
        check_radius(s.radius)?;
    }
    let index = if reference.is_empty() {
        None
    } else {
        Some(SpatialIndex::new(reference.points())?)
    };
    let pts = aligned.points();
    Ok(spheres
        .iter()
        .map(|s| {
            let c = s.center();
            let r2 = s.radius * s.radius;
            let inside: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - c).norm_squared() <= r2).collect();
            let dists: Vec<f64> = match &index {
                Some(index) => par::map_slice(&inside, |&i| {
                    index.nearest_neighbor(&pts[i], Some(max_match_distance)).map(|(_, d)| d)
                })
                .into_iter()
                .flatten()
                .collect(),
                None => Vec::new(),
            };
            summarize(*s, &dists)
        })
        .collect())
}

fn summarize(sphere: CheckSphere, dists: &[f64]) -> SphereAccuracy {
    if dists.is_empty() {
        return SphereAccuracy {
            sphere,
            mean_distance: 0.0,
            sd_distance: 0.0,
            matched_count: 0,
            failed: true,
        };
    }
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    SphereAccuracy {
        sphere,
        mean_distance: mean,
        sd_distance: var.sqrt(),
        matched_count: dists.len(),
        failed: false,
    }
}

/// Parses `x y z [radius]` lines (`#` comments); a missing radius takes
/// `default_radius`.
pub fn parse_spheres(text: &str, default_radius: f64) -> Result<Vec<CheckSphere>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            location: format!("line {}", n + 1),
            message,
        };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad number `{w}`"))))
            .collect::<Result<_>>()?;
        let radius = match v.len() {
            3 => default_radius,
            4 => v[3],
            k => return Err(err(format!("expected 3 or 4 numbers, got {k}"))),
        };
        out.push(CheckSphere::new(Point3::new(v[0], v[1], v[2]), radius).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn format_spheres(spheres: &[CheckSphere]) -> String {
    let mut s = String::new();
    for sp in spheres {
        let _ = writeln!(s, "{} {} {} {}", sp.center[0], sp.center[1], sp.center[2], sp.radius);
    }
    s
}

/// One detector/descriptor combination of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub detector: String,
    pub descriptor: String,
    /// Extra grid parameters of this row (`key=value;...`), empty by default.
    pub params: String,
    pub pref_keypoints: usize,
    pub preg_keypoints: usize,
    /// Alignment time in seconds.
    pub time_s: f64,
    pub converged: bool,
    pub spheres: Vec<SphereAccuracy>,
    /// Set when the combination raised an error.
    pub error: Option<String>,
}

impl BenchmarkRun {
    pub fn from_alignment(
        detector: &str,
        descriptor: &str,
        params: &str,
        keypoints: (usize, usize),
        alignment: &AlignmentResult,
        time_s: f64,
        spheres: Vec<SphereAccuracy>,
    ) -> Self {
        Self {
            detector: detector.to_string(),
            descriptor: descriptor.to_string(),
            params: params.to_string(),
            pref_keypoints: keypoints.0,
            preg_keypoints: keypoints.1,
            time_s,
            converged: alignment.converged,
            spheres,
            error: None,
        }
    }

    pub fn from_error(detector: &str, descriptor: &str, params: &str, error: String) -> Self {
        Self {
            detector: detector.to_string(),
            descriptor: descriptor.to_string(),
            params: params.to_string(),
            pref_keypoints: 0,
            preg_keypoints: 0,
            time_s: 0.0,
            converged: false,
            spheres: Vec::new(),
            error: Some(error),
        }
    }

    /// Not converged, errored, or every check sphere failed.
    pub fn is_failed(&self) -> bool {
        self.error.is_some() || !self.converged || (!self.spheres.is_empty() && self.spheres.iter().all(|s| s.failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub runs: Vec<BenchmarkRun>,
}

pub const FAILED: &str = "F";

impl BenchmarkReport {
    pub fn new(runs: Vec<BenchmarkRun>) -> Self {
        Self { runs }
    }

    /// Keypoint counts and alignment time per combination, `F` for failures.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("detector,descriptor,params,pref_keypoints,preg_keypoints,time_s\n");
        for r in &self.runs {
            let time = if r.is_failed() {
                FAILED.to_string()
            } else {
                format!("{:.3}", r.time_s)
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.detector,
                r.descriptor,
                csv_field(&r.params),
                r.pref_keypoints,
                r.preg_keypoints,
                time
            );
        }
        s
    }

    /// Mean and SD per sphere (in sphere order) for every combination.
    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("detector,descriptor,params,sphere,mean_m,sd_m\n");
        for r in &self.runs {
            for (i, a) in r.spheres.iter().enumerate() {
                let (mean, sd) = if a.failed || r.is_failed() {
                    (FAILED.to_string(), FAILED.to_string())
                } else {
                    (format!("{:.3}", a.mean_distance), format!("{:.3}", a.sd_distance))
                };
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.detector,
                    r.descriptor,
                    csv_field(&r.params),
                    i + 1,
                    mean,
                    sd
                );
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
