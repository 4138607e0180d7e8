//! Versioned JSON run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::SphereAccuracy;
use crate::pipeline::{RegistrationOutput, StageTimings};

pub const REPORT_SCHEMA: &str = "regpipe.run-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    /// Row-major homogeneous matrix mapping the registered cloud onto the
    /// reference.
    pub transform: [[f64; 4]; 4],
    pub inlier_count: usize,
    pub inlier_fraction: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub samples_accepted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// Converged; spheres, when given, were not all failed.
    Ok,
    /// Failed alignment, shown as `F` in the tables.
    Failed,
    /// A stage raised an error.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub version: u32,
    /// Every configuration key with its effective value.
    pub config: BTreeMap<String, String>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub pref_keypoints: usize,
    pub preg_keypoints: usize,
    pub timings: StageTimings,
    pub alignment: Option<AlignmentSummary>,
    pub spheres: Vec<SphereAccuracy>,
}

impl RunReport {
    fn base(config: &PipelineConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            version: REPORT_VERSION,
            config: config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            status: RunStatus::Error,
            error: None,
            pref_keypoints: 0,
            preg_keypoints: 0,
            timings: StageTimings::default(),
            alignment: None,
            spheres: Vec::new(),
        }
    }

    pub fn from_run(config: &PipelineConfig, out: &RegistrationOutput, spheres: Vec<SphereAccuracy>) -> Self {
        let a = &out.alignment;
        let all_failed = !spheres.is_empty() && spheres.iter().all(|s| s.failed);
        let status = if a.converged && !all_failed {
            RunStatus::Ok
        } else {
            RunStatus::Failed
        };
        Self {
            status,
            pref_keypoints: out.pref_keypoints,
            preg_keypoints: out.preg_keypoints,
            timings: if config.include_timings {
                out.timings
            } else {
                StageTimings::default()
            },
            alignment: Some(AlignmentSummary {
                transform: a.transform.to_homogeneous(),
                inlier_count: a.inlier_count,
                inlier_fraction: a.inlier_fraction,
                converged: a.converged,
                iterations_used: a.iterations_used,
                samples_accepted: a.samples_accepted,
            }),
            spheres,
            ..Self::base(config)
        }
    }

    /// Degenerate inputs give `Failed`, everything else `Error`.
    pub fn from_error(config: &PipelineConfig, error: &Error) -> Self {
        Self {
            status: if error.is_alignment_failure() {
                RunStatus::Failed
            } else {
                RunStatus::Error
            },
            error: Some(error.to_string()),
            ..Self::base(config)
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if r.schema != REPORT_SCHEMA || r.version != REPORT_VERSION {
            return Err(Error::Parse {
                location: "schema".into(),
                message: format!("unsupported report {} v{}", r.schema, r.version),
            });
        }
        Ok(r)
    }
}
