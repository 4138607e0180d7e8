use std::fmt;
use std::str::FromStr;

use crate::descriptors::FeatureVector;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Keypoint id on the registered (source) side.
    pub src_keypoint: usize,
    /// Keypoint id on the reference (destination) side.
    pub dst_keypoint: usize,
    pub feature_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    L2,
    L1,
    ChiSquared,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "L2",
            Metric::L1 => "L1",
            Metric::ChiSquared => "CHI2",
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            Metric::L2 => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::L1 => pairs.map(|(x, y)| (x - y).abs()).sum(),
            Metric::ChiSquared => pairs
                .filter(|(x, y)| *x + *y > 0.0)
                .map(|(x, y)| (x - y) * (x - y) / (x + y))
                .sum(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L2" => Ok(Metric::L2),
            "L1" => Ok(Metric::L1),
            "CHI2" | "CHISQUARED" | "CHI_SQUARED" => Ok(Metric::ChiSquared),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

/// The `k` nearest destination descriptors of every source descriptor,
/// ascending by distance with ties on the lower destination position.
/// Rows are computed one at a time, so the full distance matrix never exists.
pub fn match_features(
    src: &[FeatureVector],
    dst: &[FeatureVector],
    k: usize,
    metric: Metric,
) -> Result<Vec<Correspondence>> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let method = src[0].method;
    if let Some(bad) = src.iter().chain(dst).find(|f| f.method != method) {
        return Err(Error::MethodMismatch(method.name().into(), bad.method.name().into()));
    }
    let k = k.min(dst.len());
    let rows = par::map_slice(src, |s| {
        let mut row: Vec<(f64, usize)> = dst
            .iter()
            .enumerate()
            .map(|(j, d)| (metric.distance(s.values(), d.values()), j))
            .collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < row.len() {
            row.select_nth_unstable_by(k - 1, by);
            row.truncate(k);
        }
        row.sort_by(by);
        row.into_iter()
            .map(|(d, j)| Correspondence {
                src_keypoint: s.keypoint,
                dst_keypoint: dst[j].keypoint,
                feature_distance: d,
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}
