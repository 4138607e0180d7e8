use std::collections::HashMap;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::par;

use super::{suppress_non_maxima, DetectorKind, DetectorParams, Keypoint};

/// Samples used when estimating the median spacing of large clouds.
const SPACING_SAMPLES: usize = 10_000;

/// Difference-of-Gaussians on the scalar channel.
///
/// Octave `o` works on a Poisson-disk subsample with spacing `s0·2^o`, built
/// greedily in point order from the previous octave's samples. Level `s` of
/// octave `o` has total blur `σ = s0·2^(o + s/S)`; `S + 3` levels give `S + 2`
/// DoG layers and extrema are sought in layers `1..=S`, against every sample
/// within `σ` on the layer itself and the two adjacent layers.
pub fn detect_sift(cloud: &PointCloud, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    if cloud.scalar().is_none() {
        return Err(Error::MissingScalar);
    }
    params.check_radii()?;
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = SpatialIndex::new(cloud.points())?;
    detect_sift_with_index(cloud, &index, params)
}

pub fn detect_sift_with_index(
    cloud: &PointCloud,
    index: &SpatialIndex,
    params: &DetectorParams,
) -> Result<Vec<Keypoint>> {
    let scalar = cloud.scalar().ok_or(Error::MissingScalar)?;
    params.check_radii()?;
    let sp = &params.sift;
    if sp.n_octaves == 0 || sp.scales_per_octave == 0 {
        return Err(Error::InvalidParameter(
            "SIFT needs at least one octave and one scale per octave".into(),
        ));
    }
    let s0 = match sp.min_scale {
        Some(s) => s,
        None => median_spacing(index).ok_or(Error::NonPositiveScale(0.0))?,
    };
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::NonPositiveScale(s0));
    }
    let pts = cloud.points();
    let levels = sp.scales_per_octave;

    // (source index, |DoG|, scale) for every scale-space extremum.
    let mut extrema: Vec<(usize, f64, f64)> = Vec::new();
    let mut members: Vec<usize> = (0..pts.len()).collect();
    let mut base: Vec<f64> = scalar.to_vec();
    let mut base_sigma = 0.0;
    for o in 0..sp.n_octaves {
        let spacing = s0 * 2f64.powi(o as i32);
        let keep = poisson_subsample(pts, &members, spacing);
        if keep.is_empty() {
            break;
        }
        let samples: Vec<usize> = keep.iter().map(|&k| members[k]).collect();
        let values: Vec<f64> = keep.iter().map(|&k| base[k]).collect();
        let sample_pts: Vec<Point3> = samples.iter().map(|&i| pts[i]).collect();
        let oct_index = SpatialIndex::new(&sample_pts)?;

        let sigmas: Vec<f64> = (0..levels + 3)
            .map(|s| spacing * 2f64.powf(s as f64 / levels as f64))
            .collect();
        let smoothed: Vec<Vec<f64>> = sigmas
            .iter()
            .map(|&sigma| {
                let rel = (sigma * sigma - base_sigma * base_sigma).max(0.0).sqrt();
                gaussian_smooth(&oct_index, &values, rel)
            })
            .collect();
        let dog: Vec<Vec<f64>> = smoothed
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect();

        for d in 1..=levels {
            let radius = sigmas[d];
            let found = par::map_range(sample_pts.len(), |i| {
                is_extremum(&oct_index, &dog, d, i, radius)
            });
            for (i, hit) in found.into_iter().enumerate() {
                if hit {
                    let scale = sigmas[d] * 2f64.powf(0.5 / levels as f64);
                    extrema.push((samples[i], dog[d][i].abs(), scale));
                }
            }
        }

        base = smoothed[levels].clone();
        base_sigma = sigmas[levels];
        members = samples;
    }

    if extrema.is_empty() {
        return Ok(Vec::new());
    }
    let ext_pts: Vec<Point3> = extrema.iter().map(|e| pts[e.0]).collect();
    let ext_index = SpatialIndex::new(&ext_pts)?;
    let scores: Vec<f64> = extrema.iter().map(|e| e.1).collect();
    let all: Vec<usize> = (0..extrema.len()).collect();
    let kept = suppress_non_maxima(&ext_index, &scores, &all, params.non_max_radius);
    Ok(kept
        .into_iter()
        .filter(|&e| scores[e] >= sp.min_contrast)
        .map(|e| {
            let (i, contrast, scale) = extrema[e];
            Keypoint {
                position: pts[i],
                source_index: Some(i),
                saliency: contrast,
                scale,
                detector: DetectorKind::Sift,
            }
        })
        .collect())
}

fn is_extremum(index: &SpatialIndex, dog: &[Vec<f64>], d: usize, i: usize, radius: f64) -> bool {
    let v = dog[d][i];
    if v == 0.0 {
        return false;
    }
    let (mut is_max, mut is_min) = (true, true);
    let mut check = |u: f64| {
        if u >= v {
            is_max = false;
        }
        if u <= v {
            is_min = false;
        }
    };
    check(dog[d - 1][i]);
    check(dog[d + 1][i]);
    index.for_each_within(&index.points()[i], radius, |j, _| {
        if j != i {
            check(dog[d - 1][j]);
            check(dog[d][j]);
            check(dog[d + 1][j]);
        }
    });
    is_max || is_min
}

/// Normalized Gaussian-weighted average over neighbors within `3σ`.
fn gaussian_smooth(index: &SpatialIndex, values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let pts = index.points();
    let inv = -0.5 / (sigma * sigma);
    par::map_range(pts.len(), |i| {
        let (mut acc, mut wsum) = (0.0, 0.0);
        index.for_each_within(&pts[i], 3.0 * sigma, |j, d2| {
            let w = (d2 * inv).exp();
            acc += w * values[j];
            wsum += w;
        });
        acc / wsum
    })
}

/// Greedy Poisson-disk subsample of `pts[members]` in member order: a point
/// survives when no earlier survivor lies strictly within `spacing`. Returns
/// positions into `members`.
pub fn poisson_subsample(pts: &[Point3], members: &[usize], spacing: f64) -> Vec<usize> {
    let cell = |p: &Point3| {
        [
            (p.x / spacing).floor() as i64,
            (p.y / spacing).floor() as i64,
            (p.z / spacing).floor() as i64,
        ]
    };
    let s2 = spacing * spacing;
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut keep = Vec::new();
    for (k, &m) in members.iter().enumerate() {
        let p = &pts[m];
        let c = cell(p);
        let mut blocked = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if list.iter().any(|&q| (pts[q] - p).norm_squared() < s2) {
                            blocked = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if !blocked {
            grid.entry(c).or_default().push(m);
            keep.push(k);
        }
    }
    keep
}

/// Median distance from a point to its nearest distinct neighbor, estimated
/// on an evenly strided sample of at most 10 000 points.
pub fn median_spacing(index: &SpatialIndex) -> Option<f64> {
    let pts = index.points();
    if pts.len() < 2 {
        return None;
    }
    let stride = pts.len().div_ceil(SPACING_SAMPLES);
    let sample: Vec<usize> = (0..pts.len()).step_by(stride).collect();
    let mut d: Vec<f64> = par::map_slice(&sample, |&i| {
        index
            .k_nearest(&pts[i], 8)
            .into_iter()
            .map(|(_, dist)| dist)
            .find(|&dist| dist > 0.0)
    })
    .into_iter()
    .flatten()
    .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}
