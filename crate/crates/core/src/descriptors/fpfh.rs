use std::f64::consts::PI;

use crate::cloud::{is_sentinel_normal, PointCloud, Vector3};
use crate::detectors::Keypoint;
use crate::error::{check_radius, Error, Result};
use crate::index::SpatialIndex;
use crate::par;

use super::{anchor, check_cloud, normalize, DescriptorKind, FeatureVector};

pub const FPFH_BINS: usize = 11;
const MIN_SUPPORT: usize = 5;

/// Darboux-frame pair features `(θ, α, φ)` between two oriented points:
/// `θ ∈ [−π, π]` is the normal twist about the frame's `w` axis, `α ∈ [−1, 1]`
/// the second normal's component along `v`, and `φ ∈ [−1, 1]` the cosine
/// between the source normal and the connecting line. The source is the
/// point whose normal is closer to the connecting line. Coincident points or
/// normals parallel to the line give zeros.
pub fn pair_features(p1: &Vector3, n1: &Vector3, p2: &Vector3, n2: &Vector3) -> [f64; 3] {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return [0.0; 3];
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let (u, n_other, phi) = if a1.abs().clamp(0.0, 1.0).acos() > a2.abs().clamp(0.0, 1.0).acos() {
        dp = -dp;
        (*n2, *n1, -a2)
    } else {
        (*n1, *n2, a1)
    };
    let v = dp.cross(&u);
    let vn = v.norm();
    if vn == 0.0 {
        return [0.0; 3];
    }
    let v = v / vn;
    let w = u.cross(&v);
    let alpha = v.dot(&n_other);
    let theta = w.dot(&n_other).atan2(u.dot(&n_other));
    [theta, alpha, phi]
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (FPFH_BINS as f64 * (value - lo) / (hi - lo)).floor();
    (b.max(0.0) as usize).min(FPFH_BINS - 1)
}

/// Simplified point feature histogram: α, φ, θ sub-histograms, each summing
/// to 1, over the valid-normal neighbors of one point.
fn spfh(pts: &[crate::cloud::Point3], normals: &[Vector3], nbrs: &[usize], i: usize) -> [f64; 3 * FPFH_BINS] {
    let mut h = [0.0; 3 * FPFH_BINS];
    let (p, n) = (pts[i].coords, normals[i]);
    for &j in nbrs {
        if j == i {
            continue;
        }
        let [theta, alpha, phi] = pair_features(&p, &n, &pts[j].coords, &normals[j]);
        h[bin(alpha, -1.0, 1.0)] += 1.0;
        h[FPFH_BINS + bin(phi, -1.0, 1.0)] += 1.0;
        h[2 * FPFH_BINS + bin(theta, -PI, PI)] += 1.0;
    }
    for sub in h.chunks_mut(FPFH_BINS) {
        normalize(sub);
    }
    h
}

fn valid_neighbors(index: &SpatialIndex, normals: &[Vector3], i: usize, radius: f64) -> Vec<usize> {
    let mut nbrs = Vec::new();
    index.collect_within(&index.points()[i], radius, &mut nbrs);
    nbrs.retain(|&j| !is_sentinel_normal(&normals[j]));
    nbrs.sort_unstable();
    nbrs
}

/// Fast point feature histograms.
///
/// `FPFH(p) = SPFH(p) + (1/k) Σ (1/ωᵢ) SPFH(pᵢ)` over the `k` neighbors within
/// `radius` (ωᵢ their distance), each 11-bin sub-histogram renormalized to
/// sum 1, output as `α | φ | θ`. Keypoints with a sentinel normal or fewer
/// than 5 neighbors are dropped.
pub fn describe_fpfh(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[Keypoint],
    radius: f64,
) -> Result<Vec<FeatureVector>> {
    let normals = cloud.normals().ok_or(Error::MissingNormals)?;
    check_radius(radius)?;
    check_cloud(cloud, index)?;
    if keypoints.is_empty() {
        return Ok(Vec::new());
    }
    let pts = cloud.points();

    let anchors: Vec<usize> = keypoints.iter().map(|k| anchor(index, k)).collect();
    let rings: Vec<Vec<usize>> = par::map_slice(&anchors, |&a| {
        if is_sentinel_normal(&normals[a]) {
            Vec::new()
        } else {
            valid_neighbors(index, normals, a, radius)
        }
    });

    // SPFH is needed for every keypoint and every point of its first ring.
    let mut slot = vec![u32::MAX; pts.len()];
    let mut needed = Vec::new();
    for (ring, &a) in rings.iter().zip(&anchors) {
        if ring.len() <= MIN_SUPPORT {
            continue;
        }
        for &j in ring.iter().chain(std::iter::once(&a)) {
            if slot[j] == u32::MAX {
                slot[j] = needed.len() as u32;
                needed.push(j);
            }
        }
    }
    let spfhs: Vec<[f64; 3 * FPFH_BINS]> = par::map_slice(&needed, |&j| {
        spfh(pts, normals, &valid_neighbors(index, normals, j, radius), j)
    });

    let mut out = Vec::new();
    for (kp, (ring, &a)) in rings.iter().zip(&anchors).enumerate() {
        // the ring includes the anchor itself
        let k = ring.len().saturating_sub(1);
        if k < MIN_SUPPORT {
            continue;
        }
        let mut h = spfhs[slot[a] as usize];
        let mut acc = [0.0; 3 * FPFH_BINS];
        for &j in ring {
            let d = (pts[j] - pts[a]).norm();
            if j == a || d == 0.0 {
                continue;
            }
            let s = &spfhs[slot[j] as usize];
            for (x, v) in acc.iter_mut().zip(s) {
                *x += v / d;
            }
        }
        for (x, v) in h.iter_mut().zip(acc) {
            *x += v / k as f64;
        }
        for sub in h.chunks_mut(FPFH_BINS) {
            normalize(sub);
        }
        out.push(FeatureVector::new(DescriptorKind::Fpfh, kp, h.to_vec(), 3 * FPFH_BINS)?);
    }
    Ok(out)
}
