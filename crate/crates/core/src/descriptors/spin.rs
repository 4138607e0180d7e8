use crate::cloud::{is_sentinel_normal, PointCloud};
use crate::detectors::Keypoint;
use crate::error::{check_radius, Error, Result};
use crate::index::SpatialIndex;
use crate::par;

use super::{anchor, check_cloud, normalize, DescriptorKind, FeatureVector, SpinParams};

/// Splits a continuous bin coordinate between the two nearest bin centers,
/// clamping at the edges.
fn split(x: f64, width: f64, bins: usize) -> [(usize, f64); 2] {
    let a = x / width - 0.5;
    let i0 = a.floor();
    let t = a - i0;
    let clamp = |i: f64| (i.max(0.0) as usize).min(bins - 1);
    [(clamp(i0), 1.0 - t), (clamp(i0 + 1.0), t)]
}

/// Spin images: neighbors within `radius` accumulated by `α` (distance from
/// the normal line) and `β` (signed height along the normal) with bilinear
/// weights on bin centers, flattened radial-major and normalized to sum 1.
pub fn describe_spin(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[Keypoint],
    radius: f64,
    params: &SpinParams,
) -> Result<Vec<FeatureVector>> {
    let normals = cloud.normals().ok_or(Error::MissingNormals)?;
    check_radius(radius)?;
    check_cloud(cloud, index)?;
    let (nr, ne) = (params.radial_bins, params.elevation_bins);
    if nr < 2 || ne < 2 {
        return Err(Error::InvalidParameter("spin images need at least 2 bins per axis".into()));
    }
    let pts = cloud.points();
    let (wa, wb) = (radius / nr as f64, 2.0 * radius / ne as f64);
    let images = par::map_range(keypoints.len(), |k| {
        let a = anchor(index, &keypoints[k]);
        let n = normals[a];
        if is_sentinel_normal(&n) {
            return None;
        }
        let p = keypoints[k].position;
        let mut grid = vec![0.0; nr * ne];
        let mut nbrs = Vec::new();
        index.collect_within(&p, radius, &mut nbrs);
        nbrs.sort_unstable();
        for j in nbrs {
            if j == a {
                continue;
            }
            let d = pts[j] - p;
            let beta = d.dot(&n);
            let alpha = (d - n * beta).norm();
            for (i, wi) in split(alpha, wa, nr) {
                for (e, we) in split(beta + radius, wb, ne) {
                    grid[i * ne + e] += wi * we;
                }
            }
        }
        normalize(&mut grid).then_some(grid)
    });
    images
        .into_iter()
        .enumerate()
        .filter_map(|(k, g)| g.map(|g| FeatureVector::new(DescriptorKind::Spin, k, g, nr * ne)))
        .collect()
}
