use crate::cloud::{is_sentinel_normal, Matrix3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::par;
use crate::surface::MIN_NEIGHBORS;

use super::{suppress_non_maxima, DetectorKind, DetectorParams, Keypoint};

/// Harris corners on surface normals.
///
/// `C` is the second-moment matrix `(1/m) Σ n nᵀ` of the neighbor normals and
/// the response is `k + det C − k·(tr C)²`. For unit normals `tr C = 1`, so a
/// plane or a straight edge scores 0 and a trihedral corner scores `1/27`.
pub fn detect_harris(cloud: &PointCloud, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    if cloud.normals().is_none() {
        return Err(Error::MissingNormals);
    }
    params.check_radii()?;
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = SpatialIndex::new(cloud.points())?;
    detect_harris_with_index(cloud, &index, params)
}

pub fn detect_harris_with_index(
    cloud: &PointCloud,
    index: &SpatialIndex,
    params: &DetectorParams,
) -> Result<Vec<Keypoint>> {
    let normals = cloud.normals().ok_or(Error::MissingNormals)?;
    params.check_radii()?;
    let pts = cloud.points();
    let k = params.harris.k;
    let scores: Vec<f64> = par::map_range(pts.len(), |i| {
        if is_sentinel_normal(&normals[i]) {
            return f64::NEG_INFINITY;
        }
        let mut c = Matrix3::zeros();
        let mut m = 0usize;
        index.for_each_within(&pts[i], params.support_radius, |j, _| {
            let n = &normals[j];
            if !is_sentinel_normal(n) {
                c += n * n.transpose();
                m += 1;
            }
        });
        if m < MIN_NEIGHBORS {
            return f64::NEG_INFINITY;
        }
        c /= m as f64;
        let trace = c.trace();
        k + c.determinant() - k * trace * trace
    });
    let candidates: Vec<usize> = (0..pts.len())
        .filter(|&i| scores[i] > params.harris.threshold)
        .collect();
    let kept = suppress_non_maxima(index, &scores, &candidates, params.non_max_radius);
    Ok(kept
        .into_iter()
        .map(|i| Keypoint {
            position: pts[i],
            source_index: Some(i),
            saliency: scores[i],
            scale: params.support_radius,
            detector: DetectorKind::Harris,
        })
        .collect())
}
