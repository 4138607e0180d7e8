use crate::cloud::{Matrix3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::par;
use crate::surface::sorted_eigen;

use super::{suppress_non_maxima, DetectorKind, DetectorParams, Keypoint};

/// Relative floor on `λ3/λ1` below which a neighborhood counts as planar.
const PLANAR_FLOOR: f64 = 1e-9;

/// Intrinsic shape signatures.
///
/// The scatter matrix about each point weights every neighbor by the inverse
/// of its own neighbor count, which evens out scan-density differences. A
/// point is salient when `λ2/λ1 < γ21` and `λ3/λ2 < γ32`; its saliency is `λ3`.
pub fn detect_iss(cloud: &PointCloud, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    check_params(params)?;
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = SpatialIndex::new(cloud.points())?;
    detect_iss_with_index(cloud, &index, params)
}

fn check_params(params: &DetectorParams) -> Result<()> {
    params.check_radii()?;
    let (g21, g32) = (params.iss.gamma21, params.iss.gamma32);
    if !(g21 > 0.0 && g21 < 1.0 && g32 > 0.0 && g32 < 1.0) {
        return Err(Error::InvalidGamma(g21, g32));
    }
    Ok(())
}

pub fn detect_iss_with_index(
    cloud: &PointCloud,
    index: &SpatialIndex,
    params: &DetectorParams,
) -> Result<Vec<Keypoint>> {
    check_params(params)?;
    let pts = cloud.points();
    let radius = params.support_radius;
    let counts: Vec<usize> = par::map_range(pts.len(), |i| index.count_within(&pts[i], radius));

    // (λ3 score, passes ratio tests)
    let eval: Vec<(f64, bool)> = par::map_range(pts.len(), |i| {
        if counts[i] < params.iss.min_neighbors.max(3) {
            return (f64::NEG_INFINITY, false);
        }
        let mut scatter = Matrix3::zeros();
        let mut weight_sum = 0.0;
        index.for_each_within(&pts[i], radius, |j, _| {
            let w = 1.0 / counts[j] as f64;
            let d = pts[j] - pts[i];
            scatter += d * d.transpose() * w;
            weight_sum += w;
        });
        scatter /= weight_sum;
        let ([l1, l2, l3], _) = sorted_eigen(scatter);
        let salient = l1 > 0.0
            && l2 > 0.0
            && l3 > PLANAR_FLOOR * l1
            && l2 / l1 < params.iss.gamma21
            && l3 / l2 < params.iss.gamma32;
        (l3, salient)
    });
    let scores: Vec<f64> = eval.iter().map(|e| e.0).collect();
    let candidates: Vec<usize> = (0..pts.len()).filter(|&i| eval[i].1).collect();
    let kept = suppress_non_maxima(index, &scores, &candidates, params.non_max_radius);
    Ok(kept
        .into_iter()
        .map(|i| Keypoint {
            position: pts[i],
            source_index: Some(i),
            saliency: scores[i],
            scale: params.support_radius,
            detector: DetectorKind::Iss,
        })
        .collect())
}
