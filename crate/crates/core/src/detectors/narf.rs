use crate::cloud::{Matrix3, Point3, Vector3};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::par;
use crate::range_image::{BorderClass, RangeImage};
use crate::surface::{orient_toward, sorted_eigen};

use super::{suppress_non_maxima, DetectorKind, DetectorParams, Keypoint};

/// Half-size of the small window used for per-pixel normals and directions.
const LOCAL_HALF: usize = 2;
/// Fraction of the support radius a neighbor's range may differ by and still
/// count as the same surface.
const RANGE_GATE: f64 = 0.25;
/// Curvature magnitudes (sine of normal spread) mapped linearly to weights 0..1.
const CURVATURE_FLOOR: f64 = 0.05;
const CURVATURE_SPAN: f64 = 0.45;
/// Target samples per window side when summing the direction field.
const SAMPLES_PER_SIDE: usize = 8;
/// Minimum effective weight normalizing the surface-change measure.
const MIN_DIRECTION_WEIGHT: f64 = 3.0;

/// Pixel half-size of a window certain to contain every pixel whose point is
/// within `radius` (3D) of a point at `range`.
pub(crate) fn window_half_size(range: f64, radius: f64, resolution_rad: f64) -> usize {
    if range <= radius {
        return usize::MAX / 4;
    }
    (radius / ((range - radius) * resolution_rad)).ceil() as usize + 1
}

/// Pixels of the clamped square window of half-size `half` around `(col, row)`.
fn window(
    img: &RangeImage,
    col: usize,
    row: usize,
    half: usize,
    stride: usize,
) -> impl Iterator<Item = usize> + '_ {
    let (w, h) = (img.width(), img.height());
    let c0 = col.saturating_sub(half);
    let c1 = col.saturating_add(half).min(w - 1);
    let r0 = row.saturating_sub(half);
    let r1 = row.saturating_add(half).min(h - 1);
    (r0..=r1)
        .step_by(stride)
        .flat_map(move |r| (c0..=c1).step_by(stride).map(move |c| r * w + c))
}

/// Interest points on a bordered range image.
///
/// Each filled pixel scores `(wb·b + ws·s) / (wb + ws)` where `b` is the
/// proximity `1 − d/R` to the nearest object-border point within the support
/// radius `R`, and `s ∈ [0, 1]` is the dispersion of the dominant local
/// directions around the pixel: border tangents on object borders, principal
/// curvature directions elsewhere, compared as doubled angles in the image
/// plane. Shadow-border and veil pixels never become keypoints.
///
/// `source_index` of a NARF keypoint is its filled-pixel ordinal, i.e. its
/// index in `to_point_cloud(img)`.
pub fn detect_narf(img: &RangeImage, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    let border = img.border_classes().ok_or(Error::BordersMissing)?;
    params.check_radii()?;
    let np = &params.narf;
    if !(np.border_weight >= 0.0 && np.surface_weight >= 0.0)
        || !(np.border_weight + np.surface_weight > 0.0)
    {
        return Err(Error::InvalidParameter(
            "NARF score weights must be non-negative with a positive sum".into(),
        ));
    }
    let filled = img.filled();
    if filled.is_empty() {
        return Ok(Vec::new());
    }
    let radius = params.support_radius;
    let res = img.params().angular_resolution_deg.to_radians();
    let n_px = img.pixel_count();
    let excluded = |px: usize| matches!(border[px], BorderClass::ShadowBorder | BorderClass::Veil);

    let mut proximity = vec![0.0f64; n_px];
    for f in filled.iter().filter(|f| border[f.pixel] == BorderClass::ObjectBorder) {
        let (col, row) = img.col_row(f.pixel);
        let half = window_half_size(f.range, radius, res);
        for q in window(img, col, row, half, 1) {
            if let Some(p) = img.point_at(q) {
                let d = (p - f.point).norm();
                if d <= radius {
                    proximity[q] = proximity[q].max(1.0 - d / radius);
                }
            }
        }
    }

    let (wb, ws) = (np.border_weight, np.surface_weight);
    let wsum = wb + ws;
    // Surface change can only lift a pixel above threshold where this bound
    // allows it, so it is evaluated nowhere else.
    let needs_change: Vec<bool> = (0..n_px)
        .map(|px| img.is_filled(px) && !excluded(px) && (wb * proximity[px] + ws) / wsum > np.threshold)
        .collect();
    let max_half = filled
        .iter()
        .filter(|f| needs_change[f.pixel])
        .map(|f| window_half_size(f.range, radius, res))
        .max();

    let mut change = vec![0.0f64; n_px];
    if let Some(max_half) = max_half {
        let dir_mask = dilate(&needs_change, img.width(), img.height(), max_half);
        let normal_mask = dilate(&dir_mask, img.width(), img.height(), LOCAL_HALF);
        let normals = pixel_normals(img, &normal_mask, radius);
        let directions = direction_field(img, border, &dir_mask, &normals, radius);
        let targets: Vec<usize> = (0..n_px).filter(|&px| needs_change[px]).collect();
        let values = par::map_slice(&targets, |&px| {
            surface_change(img, &directions, px, radius, res)
        });
        for (px, v) in targets.into_iter().zip(values) {
            change[px] = v;
        }
    }

    let scores: Vec<f64> = filled
        .iter()
        .map(|f| {
            if excluded(f.pixel) {
                f64::NEG_INFINITY
            } else {
                (wb * proximity[f.pixel] + ws * change[f.pixel]) / wsum
            }
        })
        .collect();
    let candidates: Vec<usize> = (0..filled.len())
        .filter(|&s| scores[s] > np.threshold)
        .collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let pts: Vec<Point3> = filled.iter().map(|f| f.point).collect();
    let index = SpatialIndex::new(&pts)?;
    let kept = suppress_non_maxima(&index, &scores, &candidates, params.non_max_radius);
    Ok(kept
        .into_iter()
        .map(|s| Keypoint {
            position: pts[s],
            source_index: Some(s),
            saliency: scores[s],
            scale: radius,
            detector: DetectorKind::Narf,
        })
        .collect())
}

/// Binary dilation by a square of half-size `half`, as two 1D passes.
fn dilate(mask: &[bool], w: usize, h: usize, half: usize) -> Vec<bool> {
    let pass = |src: &[bool], len: usize, lines: usize, at: &dyn Fn(usize, usize) -> usize| {
        let mut out = vec![false; src.len()];
        for line in 0..lines {
            let mut last_set: Option<usize> = None;
            let mut next_set = (0..len).find(|&i| src[at(line, i)]);
            for i in 0..len {
                if src[at(line, i)] {
                    last_set = Some(i);
                }
                if next_set.is_some_and(|n| n < i) {
                    next_set = (i..len).find(|&j| src[at(line, j)]);
                }
                let near_prev = last_set.is_some_and(|l| i - l <= half);
                let near_next = next_set.is_some_and(|n| n - i <= half);
                out[at(line, i)] = near_prev || near_next;
            }
        }
        out
    };
    let rows = pass(mask, w, h, &|r, c| r * w + c);
    pass(&rows, h, w, &|c, r| r * w + c)
}

/// Normals from the points of a small window on the same surface, oriented
/// toward the camera. Zero where unmasked or unsupported.
fn pixel_normals(img: &RangeImage, mask: &[bool], radius: f64) -> Vec<Vector3> {
    let cam = img.params().position;
    par::map_range(img.pixel_count(), |px| {
        if !mask[px] || !img.is_filled(px) {
            return Vector3::zeros();
        }
        let (col, row) = img.col_row(px);
        let r0 = img.range(px);
        let pts: Vec<Point3> = window(img, col, row, LOCAL_HALF, 1)
            .filter(|&q| img.is_filled(q) && (img.range(q) - r0).abs() <= RANGE_GATE * radius)
            .filter_map(|q| img.point_at(q))
            .collect();
        match crate::surface::LocalSurfaceStats::from_points(&pts) {
            Ok(stats) if stats.eigenvalues[1] > 0.0 => {
                let p = img.point_at(px).expect("filled pixel");
                orient_toward(stats.normal(), &(cam - p))
            }
            _ => Vector3::zeros(),
        }
    })
}

/// Weighted doubled-angle direction `(w·cos 2θ, w·sin 2θ, w)` per pixel in
/// the camera image plane.
fn direction_field(
    img: &RangeImage,
    border: &[BorderClass],
    mask: &[bool],
    normals: &[Vector3],
    radius: f64,
) -> Vec<[f64; 3]> {
    let rt = img.params().orientation.transpose();
    par::map_range(img.pixel_count(), |px| {
        if !mask[px] || !img.is_filled(px) {
            return [0.0; 3];
        }
        let (col, row) = img.col_row(px);
        if border[px] == BorderClass::ObjectBorder {
            let xy: Vec<(f64, f64)> = window(img, col, row, LOCAL_HALF, 1)
                .filter(|&q| border[q] == BorderClass::ObjectBorder)
                .filter_map(|q| img.point_at(q))
                .map(|p| {
                    let c = rt * p.coords;
                    (c.x, c.y)
                })
                .collect();
            if xy.len() < 2 {
                return [0.0; 3];
            }
            let n = xy.len() as f64;
            let (mx, my) = xy.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for &(x, y) in &xy {
                sxx += (x - mx) * (x - mx);
                syy += (y - my) * (y - my);
                sxy += (x - mx) * (y - my);
            }
            let diff = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
            let l1 = 0.5 * (sxx + syy + diff);
            if !(l1 > 0.0) || diff == 0.0 {
                return [0.0; 3];
            }
            let weight = diff / l1;
            return [weight * (sxx - syy) / diff, weight * 2.0 * sxy / diff, weight];
        }
        let n0 = normals[px];
        if n0 == Vector3::zeros() {
            return [0.0; 3];
        }
        let r0 = img.range(px);
        let mut cov = Matrix3::zeros();
        let mut m = 0usize;
        for q in window(img, col, row, LOCAL_HALF, 1) {
            let nq = normals[q];
            if q == px || nq == Vector3::zeros() || (img.range(q) - r0).abs() > RANGE_GATE * radius {
                continue;
            }
            let t = nq - n0 * nq.dot(&n0);
            cov += t * t.transpose();
            m += 1;
        }
        if m < 2 {
            return [0.0; 3];
        }
        let ([l1, _, _], vecs) = sorted_eigen(cov / m as f64);
        let weight = ((l1.sqrt() - CURVATURE_FLOOR) / CURVATURE_SPAN).clamp(0.0, 1.0);
        if weight == 0.0 {
            return [0.0; 3];
        }
        let v = rt * vecs[0];
        let planar = v.x * v.x + v.y * v.y;
        [
            weight * (v.x * v.x - v.y * v.y),
            weight * 2.0 * v.x * v.y,
            weight * planar,
        ]
    })
}

/// `(W − |Σ w·d|) / max(W, 3)` over the directions within the support radius.
fn surface_change(img: &RangeImage, dirs: &[[f64; 3]], px: usize, radius: f64, res: f64) -> f64 {
    let p = img.point_at(px).expect("filled pixel");
    let (col, row) = img.col_row(px);
    let half = window_half_size(img.range(px), radius, res);
    let stride = (2 * half + 1).div_ceil(SAMPLES_PER_SIDE).max(1);
    let cell = (stride * stride) as f64;
    let (mut zx, mut zy, mut wsum) = (0.0, 0.0, 0.0);
    for q in window(img, col, row, half, stride) {
        let d = dirs[q];
        if d[2] == 0.0 {
            continue;
        }
        if let Some(pq) = img.point_at(q) {
            if (pq - p).norm() <= radius {
                zx += d[0];
                zy += d[1];
                wsum += d[2];
            }
        }
    }
    let (zx, zy, wsum) = (zx * cell, zy * cell, wsum * cell);
    ((wsum - (zx * zx + zy * zy).sqrt()) / wsum.max(MIN_DIRECTION_WEIGHT)).clamp(0.0, 1.0)
}
