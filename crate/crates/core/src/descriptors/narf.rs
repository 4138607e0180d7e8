use std::f64::consts::{FRAC_2_PI, TAU};

use crate::cloud::{Point3, Vector3};
use crate::detectors::{window_half_size, Keypoint};
use crate::error::{check_radius, Error, Result};
use crate::par;
use crate::range_image::RangeImage;
use crate::surface::{orient_toward, LocalSurfaceStats};

use super::{DescriptorKind, FeatureVector};

pub const NARF_BEAMS: usize = 36;
pub const NARF_RINGS: usize = 10;
/// Share of the support radius used to estimate the patch normal.
const NORMAL_FRACTION: f64 = 0.25;
/// Beam responses closer than this count as tied when picking the orientation.
const ORIENTATION_TIE: f64 = 1e-9;

/// Normal-aligned radial feature descriptors.
///
/// The image window around the keypoint is expressed in a frame whose `z` is
/// the surface normal facing the camera (estimated within a quarter of the
/// support radius) and whose `x` is the camera `x` axis projected onto the
/// tangent plane. Points within `support_radius` of the normal axis are
/// rendered, heights clamped to `±support_radius`, into 36 angular sectors ×
/// 10 radial cells holding the highest point of each cell; background seen
/// past a border thus shows up as a full-depth drop. Each beam's raw value is the mean absolute
/// height change walking outward from the keypoint through its filled cells,
/// weighted `2 − 2r/R` by cell radius,
/// mapped to `[0, 1)` by `(2/π)·atan(raw / cell)`. The vector is rotated so
/// the strongest beam comes first.
///
/// Keypoints whose support window leaves the image are dropped.
pub fn describe_narf(img: &RangeImage, keypoints: &[Keypoint], support_radius: f64) -> Result<Vec<FeatureVector>> {
    check_radius(support_radius)?;
    let out = par::map_range(keypoints.len(), |k| describe_one(img, &keypoints[k], support_radius));
    let mut vectors = Vec::new();
    for (k, r) in out.into_iter().enumerate() {
        match r {
            Ok(values) => vectors.push(FeatureVector::new(DescriptorKind::Narf, k, values, NARF_BEAMS)?),
            Err(Error::PatchOutOfImage) | Err(Error::InsufficientNeighbors { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(vectors)
}

fn keypoint_pixel(img: &RangeImage, kp: &Keypoint) -> Option<(usize, usize)> {
    if let Some(f) = kp.source_index.and_then(|s| img.filled().get(s)) {
        if f.point == kp.position {
            return Some(img.col_row(f.pixel));
        }
    }
    img.params().pixel_of(&kp.position)
}

/// Every filled point of the keypoint's image window.
fn window_points(img: &RangeImage, kp: &Keypoint, radius: f64) -> Result<Vec<Point3>> {
    let (col, row) = keypoint_pixel(img, kp).ok_or(Error::PatchOutOfImage)?;
    let range = (kp.position - img.params().position).norm();
    let res = img.params().angular_resolution_deg.to_radians();
    let half = window_half_size(range, radius, res);
    if col < half || row < half || col + half >= img.width() || row + half >= img.height() {
        return Err(Error::PatchOutOfImage);
    }
    let mut pts = Vec::new();
    for r in row - half..=row + half {
        for c in col - half..=col + half {
            if let Some(p) = img.point_at(img.pixel(c, r)) {
                pts.push(p);
            }
        }
    }
    Ok(pts)
}

fn describe_one(img: &RangeImage, kp: &Keypoint, radius: f64) -> Result<Vec<f64>> {
    let window = window_points(img, kp, radius)?;
    let pts: Vec<Point3> = window.iter().copied().filter(|p| (p - kp.position).norm() <= radius).collect();
    // The normal comes from the inner part of the support so that a depth
    // step near the keypoint does not tilt the patch.
    let inner = radius * NORMAL_FRACTION;
    let core: Vec<&Point3> = pts.iter().filter(|p| (*p - kp.position).norm() <= inner).collect();
    let stats = LocalSurfaceStats::from_points(core.iter().copied())
        .or_else(|_| LocalSurfaceStats::from_points(&pts))?;
    let cam = img.params();
    let z = orient_toward(stats.normal(), &(cam.position - kp.position));
    let cam_x = cam.orientation.column(0).into_owned();
    let cam_y = cam.orientation.column(1).into_owned();
    let mut x = cam_x - z * cam_x.dot(&z);
    if x.norm() < 1e-6 {
        x = cam_y - z * cam_y.dot(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);

    let cell = radius / NARF_RINGS as f64;
    let mut heights = [[f64::NEG_INFINITY; NARF_RINGS]; NARF_BEAMS];
    for p in &window {
        let d: Vector3 = p - kp.position;
        let (lx, ly) = (d.dot(&x), d.dot(&y));
        let h = d.dot(&z).clamp(-radius, radius);
        let r = lx.hypot(ly);
        if r == 0.0 || r >= radius {
            continue;
        }
        let angle = ly.atan2(lx).rem_euclid(TAU);
        let sector = ((angle / TAU * NARF_BEAMS as f64) as usize).min(NARF_BEAMS - 1);
        let ring = ((r / cell) as usize).min(NARF_RINGS - 1);
        let c = &mut heights[sector][ring];
        *c = c.max(h);
    }

    let beams: Vec<f64> = heights
        .iter()
        .map(|cells| {
            let mut prev = 0.0;
            let (mut total, mut weights) = (0.0, 0.0);
            for (ring, &h) in cells.iter().enumerate().filter(|(_, h)| h.is_finite()) {
                // changes near the keypoint count more
                let w = 2.0 - 2.0 * (ring as f64 + 0.5) / NARF_RINGS as f64;
                total += w * (h - prev).abs();
                weights += w;
                prev = h;
            }
            if weights == 0.0 {
                0.0
            } else {
                FRAC_2_PI * (total / weights / cell).atan()
            }
        })
        .collect();

    let mut best = 0;
    for (i, &v) in beams.iter().enumerate() {
        if v > beams[best] + ORIENTATION_TIE {
            best = i;
        }
    }
    Ok((0..NARF_BEAMS).map(|i| beams[(i + best) % NARF_BEAMS]).collect())
}
