mod common;

use common::*;
use regpipe::detectors::{
    detect_harris, detect_iss, detect_narf, detect_sift, DetectorParams, Keypoint,
};
use regpipe::range_image::{camera_for, RangeCameraParams, detect_borders, project};
use regpipe::surface::{compute_sphericity, estimate_normals};
use regpipe::{apply_transform, Error, Point3, PointCloud, RigidTransform, Vector3};

fn params(support: f64, nms: f64) -> DetectorParams {
    DetectorParams {
        support_radius: support,
        non_max_radius: nms,
        ..DetectorParams::default()
    }
}

fn positions(kps: &[Keypoint]) -> Vec<Point3> {
    kps.iter().map(|k| k.position).collect()
}

fn assert_separated(kps: &[Keypoint], radius: f64) {
    for (i, a) in kps.iter().enumerate() {
        for b in &kps[i + 1..] {
            assert!((a.position - b.position).norm() > radius);
        }
    }
}

#[test]
fn harris_plane_has_no_keypoints() {
    let kps = detect_harris(&flat_plane(6.0, 0.1), &params(1.0, 1.0)).unwrap();
    assert!(kps.is_empty());
}

#[test]
fn harris_finds_single_cube_corner() {
    let cloud = cube_corner(3.0, 0.1);
    let kps = detect_harris(&cloud, &params(1.0, 1.0)).unwrap();
    assert_eq!(kps.len(), 1, "{kps:?}");
    assert!(kps[0].position.coords.norm() < 0.2);
    // A trihedral corner tops out at k + 1/27 − k.
    assert!(kps[0].saliency <= 1.0 / 27.0 + 1e-12);
}

#[test]
fn harris_edge_scores_below_corner() {
    let cloud = cube_corner(3.0, 0.1);
    let mut p = params(1.0, 0.05);
    p.harris.threshold = -1.0;
    let kps = detect_harris(&cloud, &p).unwrap();
    let corner = kps
        .iter()
        .filter(|k| k.position.coords.norm() < 0.2)
        .map(|k| k.saliency)
        .fold(f64::NEG_INFINITY, f64::max);
    for k in &kps {
        let q = k.position;
        // midpoint of the floor/x-wall edge, far from the corner
        if q.y > 2.0 && q.x < 0.1 && q.z < 0.1 {
            assert!(k.saliency < corner);
        }
    }
}

#[test]
fn harris_requires_normals() {
    let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
    assert!(matches!(
        detect_harris(&cloud, &DetectorParams::default()),
        Err(Error::MissingNormals)
    ));
    let mut p = DetectorParams::default();
    p.support_radius = 0.0;
    assert!(matches!(
        detect_harris(&flat_plane(1.0, 0.1), &p),
        Err(Error::NonPositiveRadius(_))
    ));
}

#[test]
fn harris_threshold_is_monotone() {
    let cloud = cube_corner(3.0, 0.1);
    let mut last = usize::MAX;
    for t in [-1.0, 0.0, 1e-4, 0.01, 0.03, 0.05] {
        let mut p = params(0.6, 0.5);
        p.harris.threshold = t;
        let n = detect_harris(&cloud, &p).unwrap().len();
        assert!(n <= last);
        last = n;
    }
}

fn blob_on_plane() -> PointCloud {
    let mut pts = grid_plane(-5.0, 5.0, -5.0, 5.0, 0.0, 0.1)
        .into_iter()
        .filter(|p| p.coords.xy().norm() > 1.0)
        .collect::<Vec<_>>();
    // hemisphere of radius 1 on a Fibonacci lattice
    let n = 700;
    for i in 0..n {
        let z = (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
        pts.push(Point3::new(r * phi.cos(), r * phi.sin(), z));
    }
    PointCloud::new(pts).unwrap()
}

#[test]
fn iss_plane_interior_has_no_keypoints() {
    let kps = detect_iss(&flat_plane(8.0, 0.1), &params(0.5, 0.5)).unwrap();
    assert!(kps.is_empty());
}

#[test]
fn iss_finds_blob_not_plane() {
    let cloud = blob_on_plane();
    let kps = detect_iss(&cloud, &params(0.6, 0.5)).unwrap();
    assert!(!kps.is_empty());
    let near = kps.iter().filter(|k| k.position.coords.xy().norm() < 1.8).count();
    assert!(near >= 1);
    for k in &kps {
        let rxy = k.position.coords.xy().norm();
        let on_open_plane = rxy > 2.0 && k.position.x.abs() < 4.0 && k.position.y.abs() < 4.0;
        assert!(!on_open_plane, "keypoint on the open plane at {:?}", k.position);
    }
    assert_separated(&kps, 0.5);
}

#[test]
fn iss_gamma_relaxation_grows_keypoints() {
    let cloud = blob_on_plane();
    let base = detect_iss(&cloud, &params(0.6, 0.5)).unwrap().len();
    let mut p = params(0.6, 0.5);
    p.iss.gamma21 = 0.999_999;
    p.iss.gamma32 = 0.999_999;
    assert!(detect_iss(&cloud, &p).unwrap().len() >= base);
    p.iss.gamma21 = 1.0;
    assert!(matches!(detect_iss(&cloud, &p), Err(Error::InvalidGamma(..))));
}

fn blob_field(radius: f64) -> PointCloud {
    let pts = grid_plane(-6.0, 6.0, -6.0, 6.0, 0.0, 0.1);
    let s = pts
        .iter()
        .map(|p| if p.coords.norm() <= radius { 1.0 } else { 0.0 })
        .collect();
    PointCloud::new(pts).unwrap().with_scalar(s).unwrap()
}

fn sift_params() -> DetectorParams {
    let mut p = params(2.0, 1.0);
    p.sift.min_scale = Some(0.1);
    p.sift.n_octaves = 5;
    p.sift.scales_per_octave = 2;
    p
}

#[test]
fn sift_constant_field_has_no_keypoints() {
    let pts = grid_plane(-3.0, 3.0, -3.0, 3.0, 0.0, 0.1);
    let s = vec![0.4; pts.len()];
    let cloud = PointCloud::new(pts).unwrap().with_scalar(s).unwrap();
    assert!(detect_sift(&cloud, &sift_params()).unwrap().is_empty());
}

#[test]
fn sift_blob_detected_at_its_scale() {
    let radius = 1.0;
    let kps = detect_sift(&blob_field(radius), &sift_params()).unwrap();
    let center: Vec<&Keypoint> = kps.iter().filter(|k| k.position.coords.norm() < 0.5).collect();
    assert!(!center.is_empty(), "{kps:?}");
    let best = center
        .iter()
        .max_by(|a, b| a.saliency.total_cmp(&b.saliency))
        .unwrap();
    assert!(best.scale > radius / 2.0 && best.scale < radius * 2.0, "scale {}", best.scale);
}

#[test]
fn sift_unreachable_contrast_and_monotonicity() {
    let cloud = blob_field(1.0);
    let mut p = sift_params();
    p.sift.min_contrast = 1.1;
    assert!(detect_sift(&cloud, &p).unwrap().is_empty());
    let mut last = usize::MAX;
    for c in [0.0, 0.05, 0.1, 0.2, 0.4] {
        p.sift.min_contrast = c;
        let n = detect_sift(&cloud, &p).unwrap().len();
        assert!(n <= last);
        last = n;
    }
}

#[test]
fn sift_errors() {
    let bare = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
    assert!(matches!(detect_sift(&bare, &sift_params()), Err(Error::MissingScalar)));
    let mut p = sift_params();
    p.sift.min_scale = Some(-1.0);
    assert!(matches!(detect_sift(&blob_field(1.0), &p), Err(Error::NonPositiveScale(_))));
}

#[test]
fn intrinsic_detectors_are_rigidly_equivariant() {
    let t = RigidTransform::from_axis_angle(
        &Vector3::new(0.3, -0.5, 0.8),
        0.7,
        Vector3::new(12.0, -3.0, 4.5),
    );
    // jitter breaks the exact distance ties of a regular grid
    let jittered: Vec<Point3> = blob_on_plane()
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let h = ((i as f64 * 12.9898).sin() * 43758.5453).fract();
            let g = ((i as f64 * 78.233).sin() * 12345.6789).fract();
            Point3::new(p.x + 0.02 * h, p.y + 0.02 * g, p.z)
        })
        .collect();
    let blob = estimate_normals(&PointCloud::new(jittered).unwrap(), 0.3).unwrap();
    let blob = compute_sphericity(&blob, 0.3).unwrap();
    let moved = apply_transform(&blob, &t);
    let mut p = params(0.6, 0.5);
    p.sift.min_scale = Some(0.1);
    p.sift.n_octaves = 3;
    p.sift.scales_per_octave = 2;
    p.sift.min_contrast = 0.05;
    type Det = fn(&PointCloud, &DetectorParams) -> regpipe::Result<Vec<Keypoint>>;
    let detectors: [(&str, Det); 3] = [
        ("harris", detect_harris),
        ("iss", detect_iss),
        ("sift", detect_sift),
    ];
    for (name, det) in detectors {
        let a = det(&blob, &p).unwrap();
        let b = det(&moved, &p).unwrap();
        assert_eq!(a.len(), b.len(), "{name}");
        let bp = positions(&b);
        for k in &a {
            assert!(nearest_distance(&t.apply_point(&k.position), &bp) < 1e-6, "{name}");
        }
    }
}

#[test]
fn detectors_are_deterministic_and_inside_bbox() {
    let cloud = estimate_normals(&blob_on_plane(), 0.3).unwrap();
    let cloud = compute_sphericity(&cloud, 0.3).unwrap();
    let bbox = cloud.bounding_box().unwrap();
    let mut p = params(0.6, 0.5);
    p.sift.min_contrast = 0.05;
    for run in [detect_harris, detect_iss, detect_sift] {
        let a = run(&cloud, &p).unwrap();
        assert_eq!(a, run(&cloud, &p).unwrap());
        for k in &a {
            assert!(bbox.contains(&k.position, 1e-6));
            assert!(k.saliency.is_finite() && k.saliency >= 0.0);
        }
        assert_separated(&a, p.non_max_radius);
    }
}

/// Default-style nadir camera whose view stays inside the cloud's extent,
/// so the image is completely filled.
fn inner_camera(cloud: &PointCloud) -> RangeCameraParams {
    let mut cam = camera_for(cloud, 5.0, 0.1).unwrap();
    cam.fov_x_deg *= 0.7;
    cam.fov_y_deg *= 0.7;
    cam
}

fn bordered(cloud: &PointCloud) -> regpipe::range_image::RangeImage {
    let cam = inner_camera(cloud);
    detect_borders(&project(cloud, &cam).unwrap(), 0.5).unwrap()
}

#[test]
fn narf_flat_image_has_no_keypoints() {
    let img = bordered(&flat_plane(20.0, 0.1));
    assert!(detect_narf(&img, &params(2.0, 1.0)).unwrap().is_empty());
}

#[test]
fn narf_requires_borders() {
    let cloud = flat_plane(4.0, 0.1);
    let cam = camera_for(&cloud, 5.0, 0.1).unwrap();
    let img = project(&cloud, &cam).unwrap();
    assert!(matches!(
        detect_narf(&img, &DetectorParams::default()),
        Err(Error::BordersMissing)
    ));
}

#[test]
fn narf_box_roof_corners() {
    let cloud = box_on_ground(30.0, 6.0, 3.0, 0.1);
    let img = bordered(&cloud);
    let kps = detect_narf(&img, &params(2.0, 1.0)).unwrap();
    assert!(!kps.is_empty());
    let found = positions(&kps);
    for (x, y) in [(-3.0, -3.0), (-3.0, 3.0), (3.0, -3.0), (3.0, 3.0)] {
        let corner = Point3::new(x, y, 3.0);
        assert!(nearest_distance(&corner, &found) <= 2.0, "corner {corner:?}: {found:?}");
    }
    assert_separated(&kps, 1.0);
    for k in &kps {
        assert!(k.saliency > 0.5 && k.saliency <= 1.0);
    }
}

#[test]
fn narf_threshold_is_monotone() {
    let img = bordered(&box_on_ground(30.0, 6.0, 3.0, 0.1));
    let mut last = usize::MAX;
    for t in [0.3, 0.5, 0.6, 0.7, 0.9] {
        let mut p = params(2.0, 1.0);
        p.narf.threshold = t;
        let n = detect_narf(&img, &p).unwrap().len();
        assert!(n <= last);
        last = n;
    }
}

#[test]
fn narf_equivariant_under_camera_axis_rotation() {
    let cloud = box_on_ground(30.0, 6.0, 3.0, 0.1);
    // off-center box so the rotation is not a symmetry
    let shift = RigidTransform::from_translation(Vector3::new(4.0, 2.0, 0.0));
    let cloud = apply_transform(&cloud, &shift);
    let cam = inner_camera(&cloud);
    let axis_point = cam.position;
    let rot = RigidTransform::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2, Vector3::zeros());
    let about_axis = RigidTransform::from_translation(axis_point.coords)
        .compose(&rot)
        .compose(&RigidTransform::from_translation(-axis_point.coords));
    let turned = apply_transform(&cloud, &about_axis);

    let img_a = detect_borders(&project(&cloud, &cam).unwrap(), 0.5).unwrap();
    let img_b = detect_borders(&project(&turned, &cam).unwrap(), 0.5).unwrap();
    let p = params(2.0, 1.0);
    let a = detect_narf(&img_a, &p).unwrap();
    let b = detect_narf(&img_b, &p).unwrap();
    assert!(!a.is_empty());
    let footprint = cam.footprint(cam.position.z);
    let bp = positions(&b);
    let matched = a
        .iter()
        .filter(|k| nearest_distance(&about_axis.apply_point(&k.position), &bp) <= footprint)
        .count();
    assert!(
        matched * 10 >= a.len() * 9 && a.len().abs_diff(b.len()) * 10 <= a.len(),
        "{matched}/{} matched, {} vs {}",
        a.len(),
        a.len(),
        b.len()
    );
}
