use proptest::prelude::*;
use regpipe::config::PipelineConfig;
use regpipe::descriptors::DescriptorKind;
use regpipe::detectors::DetectorKind;
use regpipe::pipeline::coarse_register;
use regpipe::report::{RunReport, RunStatus};
use regpipe::synth::{generate_scene, perturb, pose_error, random_pose, GroundTruth, Primitive, SceneSpec, Viewpoint};
use regpipe::{Error, Point3, PointCloud, RigidTransform, Stage, Vector3};

fn small_scene() -> PointCloud {
    let spec = SceneSpec {
        seed: 5,
        extent: 60.0,
        density_aerial: 30.0,
        density_ground: 30.0,
        path_halfwidth: 50.0,
        primitives: vec![
            Primitive::Plane { z: 0.0 },
            Primitive::Box { cx: -12.0, cy: 10.0, sx: 10.0, sy: 7.0, height: 5.0, yaw_deg: 20.0 },
            Primitive::Box { cx: 14.0, cy: -8.0, sx: 8.0, sy: 12.0, height: 7.0, yaw_deg: 65.0 },
            Primitive::Box { cx: 10.0, cy: 18.0, sx: 6.0, sy: 6.0, height: 3.0, yaw_deg: 5.0 },
            Primitive::Ellipsoid { center: Point3::new(-15.0, -15.0, 6.0), radii: Vector3::new(4.0, 4.0, 3.0) },
            Primitive::Ellipsoid { center: Point3::new(0.0, 0.0, 5.0), radii: Vector3::new(3.0, 3.0, 2.5) },
        ],
    };
    generate_scene(&spec, Viewpoint::Aerial).unwrap()
}

fn fast_config(detector: DetectorKind, descriptor: DescriptorKind) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.detector = detector;
    c.descriptor = descriptor;
    // pixels stay coarser than the widest sampling gap, so no holes
    c.range_image.resolution_deg = 0.06;
    c.ransac.max_iterations = 1000;
    c
}

#[test]
fn self_registration_is_identity_for_every_combination() {
    let cloud = small_scene();
    for det in DetectorKind::ALL {
        for desc in DescriptorKind::ALL {
            let cfg = fast_config(det, desc);
            match coarse_register(&cloud, &cloud, &cfg) {
                Ok(out) => {
                    assert_eq!(out.pref_keypoints, out.preg_keypoints);
                    let (r, t) = pose_error(&out.alignment.transform, &RigidTransform::identity()).unwrap();
                    assert!(r.to_radians() < 1e-6 && t < 1e-6, "{det}/{desc}: {r} {t}");
                    assert!(out.alignment.converged, "{det}/{desc}");
                    assert!(out.timings.total() >= 0.0);
                }
                Err(e) => {
                    // only a combination without three describable keypoints may fail
                    assert!(matches!(e.root(), Error::TooFewKeypoints(_) | Error::EmptyFeatureSet), "{det}/{desc}: {e}");
                }
            }
        }
    }
}

fn plane_spec() -> SceneSpec {
    SceneSpec {
        seed: 1,
        extent: 60.0,
        density_aerial: 30.0,
        density_ground: 30.0,
        path_halfwidth: 20.0,
        primitives: vec![Primitive::Plane { z: 0.0 }],
    }
}

fn plane() -> PointCloud {
    generate_scene(&plane_spec(), Viewpoint::Aerial).unwrap()
}

#[test]
fn featureless_plane_pair_fails_alignment() {
    // a square seen from the air against a strip seen from the path
    let reference = plane();
    let strip = generate_scene(&plane_spec(), Viewpoint::Ground).unwrap();
    let truth = GroundTruth { transform: random_pose(3, 25.0, 20.0), noise_sigma: 0.05, seed: 3 };
    let registered = perturb(&strip, &truth, 0.2).unwrap();
    for det in DetectorKind::ALL {
        let cfg = fast_config(det, DescriptorKind::Fpfh);
        match coarse_register(&reference, &registered, &cfg) {
            Ok(out) => assert!(!out.alignment.converged, "{det}"),
            Err(e) => assert!(matches!(e.root(), Error::TooFewKeypoints(_) | Error::EmptyFeatureSet), "{det}: {e}"),
        }
    }
}

#[test]
fn errors_are_tagged_with_their_stage() {
    let cfg = PipelineConfig::default();
    match coarse_register(&PointCloud::default(), &plane(), &cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, Stage::RangeImage);
            assert!(matches!(*source, Error::EmptyCloud));
        }
        other => panic!("{other:?}"),
    }
    let mut bad = fast_config(DetectorKind::Iss, DescriptorKind::Fpfh);
    bad.detection.iss.gamma21 = 2.0;
    match coarse_register(&plane(), &plane(), &bad) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, Stage::Detection),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reports_round_trip_and_hide_timings_on_request() {
    let cloud = small_scene();
    let mut cfg = fast_config(DetectorKind::Narf, DescriptorKind::Narf);
    cfg.include_timings = false;
    let out = coarse_register(&cloud, &cloud, &cfg).unwrap();
    let report = RunReport::from_run(&cfg, &out, Vec::new());
    assert_eq!(report.status, RunStatus::Ok);
    assert_eq!(report.timings.total(), 0.0);
    assert_eq!(report.config["detector"], "NARF");
    assert_eq!(report.config.len(), cfg.entries().len());
    let json = report.to_json();
    assert_eq!(RunReport::from_json(&json).unwrap(), report);
    // byte-identical on a second run
    let again = RunReport::from_run(&cfg, &coarse_register(&cloud, &cloud, &cfg).unwrap(), Vec::new());
    assert_eq!(again.to_json(), json);
    assert!(RunReport::from_json(&json.replace("\"version\": 1", "\"version\": 99")).is_err());

    // nothing to align is a failed run, a bad input is an error
    let failed = RunReport::from_error(&cfg, &Error::NotConverged);
    assert_eq!(failed.status, RunStatus::Failed);
    assert_eq!(RunReport::from_json(&failed.to_json()).unwrap(), failed);
    let err = RunReport::from_error(&cfg, &Error::InvalidParams("x".into()));
    assert_eq!(err.status, RunStatus::Error);
}

fn detector() -> impl Strategy<Value = DetectorKind> {
    prop::sample::select(DetectorKind::ALL.to_vec())
}

fn descriptor() -> impl Strategy<Value = DescriptorKind> {
    prop::sample::select(DescriptorKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn config_round_trip_is_a_fixed_point(
        det in detector(),
        desc in descriptor(),
        radius in 0.1f64..10.0,
        sim in 0.0f64..1.0,
        iters in 1usize..100_000,
        seed in any::<u64>(),
        min_scale in prop::option::of(0.01f64..1.0),
        timings in any::<bool>(),
    ) {
        let mut c = PipelineConfig::default();
        c.detector = det;
        c.descriptor = desc;
        c.detection.support_radius = radius;
        c.ransac.similarity_threshold = sim;
        c.ransac.max_iterations = iters;
        c.ransac.rng_seed = seed;
        c.detection.sift.min_scale = min_scale;
        c.include_timings = timings;
        let text = c.to_string();
        let back: PipelineConfig = text.parse().unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_string(), text);
    }
}
