//! Data-parallel kernels against the sequential fallback.
//!
//! The default build measures every kernel twice: inside a one-thread rayon
//! pool and on the full pool. `cargo bench --no-default-features` measures
//! the plain sequential code path under the `sequential` group, so the three
//! groups line up in the criterion report.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use regpipe::descriptors::{describe_fpfh, FeatureVector};
use regpipe::detectors::{detect_iss_with_index, DetectorParams, Keypoint};
use regpipe::registration::{match_features, prerejective_ransac, Metric, RansacParams};
use regpipe::surface::estimate_normals;
use regpipe::synth::{generate_scene, perturb, random_pose, GroundTruth, SceneSpec, Viewpoint};
use regpipe::{PointCloud, SpatialIndex};

const SCENE: &str = "
extent=60
density_aerial=60
plane 0
box -12 -8 14 9 7 20
box 14 10 8 12 5 -35
ellipsoid 12 -14 6 4 4 3
cylinder 12 -14 0 0.4 4
ellipsoid -15 15 7 5 5 3.5
cylinder -15 15 0 0.5 5
";

struct Fixture {
    cloud: PointCloud,
    index: SpatialIndex,
    keypoints: Vec<Keypoint>,
    features: Vec<FeatureVector>,
    moved_keypoints: Vec<Keypoint>,
    moved_features: Vec<FeatureVector>,
}

fn fixture() -> Fixture {
    let spec: SceneSpec = SCENE.parse().expect("bench scene");
    let raw = generate_scene(&spec, Viewpoint::Aerial).expect("scene");
    let cloud = estimate_normals(&raw, 0.5).expect("normals");
    let index = SpatialIndex::new(cloud.points()).expect("index");
    let params = DetectorParams::default();
    let keypoints = detect_iss_with_index(&cloud, &index, &params).expect("iss");
    let features = describe_fpfh(&cloud, &index, &keypoints, 2.0).expect("fpfh");

    let truth = GroundTruth { transform: random_pose(7, 30.0, 10.0), noise_sigma: 0.0, seed: 7 };
    let moved = perturb(&cloud, &truth, 0.0).expect("perturb");
    let moved_index = SpatialIndex::new(moved.points()).expect("index");
    let moved_keypoints = detect_iss_with_index(&moved, &moved_index, &params).expect("iss");
    let moved_features = describe_fpfh(&moved, &moved_index, &moved_keypoints, 2.0).expect("fpfh");
    Fixture { cloud, index, keypoints, features, moved_keypoints, moved_features }
}

#[cfg(feature = "parallel")]
use rayon::ThreadPool as Pool;

/// Stand-in so the kernel list is shared by both builds.
#[cfg(not(feature = "parallel"))]
struct Pool;

#[cfg(not(feature = "parallel"))]
impl Pool {
    fn install<R>(&self, op: impl FnOnce() -> R) -> R {
        op()
    }
}

fn kernels(c: &mut Criterion, group: &str, f: &Fixture, pool: Option<&Pool>) {
    // the measured call runs inside the pool, criterion itself stays outside
    fn on<R: Send>(pool: Option<&Pool>, op: impl FnOnce() -> R + Send) -> R {
        match pool {
            Some(p) => p.install(op),
            None => op(),
        }
    }
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    let raw = f.cloud.clone().without_normals();
    g.bench_function(BenchmarkId::new("normals", raw.len()), |b| {
        b.iter(|| on(pool, || estimate_normals(&raw, 0.5).unwrap()))
    });
    g.bench_function(BenchmarkId::new("iss", f.cloud.len()), |b| {
        b.iter(|| on(pool, || detect_iss_with_index(&f.cloud, &f.index, &DetectorParams::default()).unwrap()))
    });
    g.bench_function(BenchmarkId::new("fpfh", f.keypoints.len()), |b| {
        b.iter(|| on(pool, || describe_fpfh(&f.cloud, &f.index, &f.keypoints, 2.0).unwrap()))
    });
    g.bench_function(BenchmarkId::new("match", f.features.len()), |b| {
        b.iter(|| on(pool, || match_features(&f.moved_features, &f.features, 5, Metric::L2).unwrap()))
    });
    let matches = match_features(&f.moved_features, &f.features, 5, Metric::L2).unwrap();
    let params = RansacParams { max_iterations: 2000, ..RansacParams::default() };
    g.bench_function(BenchmarkId::new("ransac", params.max_iterations), |b| {
        b.iter(|| on(pool, || prerejective_ransac(&f.moved_keypoints, &f.keypoints, &matches, &params).unwrap()))
    });
    g.finish();
}

#[cfg(feature = "parallel")]
fn backends(c: &mut Criterion) {
    let f = fixture();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    kernels(c, "rayon-1-thread", &f, Some(&one));
    kernels(c, &format!("rayon-{}-threads", rayon::current_num_threads()), &f, None);
}

#[cfg(not(feature = "parallel"))]
fn backends(c: &mut Criterion) {
    kernels(c, "sequential", &fixture(), None::<&Pool>);
}

criterion_group!(benches, backends);
criterion_main!(benches);
