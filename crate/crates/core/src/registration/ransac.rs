use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::Point3;
use crate::detectors::Keypoint;
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::par;
use crate::rigid::estimate_rigid_svd;
use crate::transform::RigidTransform;

use super::Correspondence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Minimum edge-length ratio between the sampled source and destination
    /// triangles.
    pub similarity_threshold: f64,
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Matches considered per source keypoint.
    pub correspondence_randomness: usize,
    pub min_inlier_fraction: f64,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.55,
            inlier_threshold: 1.0,
            max_iterations: 5000,
            correspondence_randomness: 5,
            min_inlier_fraction: 0.25,
            rng_seed: 42,
        }
    }
}

impl RansacParams {
    pub const SAMPLE_SIZE: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidParameter("similarity threshold must lie in [0, 1]".into()));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::NonPositiveThreshold(self.inlier_threshold));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::InvalidFraction(self.min_inlier_fraction));
        }
        if self.correspondence_randomness == 0 {
            return Err(Error::InvalidParameter("correspondence randomness must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Maps the source (registered) keypoints onto the destination.
    pub transform: RigidTransform,
    pub inlier_count: usize,
    pub inlier_fraction: f64,
    pub converged: bool,
    pub iterations_used: usize,
    /// Samples that survived pre-rejection and produced a model.
    pub samples_accepted: usize,
    pub elapsed: f64,
}

/// Source positions whose nearest destination lies within `threshold` once
/// moved by `t`.
pub fn count_inliers(src: &[Point3], dst: &SpatialIndex, t: &RigidTransform, threshold: f64) -> Vec<usize> {
    (0..src.len())
        .filter(|&i| dst.nearest_neighbor(&t.apply_point(&src[i]), Some(threshold)).is_some())
        .collect()
}

fn edge_similarity(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

/// Refits on the inlier set until it stops changing.
const MAX_REFITS: usize = 10;

struct Model {
    iteration: usize,
    fit: Fit,
    transform: RigidTransform,
}

/// Inlier count and summed squared inlier distance of a model.
#[derive(Debug, Clone, Copy)]
struct Fit {
    inliers: usize,
    sq_error: f64,
}

impl Fit {
    /// More inliers, then lower mean squared residual.
    fn beats(&self, other: &Fit) -> bool {
        if self.inliers != other.inliers {
            return self.inliers > other.inliers;
        }
        // compare means without dividing: a/n < b/n for equal n
        self.sq_error < other.sq_error
    }
}

/// Pre-rejective RANSAC over keypoint correspondences.
///
/// Iteration `i` draws from a ChaCha8 stream `(rng_seed, i)`, so results do
/// not depend on scheduling. Each draws three distinct source keypoints and
/// one of each one's first `k` matches, rejects the sample unless every
/// source/destination edge-length ratio reaches the similarity threshold,
/// solves the 3-point rigid fit and counts source keypoints landing within
/// the inlier threshold of some destination keypoint. The best model has the
/// most inliers; ties go to the lower squared residual, then to the earlier
/// iteration. It is refit on all its inliers, repeatedly while the inlier
/// set keeps changing, and a refit is kept only when it loses no inliers.
///
/// A run converges when the best model reaches `min_inlier_fraction` and is
/// supported by more keypoints than the three it was fitted to. Otherwise
/// the best model is still returned with `converged = false`.
pub fn prerejective_ransac(
    src_kps: &[Keypoint],
    dst_kps: &[Keypoint],
    matches: &[Correspondence],
    params: &RansacParams,
) -> Result<AlignmentResult> {
    let start = Instant::now();
    params.validate()?;
    if dst_kps.len() < RansacParams::SAMPLE_SIZE {
        return Err(Error::TooFewKeypoints(dst_kps.len()));
    }
    // candidate destinations per source keypoint, in match order
    let mut options: Vec<Vec<usize>> = vec![Vec::new(); src_kps.len()];
    for m in matches {
        if m.src_keypoint >= src_kps.len() || m.dst_keypoint >= dst_kps.len() {
            return Err(Error::InvalidParameter(format!(
                "correspondence {}→{} out of range",
                m.src_keypoint, m.dst_keypoint
            )));
        }
        let o = &mut options[m.src_keypoint];
        if o.len() < params.correspondence_randomness {
            o.push(m.dst_keypoint);
        }
    }
    let sources: Vec<usize> = (0..src_kps.len()).filter(|&i| !options[i].is_empty()).collect();
    if sources.len() < RansacParams::SAMPLE_SIZE {
        return Err(Error::TooFewKeypoints(sources.len()));
    }

    let src_pts: Vec<Point3> = src_kps.iter().map(|k| k.position).collect();
    let dst_pts: Vec<Point3> = dst_kps.iter().map(|k| k.position).collect();
    let dst_index = SpatialIndex::new(&dst_pts)?;
    let score = |t: &RigidTransform| {
        let mut fit = Fit { inliers: 0, sq_error: 0.0 };
        for p in &src_pts {
            if let Some((_, d)) = dst_index.nearest_neighbor(&t.apply_point(p), Some(params.inlier_threshold)) {
                fit.inliers += 1;
                fit.sq_error += d * d;
            }
        }
        fit
    };

    let models: Vec<Option<Model>> = par::map_range(params.max_iterations, |iteration| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        rng.set_stream(iteration as u64);
        let mut picked = [0usize; 3];
        let mut n = 0;
        while n < 3 {
            let s = sources[rng.random_range(0..sources.len())];
            if !picked[..n].contains(&s) {
                picked[n] = s;
                n += 1;
            }
        }
        let targets = picked.map(|s| options[s][rng.random_range(0..options[s].len())]);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let ds = (src_pts[picked[a]] - src_pts[picked[b]]).norm();
            let dd = (dst_pts[targets[a]] - dst_pts[targets[b]]).norm();
            if edge_similarity(ds, dd) < params.similarity_threshold {
                return None;
            }
        }
        let s = picked.map(|i| src_pts[i]);
        let d = targets.map(|j| dst_pts[j]);
        let transform = estimate_rigid_svd(&s, &d).ok()?;
        Some(Model {
            iteration,
            fit: score(&transform),
            transform,
        })
    });

    let samples_accepted = models.iter().flatten().count();
    let best = models
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.fit.beats(&a.fit) { b } else { a });

    let (transform, inlier_count) = match best {
        None => (RigidTransform::identity(), 0),
        Some(best) => {
            log::debug!("best model at iteration {} with {} inliers", best.iteration, best.fit.inliers);
            refine(&best, &src_pts, &dst_index, params.inlier_threshold, &score)
        }
    };
    let inlier_fraction = inlier_count as f64 / src_kps.len() as f64;
    Ok(AlignmentResult {
        transform,
        inlier_count,
        inlier_fraction,
        converged: inlier_count > RansacParams::SAMPLE_SIZE && inlier_fraction >= params.min_inlier_fraction,
        iterations_used: params.max_iterations,
        samples_accepted,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

fn refine(
    best: &Model,
    src_pts: &[Point3],
    dst_index: &SpatialIndex,
    threshold: f64,
    score: &dyn Fn(&RigidTransform) -> Fit,
) -> (RigidTransform, usize) {
    let pairs = |t: &RigidTransform| -> Vec<(usize, usize)> {
        (0..src_pts.len())
            .filter_map(|i| dst_index.nearest_neighbor(&t.apply_point(&src_pts[i]), Some(threshold)).map(|(j, _)| (i, j)))
            .collect()
    };
    let (mut transform, mut fit) = (best.transform, best.fit);
    let mut current = pairs(&transform);
    for _ in 0..MAX_REFITS {
        let s: Vec<Point3> = current.iter().map(|&(i, _)| src_pts[i]).collect();
        let d: Vec<Point3> = current.iter().map(|&(_, j)| dst_index.points()[j]).collect();
        let Ok(t) = estimate_rigid_svd(&s, &d) else { break };
        let f = score(&t);
        if f.inliers < fit.inliers {
            break;
        }
        transform = t;
        fit = f;
        let next = pairs(&transform);
        if next == current {
            break;
        }
        current = next;
    }
    (transform, fit.inliers)
}
