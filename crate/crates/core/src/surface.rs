//! Local surface statistics: scatter-matrix eigen-decomposition, normals and
//! sphericity.

use nalgebra::SymmetricEigen;

use crate::cloud::{Matrix3, Point3, PointCloud, Vector3};
use crate::error::{check_radius, Error, Result};
use crate::index::SpatialIndex;
use crate::par;

pub const MIN_NEIGHBORS: usize = 3;

/// Centroid and eigen-decomposition of a neighborhood's 3×3 covariance,
/// eigenvalues sorted `λ1 ≥ λ2 ≥ λ3 ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSurfaceStats {
    pub centroid: Point3,
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vector3; 3],
    pub neighbor_count: usize,
}

impl LocalSurfaceStats {
    pub fn from_points<'a, I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Point3>,
        I::IntoIter: Clone,
    {
        let iter = points.into_iter();
        let mut n = 0usize;
        let mut sum = Vector3::zeros();
        for p in iter.clone() {
            sum += p.coords;
            n += 1;
        }
        if n < MIN_NEIGHBORS {
            return Err(Error::InsufficientNeighbors {
                needed: MIN_NEIGHBORS,
                found: n,
            });
        }
        let centroid = Point3::from(sum / n as f64);
        let mut cov = Matrix3::zeros();
        for p in iter {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        cov /= n as f64;
        let (eigenvalues, eigenvectors) = sorted_eigen(cov);
        Ok(Self {
            centroid,
            eigenvalues,
            eigenvectors,
            neighbor_count: n,
        })
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn normal(&self) -> Vector3 {
        self.eigenvectors[2]
    }

    /// `λ3 / λ1`, or 0 for a degenerate (single point) spread.
    pub fn sphericity(&self) -> f64 {
        let [l1, _, l3] = self.eigenvalues;
        if l1 > 0.0 {
            (l3 / l1).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix, sorted descending, with
/// tiny negative eigenvalues clamped to zero.
pub fn sorted_eigen(m: Matrix3) -> ([f64; 3], [Vector3; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vectors = order.map(|i| eig.eigenvectors.column(i).normalize());
    (values, vectors)
}

pub fn local_pca(
    cloud: &PointCloud,
    index: &SpatialIndex,
    center: &Point3,
    radius: f64,
) -> Result<LocalSurfaceStats> {
    check_radius(radius)?;
    let mut nbrs = Vec::new();
    index.collect_within(center, radius, &mut nbrs);
    nbrs.sort_unstable();
    let pts = cloud.points();
    LocalSurfaceStats::from_points(nbrs.iter().map(|&i| &pts[i]))
}

/// Flips `n` to have a positive Z component; near-horizontal normals
/// (`|n_z| < 1e-6`) are flipped toward +X, then +Y.
pub fn orient_normal(n: Vector3) -> Vector3 {
    let key = if n.z.abs() >= 1e-6 {
        n.z
    } else if n.x.abs() >= 1e-6 {
        n.x
    } else {
        n.y
    };
    if key < 0.0 {
        -n
    } else {
        n
    }
}

/// Flips `n` to face along `view` (toward the observer).
pub fn orient_toward(n: Vector3, view: &Vector3) -> Vector3 {
    if n.dot(view) < 0.0 {
        -n
    } else {
        n
    }
}

/// Per-point normals from the smallest scatter eigenvector within `radius`.
/// Points with fewer than three neighbors get the zero sentinel.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> Result<PointCloud> {
    check_radius(radius)?;
    if cloud.is_empty() {
        return cloud.clone().with_normals(Vec::new());
    }
    let index = SpatialIndex::new(cloud.points())?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let normals = normals_at(cloud, &index, &all, radius)?;
    cloud.clone().with_normals(normals)
}

/// Normals for the listed points only, in list order.
pub fn normals_at(
    cloud: &PointCloud,
    index: &SpatialIndex,
    indices: &[usize],
    radius: f64,
) -> Result<Vec<Vector3>> {
    check_radius(radius)?;
    let pts = cloud.points();
    Ok(par::map_slice(indices, |&i| {
        let mut nbrs = Vec::new();
        index.collect_within(&pts[i], radius, &mut nbrs);
        nbrs.sort_unstable();
        match LocalSurfaceStats::from_points(nbrs.iter().map(|&j| &pts[j])) {
            Ok(stats) => orient_normal(stats.normal()),
            Err(_) => Vector3::zeros(),
        }
    }))
}

/// Sphericity `λ3/λ1` per point into the scalar channel (0 when fewer than
/// three neighbors).
pub fn compute_sphericity(cloud: &PointCloud, radius: f64) -> Result<PointCloud> {
    check_radius(radius)?;
    if cloud.is_empty() {
        return cloud.clone().with_scalar(Vec::new());
    }
    let index = SpatialIndex::new(cloud.points())?;
    let pts = cloud.points();
    let values = par::map_range(cloud.len(), |i| {
        let mut nbrs = Vec::new();
        index.collect_within(&pts[i], radius, &mut nbrs);
        nbrs.sort_unstable();
        LocalSurfaceStats::from_points(nbrs.iter().map(|&j| &pts[j]))
            .map(|s| s.sphericity())
            .unwrap_or(0.0)
    });
    cloud.clone().with_scalar(values)
}
