//! Point cloud data model.

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

const NORMAL_TOLERANCE: f64 = 1e-6;

/// Ordered list of 3D points with an optional scalar channel (intensity or
/// sphericity) and optional unit normals.
///
/// A normal of exactly `(0, 0, 0)` is the sentinel for points whose
/// neighborhood was too small to fit a plane; such points are skipped by
/// every detector and descriptor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    scalar: Option<Vec<f64>>,
    normals: Option<Vec<Vector3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite_point(p)) {
            return Err(Error::InvalidCloud(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            scalar: None,
            normals: None,
        })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn with_scalar(mut self, scalar: Vec<f64>) -> Result<Self> {
        if scalar.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "scalar channel has {} entries for {} points",
                scalar.len(),
                self.points.len()
            )));
        }
        if let Some(i) = scalar.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidCloud(format!("scalar {i} is not finite")));
        }
        self.scalar = Some(scalar);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Vector3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "normals have {} entries for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| !is_valid_normal(n)) {
            return Err(Error::InvalidCloud(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    pub fn scalar(&self) -> Option<&[f64]> {
        self.scalar.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    /// Sub-cloud of the given indices, in the given order, carrying channels.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            scalar: self
                .scalar
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<f64>>, Option<Vec<Vector3>>) {
        (self.points, self.scalar, self.normals)
    }

    /// Caller guarantees the invariants (used by transforms that preserve them).
    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3>,
        scalar: Option<Vec<f64>>,
        normals: Option<Vec<Vector3>>,
    ) -> Self {
        debug_assert!(scalar.as_ref().is_none_or(|s| s.len() == points.len()));
        debug_assert!(normals.as_ref().is_none_or(|n| n.len() == points.len()));
        Self {
            points,
            scalar,
            normals,
        }
    }
}

pub(crate) fn is_finite_point(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Unit length within tolerance, or the all-zero sentinel.
pub fn is_valid_normal(n: &Vector3) -> bool {
    let norm = n.norm();
    n.iter().all(|c| c.is_finite()) && (norm == 0.0 || (norm - 1.0).abs() <= NORMAL_TOLERANCE)
}

pub fn is_sentinel_normal(n: &Vector3) -> bool {
    n.x == 0.0 && n.y == 0.0 && n.z == 0.0
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = *points.first()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3 {
        self.max - self.min
    }

    pub fn max_edge(&self) -> f64 {
        self.extent().max()
    }

    pub fn contains(&self, p: &Point3, eps: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - eps && p[k] <= self.max[k] + eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_points() {
        let err = PointCloud::new(vec![Point3::new(0.0, f64::NAN, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidCloud(_)));
    }

    #[test]
    fn channel_lengths_must_match() {
        let c = PointCloud::from_xyz(&[[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(c.clone().with_scalar(vec![0.0]).is_err());
        assert!(c.clone().with_normals(vec![Vector3::z()]).is_err());
        assert!(c
            .with_normals(vec![Vector3::z(), Vector3::new(0.0, 0.0, 2.0)])
            .is_err());
    }

    #[test]
    fn sentinel_normal_is_accepted() {
        let c = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
        assert!(c.with_normals(vec![Vector3::zeros()]).is_ok());
    }

    #[test]
    fn select_keeps_channels() {
        let c = PointCloud::from_xyz(&[[0.0; 3], [1.0, 2.0, 3.0]])
            .unwrap()
            .with_scalar(vec![0.25, 0.75])
            .unwrap();
        let s = c.select(&[1]);
        assert_eq!(s.points(), &[Point3::new(1.0, 2.0, 3.0)]);
        assert_eq!(s.scalar(), Some(&[0.75][..]));
    }
}
