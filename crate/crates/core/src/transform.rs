//! Rigid transforms `p' = R p + T`.

use crate::cloud::{Matrix3, Point3, PointCloud, Vector3};
use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3,
    translation: Vector3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Fails with [`Error::InvalidRotation`] unless `RᵀR = I` and `det R = +1`
    /// within 1e-9.
    pub fn new(rotation: Matrix3, translation: Vector3) -> Result<Self> {
        if !is_rotation(&rotation) || !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3, angle: f64, translation: Vector3) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle)
                .matrix()
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    /// `(Rᵀ, −Rᵀ T)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> Result<Self> {
        let last = m[3];
        if last != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidRotation);
        }
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Self::new(rotation, Vector3::new(m[0][3], m[1][3], m[2][3]))
    }

    /// Rotation angle in radians, in `[0, π]`.
    ///
    /// Equals `acos((tr R − 1)/2)`; the skew part supplies the sine so small
    /// angles keep full precision.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let sin = 0.5
            * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
        let cos = 0.5 * (r.trace() - 1.0);
        sin.atan2(cos)
    }
}

pub fn is_rotation(m: &Matrix3) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let ortho = (m.transpose() * m - Matrix3::identity()).norm();
    ortho <= ORTHONORMAL_TOLERANCE && (m.determinant() - 1.0).abs() <= ORTHONORMAL_TOLERANCE
}

/// `p' = R p + T` per point; normals are rotated, the scalar channel is copied.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    let points = cloud.points().iter().map(|p| t.apply_point(p)).collect();
    let normals = cloud
        .normals()
        .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect());
    PointCloud::from_parts_unchecked(points, cloud.scalar().map(<[f64]>::to_vec), normals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_reflection_and_scale() {
        let mut reflect = Matrix3::identity();
        reflect[(2, 2)] = -1.0;
        assert!(matches!(
            RigidTransform::new(reflect, Vector3::zeros()),
            Err(Error::InvalidRotation)
        ));
        assert!(RigidTransform::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    #[test]
    fn identity_is_exact() {
        let c = PointCloud::from_xyz(&[[1.5, -2.25, 3.0], [0.1, 0.2, 0.3]])
            .unwrap()
            .with_normals(vec![Vector3::z(), Vector3::x()])
            .unwrap()
            .with_scalar(vec![0.5, 0.25])
            .unwrap();
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
    }

    #[test]
    fn translation_moves_points_not_normals() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]])
            .unwrap()
            .with_normals(vec![Vector3::new(0.6, 0.0, 0.8)])
            .unwrap();
        let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 5.0));
        let out = apply_transform(&c, &t);
        assert_eq!(out.point(0), Point3::new(1.0, 2.0, 8.0));
        assert_eq!(out.normals().unwrap()[0], Vector3::new(0.6, 0.0, 0.8));
    }

    #[test]
    fn homogeneous_round_trip() {
        let t = RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(4.0, 5.0, 6.0));
        let back = RigidTransform::from_homogeneous(&t.to_homogeneous()).unwrap();
        assert_eq!(back, t);
    }
}
