//! Closed-form least-squares rigid alignment of paired point sets.
//!
//! Both solvers minimize `Σ ‖R·src_i + T − dst_i‖²` without scale. The SVD
//! route corrects reflections by flipping the weakest singular direction; the
//! quaternion route takes the dominant eigenvector of Horn's 4×4 matrix.

use nalgebra::{Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};

use crate::cloud::{Matrix3, Point3, Vector3};
use crate::error::{Error, Result};
use crate::surface::sorted_eigen;
use crate::transform::RigidTransform;

/// Relative threshold on the second scatter eigenvalue of the source points.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

struct Centered {
    src_centroid: Vector3,
    dst_centroid: Vector3,
    /// `Σ (src_i − c_s)(dst_i − c_d)ᵀ`
    cross: Matrix3,
}

fn center_pairs(src: &[Point3], dst: &[Point3]) -> Result<Centered> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::TooFewPairs(src.len()));
    }
    let n = src.len() as f64;
    let src_centroid = src.iter().map(|p| p.coords).sum::<Vector3>() / n;
    let dst_centroid = dst.iter().map(|p| p.coords).sum::<Vector3>() / n;
    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s.coords - src_centroid;
        let b = d.coords - dst_centroid;
        scatter += a * a.transpose();
        cross += a * b.transpose();
    }
    let (ev, _) = sorted_eigen(scatter / n);
    if !(ev[0] > 0.0) || ev[1] < DEGENERACY_THRESHOLD * ev[0] {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(Centered {
        src_centroid,
        dst_centroid,
        cross,
    })
}

fn finish(rotation: Matrix3, c: &Centered) -> Result<RigidTransform> {
    let translation = c.dst_centroid - rotation * c.src_centroid;
    RigidTransform::new(rotation, translation)
}

pub fn estimate_rigid_svd(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    let c = center_pairs(src, dst)?;
    let svd = c.cross.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateConfiguration)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // nalgebra sorts singular values descending; flip the smallest.
        let weakest = svd.singular_values.imin();
        d[(weakest, weakest)] = -1.0;
    }
    finish(v * d * u.transpose(), &c)
}

pub fn estimate_rigid_horn(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    let c = center_pairs(src, dst)?;
    let s = &c.cross;
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let q = eig.eigenvectors.column(eig.eigenvalues.imax());
    let unit = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    finish(*unit.to_rotation_matrix().matrix(), &c)
}
