//! Rotation, quaternion and SE(3) algebra plus the pose loss functions.
//!
//! Conventions used throughout the crate:
//! - quaternions are Hamilton `(w, x, y, z)`, right-handed frames;
//! - trajectories store camera-to-world poses;
//! - twists are `[translation, rotation]` 6-vectors, perturbations are
//!   left-multiplied (`exp(xi) * pose`).
//!
//! All types are immutable values and all operations are pure functions.

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Orthonormality drift (inf-norm of `R^T R - I`) above which composition
/// re-orthonormalizes through the polar decomposition.
const ORTHO_DRIFT_TOL: f64 = 1e-7;

/// Below this angle (radians) the log/exp maps switch to series expansions.
const SMALL_ANGLE: f64 = 1e-7;

/// Unit quaternion, Hamilton convention, components `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    /// Builds a unit quaternion, normalizing the input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::invalid("quaternion components must be finite"));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(Error::invalid("quaternion norm too small to normalize"));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Rotation matrix of this quaternion.
    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        quat_to_rot(self)
    }
}

/// 3x3 rotation matrix: orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    /// Wraps a matrix after checking the rotation invariants
    /// (`R^T R = I` and `det R = +1`, both within 1e-9).
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation matrix entries must be finite"));
        }
        let gram = m.transpose() * m;
        let drift = (gram - Matrix3::identity()).abs().max();
        if drift > 1e-9 {
            return Err(Error::invalid(format!(
                "matrix is not orthonormal (drift {drift:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "matrix determinant is {det}, expected +1"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix assumed to already satisfy the invariants.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn to_quaternion(&self) -> Quaternion {
        rot_to_quat(self)
    }

    /// Inf-norm of `R^T R - I`.
    pub fn ortho_drift(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    /// Nearest rotation matrix in the Frobenius sense (polar decomposition
    /// via SVD, with the determinant sign corrected).
    pub fn orthonormalized(&self) -> Self {
        Self(polar_rotation(&self.0))
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for RotationMatrix {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

fn polar_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // Flip the singular vector of the smallest singular value.
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    r
}

/// Axis-angle rotation: unit axis, angle in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vector3<f64>,
    pub angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        if !axis.iter().all(|v| v.is_finite()) || !angle.is_finite() {
            return Err(Error::invalid("axis-angle components must be finite"));
        }
        let n = axis.norm();
        if n < 1e-12 {
            return Err(Error::invalid("axis norm too small"));
        }
        Ok(Self {
            axis: axis / n,
            angle,
        })
    }

    /// Rotation vector `axis * angle`.
    pub fn scaled_axis(&self) -> Vector3<f64> {
        self.axis * self.angle
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        so3_exp(&self.scaled_axis())
    }
}

/// Rigid transform in SE(3) with a `scaled` flag recording whether the
/// translation is metric or only known up to an arbitrary factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: RotationMatrix,
    translation: Vector3<f64>,
    scaled: bool,
}

impl Pose {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>, scaled: bool) -> Self {
        Self {
            rotation,
            translation,
            scaled,
        }
    }

    /// Identity transform. Metric by definition (zero translation).
    pub fn identity() -> Self {
        Self {
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
            scaled: true,
        }
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    /// Same pose with the scaled flag replaced.
    pub fn with_scaled(&self, scaled: bool) -> Self {
        Self { scaled, ..*self }
    }

    /// Homogeneous 4x4 form `[R, t; 0 0 0 1]`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Composition `self * other` with homogeneous-matrix product semantics.
    /// The result is scaled only if both operands are. Long composition
    /// chains re-orthonormalize once rotation drift exceeds 1e-7.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation =
            RotationMatrix::from_matrix_unchecked(self.rotation.0 * other.rotation.0);
        if rotation.ortho_drift() > ORTHO_DRIFT_TOL {
            rotation = rotation.orthonormalized();
        }
        Pose {
            rotation,
            translation: self.rotation.0 * other.translation + self.translation,
            scaled: self.scaled && other.scaled,
        }
    }

    /// Inverse transform `(R^T, -R^T t)`.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt.0 * self.translation),
            scaled: self.scaled,
        }
    }

    /// Applies the transform to a point.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.0 * p + self.translation
    }
}

/// Converts a unit quaternion to its rotation matrix.
pub fn quat_to_rot(q: &Quaternion) -> RotationMatrix {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    RotationMatrix::from_matrix_unchecked(m)
}

/// Converts a rotation matrix to a unit quaternion (Shepperd's method:
/// extract from whichever of the trace or diagonal entries is largest).
/// Either of `q`/`-q` may be returned; both map to the same rotation.
pub fn rot_to_quat(r: &RotationMatrix) -> Quaternion {
    let m = r.matrix();
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let (w, x, y, z);
    if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
        let s = (trace + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let n = (w * w + x * x + y * y + z * z).sqrt();
    Quaternion {
        w: w / n,
        x: x / n,
        y: y / n,
        z: z / n,
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// SO(3) exponential map of a rotation vector (Rodrigues' formula, with a
/// series expansion below the small-angle threshold).
pub fn so3_exp(rotvec: &Vector3<f64>) -> RotationMatrix {
    let theta2 = rotvec.norm_squared();
    let k = skew(rotvec);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        // sin(t)/t and (1-cos(t))/t^2
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    RotationMatrix::from_matrix_unchecked(Matrix3::identity() + a * k + b * (k * k))
}

/// SO(3) logarithm: axis-angle with angle in `[0, pi]`.
///
/// Near zero the axis comes from a first-order series of the skew part;
/// near pi it is extracted from the largest diagonal of `R + I`, where the
/// skew part loses accuracy.
pub fn so3_log(r: &RotationMatrix) -> AxisAngle {
    let m = r.matrix();
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let cos_theta = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    // Skew part is sin(theta) * axis; atan2 keeps the angle accurate where
    // acos of a near-(-1) cosine would not.
    let s = vee(&(m - m.transpose())) / 2.0;
    let theta = s.norm().atan2(cos_theta).clamp(0.0, std::f64::consts::PI);

    if theta < SMALL_ANGLE {
        // First-order: R ~ I + skew(w). Angle 0 canonicalizes to +x.
        let n = s.norm();
        if n < 1e-300 {
            return AxisAngle {
                axis: Vector3::x(),
                angle: 0.0,
            };
        }
        return AxisAngle {
            axis: s / n,
            angle: theta,
        };
    }

    if theta < std::f64::consts::PI - 1e-3 {
        return AxisAngle {
            axis: s / s.norm(),
            angle: theta,
        };
    }

    // Near pi the skew part degenerates; recover a a^T from the symmetric
    // part and take the column with the largest diagonal.
    let sym = (m + m.transpose()) / 2.0;
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let j = if outer[(0, 0)] >= outer[(1, 1)] && outer[(0, 0)] >= outer[(2, 2)] {
        0
    } else if outer[(1, 1)] >= outer[(2, 2)] {
        1
    } else {
        2
    };
    let col = outer.column(j);
    let mut axis = Vector3::new(col[0], col[1], col[2]).normalize();
    // Sign from the skew part when it is still meaningful; at exactly pi
    // both signs are the same rotation, so fall back to a fixed convention.
    let dot = axis.dot(&s);
    if dot.abs() > 1e-12 {
        if dot < 0.0 {
            axis = -axis;
        }
    } else {
        let k = axis.iamax();
        if axis[k] < 0.0 {
            axis = -axis;
        }
    }
    AxisAngle { axis, angle: theta }
}

/// SE(3) exponential map of a twist `[translation, rotation]`.
pub fn se3_exp(xi: &Vector6<f64>) -> Pose {
    let rho = Vector3::new(xi[0], xi[1], xi[2]);
    let omega = Vector3::new(xi[3], xi[4], xi[5]);
    let theta2 = omega.norm_squared();
    let k = skew(&omega);
    let (b, c) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let v = Matrix3::identity() + b * k + c * (k * k);
    Pose {
        rotation: so3_exp(&omega),
        translation: v * rho,
        scaled: true,
    }
}

/// SE(3) logarithm: the twist `[translation, rotation]` with `se3_exp`
/// inverse semantics.
pub fn se3_log(p: &Pose) -> Vector6<f64> {
    let aa = so3_log(p.rotation());
    let omega = aa.scaled_axis();
    let theta2 = omega.norm_squared();
    let k = skew(&omega);
    let c = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    let v_inv = Matrix3::identity() - 0.5 * k + c * (k * k);
    let rho = v_inv * p.translation();
    Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z)
}

/// Adjoint of a pose for `[translation, rotation]` twists:
/// `exp(Ad(T) xi) = T exp(xi) T^-1`.
pub fn se3_adjoint(p: &Pose) -> Matrix6<f64> {
    let r = p.rotation().matrix();
    let tk = skew(p.translation()) * r;
    let mut ad = Matrix6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&tk);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    ad
}

/// Chordal loss between two rotations: the Frobenius norm of their
/// difference. Equals `2 sqrt(2) sin(theta/2)` for a relative angle theta.
pub fn chordal_loss(r: &RotationMatrix, r_hat: &RotationMatrix) -> f64 {
    (r.matrix() - r_hat.matrix()).norm()
}

/// L1 loss between two translations.
pub fn translation_l1(t: &Vector3<f64>, t_hat: &Vector3<f64>) -> f64 {
    (t - t_hat).abs().sum()
}

/// Pose-cycle consistency loss: chordal + L1 terms summed over the forward
/// (real vs generated) and backward (real vs generated) pose pairs.
pub fn pose_cycle_loss(fwd_real: &Pose, fwd_gen: &Pose, bwd_real: &Pose, bwd_gen: &Pose) -> f64 {
    chordal_loss(fwd_real.rotation(), fwd_gen.rotation())
        + translation_l1(fwd_real.translation(), fwd_gen.translation())
        + chordal_loss(bwd_real.rotation(), bwd_gen.rotation())
        + translation_l1(bwd_real.translation(), bwd_gen.translation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    pub(crate) fn random_unit_quat(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n2: f64 = q.iter().map(|v| v * v).sum();
            if n2 > 0.01 {
                return Quaternion::new(q[0], q[1], q[2], q[3]).unwrap();
            }
        }
    }

    pub(crate) fn random_pose(rng: &mut impl Rng) -> Pose {
        let q = random_unit_quat(rng);
        let t = Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        Pose::new(q.to_rotation_matrix(), t, true)
    }

    #[test]
    fn quat_identity_maps_to_identity_matrix() {
        let r = quat_to_rot(&Quaternion::identity());
        assert_eq!(r.matrix(), &Matrix3::identity());
    }

    #[test]
    fn quat_half_sqrt2_z_is_90_deg_about_z() {
        let h = 0.5_f64.sqrt();
        let q = Quaternion::new(h, 0.0, 0.0, h).unwrap();
        let r = quat_to_rot(&q);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(r.matrix(), &expected, epsilon = 1e-12);
    }

    #[test]
    fn quat_to_rot_rejects_non_finite() {
        assert!(Quaternion::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(Quaternion::new(f64::INFINITY, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quat_rot_round_trip_1000_random() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = random_unit_quat(&mut rng);
            let r = quat_to_rot(&q);
            assert!(r.ortho_drift() < 1e-9);
            assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
            let q2 = rot_to_quat(&r);
            let same = (q.w - q2.w).abs() < 1e-9
                && (q.x - q2.x).abs() < 1e-9
                && (q.y - q2.y).abs() < 1e-9
                && (q.z - q2.z).abs() < 1e-9;
            let negated = (q.w + q2.w).abs() < 1e-9
                && (q.x + q2.x).abs() < 1e-9
                && (q.y + q2.y).abs() < 1e-9
                && (q.z + q2.z).abs() < 1e-9;
            assert!(same || negated, "round trip must give q or -q");
        }
    }

    #[test]
    fn compose_with_identity_is_noop() {
        let mut rng = StdRng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        let c = p.compose(&Pose::identity());
        assert_relative_eq!(c.rotation().matrix(), p.rotation().matrix(), epsilon = 1e-15);
        assert_relative_eq!(c.translation(), p.translation(), epsilon = 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let c = p.compose(&p.inverse());
            assert_relative_eq!(
                c.rotation().matrix(),
                &Matrix3::identity(),
                epsilon = 1e-9
            );
            assert!(c.translation().norm() < 1e-9);
        }
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = a.compose(&b);
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            assert_relative_eq!(c.to_homogeneous(), oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_identity_and_pure_translation() {
        let id = Pose::identity();
        assert_eq!(id.inverse(), id);
        let t = Vector3::new(1.0, -2.0, 3.0);
        let p = Pose::new(RotationMatrix::identity(), t, true);
        assert_relative_eq!(p.inverse().translation(), &(-t), epsilon = 1e-15);
    }

    #[test]
    fn scaled_flag_propagates_through_compose() {
        let mut rng = StdRng::seed_from_u64(4);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng).with_scaled(false);
        assert!(a.compose(&a).is_scaled());
        assert!(!a.compose(&b).is_scaled());
        assert!(!b.compose(&a).is_scaled());
        assert!(!b.compose(&b).is_scaled());
        assert!(!b.inverse().is_scaled());
    }

    #[test]
    fn so3_log_identity_is_zero() {
        let aa = so3_log(&RotationMatrix::identity());
        assert_eq!(aa.angle, 0.0);
        assert_eq!(aa.axis, Vector3::x());
    }

    #[test]
    fn so3_log_90_about_z() {
        let h = 0.5_f64.sqrt();
        let r = quat_to_rot(&Quaternion::new(h, 0.0, 0.0, h).unwrap());
        let aa = so3_log(&r);
        assert_relative_eq!(aa.angle, PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(aa.axis, Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn so3_log_exp_round_trip_including_near_pi() {
        let mut rng = StdRng::seed_from_u64(5);
        for i in 0..2000 {
            let axis = loop {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if v.norm() > 0.1 {
                    break v.normalize();
                }
            };
            // Bias half the draws into the hard band near pi.
            let angle = if i % 2 == 0 {
                rng.gen_range(0.0..PI)
            } else {
                rng.gen_range(PI - 1e-3..=PI)
            };
            let aa = AxisAngle::new(axis, angle).unwrap();
            let back = so3_log(&aa.to_rotation_matrix());
            assert_relative_eq!(back.angle, angle, epsilon = 1e-7);
            if angle > 1e-6 {
                // At exactly pi the axis sign is a convention; accept both.
                let d = (back.axis - axis).norm().min((back.axis + axis).norm());
                let aligned_sign_ok = (PI - angle) < 1e-9 || back.axis.dot(&axis) > 0.0;
                assert!(
                    d < 1e-7 && aligned_sign_ok,
                    "axis error {d:.3e} at angle {angle}"
                );
            }
        }
    }

    #[test]
    fn se3_exp_log_round_trip() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..500 {
            // Rotation part stays below pi so the log's principal branch
            // recovers the same twist.
            let mut xi: Vector6<f64> = Vector6::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            for k in 3..6 {
                xi[k] = rng.gen_range(-1.5..1.5);
            }
            let p = se3_exp(&xi);
            let back = se3_log(&p);
            assert_relative_eq!(back, xi, epsilon = 1e-8);
        }
    }

    #[test]
    fn se3_adjoint_conjugation_identity() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..100 {
            let t = random_pose(&mut rng);
            let xi = Vector6::from_fn(|_, _| rng.gen_range(-0.5..0.5));
            let lhs = se3_exp(&(se3_adjoint(&t) * xi));
            let rhs = t.compose(&se3_exp(&xi)).compose(&t.inverse());
            assert_relative_eq!(lhs.to_homogeneous(), rhs.to_homogeneous(), epsilon = 1e-9);
        }
    }

    #[test]
    fn chordal_loss_examples() {
        let id = RotationMatrix::identity();
        assert_eq!(chordal_loss(&id, &id), 0.0);
        // Rotation by pi about z: diag(-1, -1, 1).
        let flip = RotationMatrix::new(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)))
            .unwrap();
        assert_relative_eq!(chordal_loss(&id, &flip), 2.0 * 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chordal_loss_matches_elementwise_oracle() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let (ra, rb) = (a.rotation(), b.rotation());
            let mut sum_sq = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = ra.matrix()[(i, j)] - rb.matrix()[(i, j)];
                    sum_sq += d * d;
                }
            }
            assert_relative_eq!(chordal_loss(ra, rb), sum_sq.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn chordal_loss_angle_law_sweep() {
        // loss = 2 sqrt(2) sin(theta/2) over a 100-point sweep.
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let id = RotationMatrix::identity();
        for k in 0..100 {
            let theta = PI * (k as f64 + 0.5) / 100.0;
            let r = so3_exp(&(axis * theta));
            let expected = 2.0 * 2.0_f64.sqrt() * (theta / 2.0).sin();
            assert_relative_eq!(chordal_loss(&id, &r), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn translation_l1_examples() {
        let t = Vector3::new(0.3, -0.2, 0.9);
        assert_eq!(translation_l1(&t, &t), 0.0);
        assert_eq!(
            translation_l1(&Vector3::new(1.0, 2.0, 3.0), &Vector3::zeros()),
            6.0
        );
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..100 {
            let a: Vector3<f64> = Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
            let b: Vector3<f64> = Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
            let oracle = (0..3).map(|i| (a[i] - b[i]).abs()).sum::<f64>();
            assert_eq!(translation_l1(&a, &b), oracle);
        }
    }

    #[test]
    fn pose_cycle_loss_examples() {
        let mut rng = StdRng::seed_from_u64(11);
        let p = random_pose(&mut rng);
        let q = random_pose(&mut rng);
        assert_eq!(pose_cycle_loss(&p, &p, &q, &q), 0.0);

        // Forward identical; backward rotations differ by pi about z with
        // equal translations: loss is the lone chordal term 2 sqrt(2).
        let flip = Pose::new(
            RotationMatrix::new(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).unwrap(),
            *q.translation(),
            true,
        );
        let bwd = Pose::new(RotationMatrix::identity(), *q.translation(), true);
        assert_relative_eq!(
            pose_cycle_loss(&p, &p, &bwd, &flip),
            2.0 * 2.0_f64.sqrt(),
            epsilon = 1e-12
        );

        // Random poses decompose into the two component losses exactly.
        for _ in 0..50 {
            let (a, b, c, d) = (
                random_pose(&mut rng),
                random_pose(&mut rng),
                random_pose(&mut rng),
                random_pose(&mut rng),
            );
            let expected = chordal_loss(a.rotation(), b.rotation())
                + translation_l1(a.translation(), b.translation())
                + chordal_loss(c.rotation(), d.rotation())
                + translation_l1(c.translation(), d.translation());
            assert_eq!(pose_cycle_loss(&a, &b, &c, &d), expected);
        }
    }

    #[test]
    fn reorthonormalization_bounds_drift_on_long_chains() {
        let mut rng = StdRng::seed_from_u64(12);
        let step = random_pose(&mut rng);
        let mut acc = Pose::identity();
        for _ in 0..200_000 {
            acc = acc.compose(&step);
        }
        assert!(acc.rotation().ortho_drift() <= 1e-7 * 1.1);
    }

    proptest! {
        #[test]
        fn chordal_symmetry_and_triangle(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let (ra, rb, rc) = (a.rotation(), b.rotation(), c.rotation());
            prop_assert!((chordal_loss(ra, rb) - chordal_loss(rb, ra)).abs() < 1e-15);
            prop_assert!(chordal_loss(ra, rc) <= chordal_loss(ra, rb) + chordal_loss(rb, rc) + 1e-12);
        }

        #[test]
        fn compose_is_associative(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!((lhs.to_homogeneous() - rhs.to_homogeneous()).abs().max() < 1e-9);
        }
    }
}
