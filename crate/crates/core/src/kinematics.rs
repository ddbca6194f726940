//! 6-DOF serial arm model: Denavit-Hartenberg forward kinematics and a
//! damped least-squares inverse kinematics solver.
//!
//! The DH convention is the classic one: each row contributes
//! `Rz(q + theta_offset) * Tz(d) * Tx(a) * Rx(alpha)`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::pose::Pose;

pub const ARM_DOF: usize = 6;

/// IK translation tolerance, mm.
pub const IK_TRANS_TOL: f64 = 1e-4;
/// IK rotation tolerance, rad.
pub const IK_ROT_TOL: f64 = 1e-6;

const IK_DAMPING: f64 = 1e-3;
const IK_MAX_ITERS: usize = 200;
const IK_STEP_CLAMP: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} at {value:.6} rad violates limit [{lo:.6}, {hi:.6}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("inverse kinematics did not converge")]
    IkNotConverged,
    #[error("inverse kinematics blocked by joint limits")]
    IkJointLimitInfeasible,
}

/// One Denavit-Hartenberg row. Lengths in mm, angles in rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    fn transform(&self, q: f64) -> Pose {
        Pose::rot_z(q + self.theta_offset)
            .compose(&Pose::from_translation(0.0, 0.0, self.d))
            .compose(&Pose::from_translation(self.a, 0.0, 0.0))
            .compose(&Pose::rot_x(self.alpha))
    }
}

/// Joint angles, rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointVector(pub [f64; ARM_DOF]);

impl JointVector {
    pub fn zeros() -> Self {
        Self([0.0; ARM_DOF])
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.0)
    }
}

/// A configurable 6-joint serial arm.
#[derive(Clone, Debug)]
pub struct ArmModel {
    pub dh_rows: [DhRow; ARM_DOF],
    /// (lower, upper) per joint, rad; lower < upper.
    pub joint_limits: [(f64, f64); ARM_DOF],
    pub base_pose: Pose,
    /// Targets farther than this from the IK seed's pose are rejected, mm.
    pub workspace_radius: f64,
}

impl ArmModel {
    pub fn check_limits(&self, q: &JointVector) -> Result<(), KinematicsError> {
        for (i, (&value, &(lo, hi))) in q.0.iter().zip(self.joint_limits.iter()).enumerate() {
            if value < lo || value > hi {
                return Err(KinematicsError::JointLimit {
                    joint: i,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    fn clamp_to_limits(&self, q: &mut [f64; ARM_DOF]) -> bool {
        let mut clamped = false;
        for (value, &(lo, hi)) in q.iter_mut().zip(self.joint_limits.iter()) {
            let c = value.clamp(lo, hi);
            if c != *value {
                clamped = true;
                *value = c;
            }
        }
        clamped
    }

    /// Flange pose for joint angles `q`.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose, KinematicsError> {
        self.check_limits(q)?;
        Ok(self.fk_unchecked(&q.0))
    }

    fn fk_unchecked(&self, q: &[f64; ARM_DOF]) -> Pose {
        let mut pose = self.base_pose;
        for (row, &qi) in self.dh_rows.iter().zip(q.iter()) {
            pose = pose.compose(&row.transform(qi));
        }
        pose
    }

    /// Geometric Jacobian (linear rows in mm, angular in rad) at `q`.
    fn jacobian(&self, q: &[f64; ARM_DOF]) -> Matrix6<f64> {
        let mut origins = [Vector3::zeros(); ARM_DOF + 1];
        let mut z_axes = [Vector3::zeros(); ARM_DOF + 1];
        let mut pose = self.base_pose;
        origins[0] = pose.translation;
        z_axes[0] = pose.rotation.column(2).into();
        for i in 0..ARM_DOF {
            pose = pose.compose(&self.dh_rows[i].transform(q[i]));
            origins[i + 1] = pose.translation;
            z_axes[i + 1] = pose.rotation.column(2).into();
        }
        let p_end = origins[ARM_DOF];
        let mut j = Matrix6::zeros();
        for i in 0..ARM_DOF {
            let lin = z_axes[i].cross(&(p_end - origins[i]));
            let ang = z_axes[i];
            for r in 0..3 {
                j[(r, i)] = lin[r];
                j[(r + 3, i)] = ang[r];
            }
        }
        j
    }

    /// Damped least-squares IK seeded at `q_seed`.
    ///
    /// On success `forward_kinematics(result)` matches `target` within
    /// [`IK_TRANS_TOL`] mm / [`IK_ROT_TOL`] rad and the result satisfies the
    /// joint limits. Targets outside [`ArmModel::workspace_radius`] of the
    /// seed's pose are rejected up front.
    pub fn inverse_kinematics(
        &self,
        target: &Pose,
        q_seed: &JointVector,
    ) -> Result<JointVector, KinematicsError> {
        self.check_limits(q_seed)?;
        let seed_pose = self.fk_unchecked(&q_seed.0);
        if seed_pose.translation_distance(target) > self.workspace_radius {
            return Err(KinematicsError::IkNotConverged);
        }

        let mut q = q_seed.0;
        let mut clamped_last = false;
        for _ in 0..IK_MAX_ITERS {
            let pose = self.fk_unchecked(&q);
            let err = pose_error(&pose, target);
            let trans_err = err.fixed_rows::<3>(0).norm();
            let rot_err = err.fixed_rows::<3>(3).norm();
            if trans_err < IK_TRANS_TOL && rot_err < IK_ROT_TOL {
                return Ok(JointVector(q));
            }

            let j = self.jacobian(&q);
            let jjt = j * j.transpose() + Matrix6::identity() * (IK_DAMPING * IK_DAMPING);
            let Some(inv) = jjt.try_inverse() else {
                return Err(KinematicsError::IkNotConverged);
            };
            let mut dq = j.transpose() * inv * err;
            let max_step = dq.amax();
            if max_step > IK_STEP_CLAMP {
                dq *= IK_STEP_CLAMP / max_step;
            }
            for i in 0..ARM_DOF {
                q[i] += dq[i];
            }
            clamped_last = self.clamp_to_limits(&mut q);
        }
        if clamped_last {
            Err(KinematicsError::IkJointLimitInfeasible)
        } else {
            Err(KinematicsError::IkNotConverged)
        }
    }
}

/// Twist taking `pose` toward `target`: translation part in mm, rotation
/// part the axis-angle of the relative rotation, rad.
fn pose_error(pose: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.translation - pose.translation;
    let rel = target.rotation * pose.rotation.transpose();
    let w = rotation_log(&rel);
    Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z)
}

/// Axis-angle vector of a rotation matrix (SO(3) logarithm).
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = c.acos();
    if angle < 1e-12 {
        return Vector3::new(
            0.5 * (r[(2, 1)] - r[(1, 2)]),
            0.5 * (r[(0, 2)] - r[(2, 0)]),
            0.5 * (r[(1, 0)] - r[(0, 1)]),
        );
    }
    if (std::f64::consts::PI - angle).abs() < 1e-9 {
        // near pi: extract axis from the symmetric part
        let xx = ((r[(0, 0)] + 1.0) / 2.0).max(0.0).sqrt();
        let yy = ((r[(1, 1)] + 1.0) / 2.0).max(0.0).sqrt();
        let zz = ((r[(2, 2)] + 1.0) / 2.0).max(0.0).sqrt();
        let mut axis = Vector3::new(xx, yy, zz);
        if r[(2, 1)] - r[(1, 2)] < 0.0 {
            axis.x = -axis.x;
        }
        if r[(0, 2)] - r[(2, 0)] < 0.0 {
            axis.y = -axis.y;
        }
        if r[(1, 0)] - r[(0, 1)] < 0.0 {
            axis.z = -axis.z;
        }
        if axis.norm() > 1e-12 {
            return axis.normalize() * angle;
        }
    }
    let factor = angle / (2.0 * angle.sin());
    Vector3::new(
        factor * (r[(2, 1)] - r[(1, 2)]),
        factor * (r[(0, 2)] - r[(2, 0)]),
        factor * (r[(1, 0)] - r[(0, 1)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_arm() -> ArmModel {
        crate::config::ArmConfig::default_shipped().build()
    }

    /// An arm whose FK with all-zero joints is just the base pose.
    fn degenerate_arm() -> ArmModel {
        ArmModel {
            dh_rows: [DhRow {
                a: 0.0,
                alpha: 0.0,
                d: 0.0,
                theta_offset: 0.0,
            }; ARM_DOF],
            joint_limits: [(-3.0, 3.0); ARM_DOF],
            base_pose: Pose::from_xyz_degrees([5.0, -3.0, 10.0], [0.0, 0.0, 30.0]),
            workspace_radius: 500.0,
        }
    }

    #[test]
    fn zero_joints_on_degenerate_arm_give_base_pose() {
        let arm = degenerate_arm();
        let pose = arm.forward_kinematics(&JointVector::zeros()).unwrap();
        assert!(pose.translation_distance(&arm.base_pose) < 1e-12);
        assert!(pose.rotation_distance(&arm.base_pose) < 1e-12);
    }

    // Oracle: per-row 4x4 homogeneous transforms multiplied explicitly.
    #[test]
    fn fk_matches_homogeneous_product_oracle() {
        let arm = test_arm();
        let q = JointVector([0.3, -0.4, 0.5, 0.2, -0.6, 0.1]);
        let pose = arm.forward_kinematics(&q).unwrap();

        let dh_matrix = |row: &DhRow, qi: f64| -> Matrix4<f64> {
            let (st, ct) = (qi + row.theta_offset).sin_cos();
            let (sa, ca) = row.alpha.sin_cos();
            Matrix4::new(
                ct, -st * ca, st * sa, row.a * ct,
                st, ct * ca, -ct * sa, row.a * st,
                0.0, sa, ca, row.d,
                0.0, 0.0, 0.0, 1.0,
            )
        };
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&arm.base_pose.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&arm.base_pose.translation);
        for (row, &qi) in arm.dh_rows.iter().zip(q.0.iter()) {
            m *= dh_matrix(row, qi);
        }
        let mut got = Matrix4::identity();
        got.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
        got.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation);
        assert_abs_diff_eq!(got, m, epsilon = 1e-9);
    }

    #[test]
    fn limit_boundary_accepted_epsilon_beyond_rejected() {
        let arm = test_arm();
        let mut q = JointVector::zeros();
        q.0[1] = arm.joint_limits[1].1;
        assert!(arm.forward_kinematics(&q).is_ok());
        q.0[1] = arm.joint_limits[1].1 + 1e-9;
        assert!(matches!(
            arm.forward_kinematics(&q),
            Err(KinematicsError::JointLimit { joint: 1, .. })
        ));
    }

    #[test]
    fn ik_fixed_point_returns_seed() {
        let arm = test_arm();
        let seed = JointVector([0.2, -0.3, 0.4, 0.1, -0.8, 0.3]);
        let target = arm.forward_kinematics(&seed).unwrap();
        let got = arm.inverse_kinematics(&target, &seed).unwrap();
        assert_abs_diff_eq!(got.as_vector(), seed.as_vector(), epsilon = 1e-12);
    }

    #[test]
    fn ik_small_tool_z_offset_round_trips() {
        let arm = test_arm();
        let seed = JointVector([0.2, -0.3, 0.5, 0.1, -0.9, 0.2]);
        let start = arm.forward_kinematics(&seed).unwrap();
        let target = start.compose(&Pose::from_translation(0.0, 0.0, 1.0));
        let q = arm.inverse_kinematics(&target, &seed).unwrap();
        let reached = arm.forward_kinematics(&q).unwrap();
        assert!(reached.translation_distance(&target) < IK_TRANS_TOL);
        assert!(reached.rotation_distance(&target) < IK_ROT_TOL);
    }

    #[test]
    fn ik_target_outside_reach_sphere_fails() {
        let arm = test_arm();
        let seed = JointVector([0.2, -0.3, 0.5, 0.1, -0.9, 0.2]);
        let start = arm.forward_kinematics(&seed).unwrap();
        let target = start.compose(&Pose::from_translation(0.0, 0.0, 10_000.0));
        assert_eq!(
            arm.inverse_kinematics(&target, &seed),
            Err(KinematicsError::IkNotConverged)
        );
    }

    #[test]
    fn ik_reports_joint_limit_infeasibility() {
        let mut arm = test_arm();
        let seed = JointVector([0.0, -0.3, 0.5, 0.1, -0.9, 0.0]);
        let start = arm.forward_kinematics(&seed).unwrap();
        // Lock joint 1 so lateral targets cannot be tracked.
        arm.joint_limits[0] = (-1e-6, 1e-6);
        let target = Pose::new(
            start.rotation,
            start.translation + Vector3::new(0.0, 150.0, 0.0),
        );
        assert_eq!(
            arm.inverse_kinematics(&target, &seed),
            Err(KinematicsError::IkJointLimitInfeasible)
        );
    }

    #[test]
    fn fk_ik_round_trip_over_random_reachable_targets() {
        let arm = test_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = JointVector([0.2, -0.3, 0.5, 0.1, -0.9, 0.2]);
        let mut checked = 0;
        while checked < 1000 {
            let mut q = base;
            for v in q.0.iter_mut() {
                *v += rng.gen_range(-0.25..0.25);
            }
            if arm.check_limits(&q).is_err() {
                continue;
            }
            let target = arm.forward_kinematics(&q).unwrap();
            let solved = arm
                .inverse_kinematics(&target, &base)
                .expect("reachable target must solve");
            let reached = arm.forward_kinematics(&solved).unwrap();
            assert!(reached.translation_distance(&target) < IK_TRANS_TOL);
            assert!(reached.rotation_distance(&target) < IK_ROT_TOL);
            checked += 1;
        }
    }
}
