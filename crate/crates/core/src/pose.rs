//! Rigid-body poses: rotation matrix + translation, with the few group
//! operations the rest of the crate needs.
//!
//! Translations are millimetres throughout the crate; rotations are plain
//! 3x3 orthonormal matrices to stay away from gimbal trouble. File formats
//! use XYZ fixed-angle triples in degrees (see [`Pose::from_xyz_degrees`]).

use nalgebra::{Matrix3, Vector3};

/// Tolerance for the orthonormality / determinant validity checks.
pub const POSE_VALID_TOL: f64 = 1e-9;

/// A rigid transform: `p_world = rotation * p_local + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    /// mm
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    /// Rigid-body composition `self ∘ other` (apply `other` first in local
    /// coordinates of `self`).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// True when the rotation block is orthonormal with determinant +1
    /// within [`POSE_VALID_TOL`].
    pub fn is_valid(&self) -> bool {
        let rrt = self.rotation * self.rotation.transpose();
        let ortho_err = (rrt - Matrix3::identity()).abs().max();
        let det_err = (self.rotation.determinant() - 1.0).abs();
        ortho_err <= POSE_VALID_TOL && det_err <= POSE_VALID_TOL
    }

    /// Rotation angle (rad) of `self.rotation.transpose() * other.rotation`,
    /// i.e. the geodesic distance between the two orientations.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// XYZ fixed-angle convention: `R = Rz(cz) * Ry(cy) * Rx(cx)`, angles in
    /// degrees. This is what all config files and text exports use.
    pub fn from_xyz_degrees(translation_mm: [f64; 3], angles_deg: [f64; 3]) -> Self {
        let [ax, ay, az] = angles_deg.map(f64::to_radians);
        let rotation = Pose::rot_z(az).rotation * Pose::rot_y(ay).rotation * Pose::rot_x(ax).rotation;
        Self {
            rotation,
            translation: Vector3::new(translation_mm[0], translation_mm[1], translation_mm[2]),
        }
    }

    /// Inverse of [`Pose::from_xyz_degrees`]. Near the pitch singularity
    /// (|cy| = 90 deg) the roll is pinned to zero so output stays unique.
    pub fn to_xyz_degrees(&self) -> ([f64; 3], [f64; 3]) {
        let r = &self.rotation;
        let sy = -r[(2, 0)];
        let cy_angle = sy.clamp(-1.0, 1.0).asin();
        let (cx_angle, cz_angle) = if sy.abs() > 1.0 - 1e-12 {
            // gimbal: fold roll into yaw
            (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
        } else {
            (
                r[(2, 1)].atan2(r[(2, 2)]),
                r[(1, 0)].atan2(r[(0, 0)]),
            )
        };
        (
            [self.translation.x, self.translation.y, self.translation.z],
            [
                cx_angle.to_degrees(),
                cy_angle.to_degrees(),
                cz_angle.to_degrees(),
            ],
        )
    }
}

/// Rigidly rotates `target` about the Y-axis of `axis_frame` by `angle` rad.
/// Points on that axis are fixed; everything else is conjugated:
/// `axis_frame ∘ rot_y(angle) ∘ axis_frame⁻¹ ∘ target`.
///
/// Callers keep |angle| ≤ π/2; the twist bounds make anything larger
/// meaningless for this tool.
pub fn rotate_about_axis_frame(target: &Pose, axis_frame: &Pose, angle: f64) -> Pose {
    debug_assert!(angle.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12);
    axis_frame
        .compose(&Pose::rot_y(angle))
        .compose(&axis_frame.inverse())
        .compose(target)
}
