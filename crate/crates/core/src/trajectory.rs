//! Jerk-bounded position controllers.
//!
//! Both controllers discretise a [`ManipulationPlan`] into a control
//! sequence of per-step jerk commands at resolution `dt`. Between
//! consecutive waypoints the motion is a seven-segment S-curve
//! (jerk / hold / -jerk / coast / -jerk / hold / jerk) that starts and ends
//! at rest, so every waypoint is a dwell point.
//!
//! The joint controller plans the S-curves in joint space and never exceeds
//! the joint control limits. The Cartesian controller plans them along the
//! Cartesian path and maps samples through IK; its joint-space jerk is
//! reported by finite differences and deliberately not clamped, so limit
//! violations show up as a flag instead.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::kinematics::{rotation_log, ArmModel, JointVector, KinematicsError, ARM_DOF};
use crate::pose::Pose;
use crate::report::fmt_sig9;
use crate::tool::ManipulationPlan;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("horizon {horizon:.3} s below minimum feasible {minimum:.3} s")]
    InfeasibleHorizon { horizon: f64, minimum: f64 },
    #[error("inverse kinematics failed at waypoint {index}: {source}")]
    IkFailure {
        index: usize,
        source: KinematicsError,
    },
    #[error("control limits must satisfy u_min < 0 < u_max")]
    BadLimits,
}

/// Per-joint control bounds. Controls are jerk commands, rad/s^3.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlLimits {
    pub u_min: [f64; ARM_DOF],
    pub u_max: [f64; ARM_DOF],
    pub accel: [f64; ARM_DOF],
    pub vel: [f64; ARM_DOF],
}

impl ControlLimits {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for i in 0..ARM_DOF {
            if !(self.u_min[i] < 0.0 && self.u_max[i] > 0.0)
                || self.accel[i] <= 0.0
                || self.vel[i] <= 0.0
            {
                return Err(TrajectoryError::BadLimits);
            }
        }
        Ok(())
    }

    fn jerk_cap(&self, j: usize) -> f64 {
        self.u_max[j].min(-self.u_min[j])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for i in 0..ARM_DOF {
            out.u_min[i] *= factor;
            out.u_max[i] *= factor;
            out.accel[i] *= factor;
            out.vel[i] *= factor;
        }
        out
    }
}

/// Cartesian-space control bounds (mm/s^3, mm/s^2, mm/s) plus the weight
/// that folds orientation change into path length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianLimits {
    pub jerk: f64,
    pub accel: f64,
    pub vel: f64,
    pub rotation_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    JointJpc,
    CartesianJpc,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::JointJpc => "joint",
            Self::CartesianJpc => "cartesian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(Self::JointJpc),
            "cartesian" => Some(Self::CartesianJpc),
            _ => None,
        }
    }
}

/// Discretised control trajectory.
#[derive(Clone, Debug)]
pub struct ControlSequence {
    /// T_steps x n jerk commands.
    pub steps: Vec<[f64; ARM_DOF]>,
    pub dt: f64,
    pub n: usize,
    /// Joint position at the start of the trajectory.
    pub start: [f64; ARM_DOF],
    /// Joint position after each step; consistent with triple integration
    /// of `steps` from `start` at rest.
    pub realized: Vec<[f64; ARM_DOF]>,
    /// Sample indices where a waypoint dwell ends (segment boundaries).
    pub boundaries: Vec<usize>,
    /// Set when any reported jerk exceeds the joint limits (Cartesian JPC
    /// only; the joint JPC never violates).
    pub jerk_violation: bool,
}

impl ControlSequence {
    pub fn t_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn peak_jerk(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0f64, |m, u| m.max(u.abs()))
    }

    /// Tabular export: time, then position/velocity/acceleration/jerk per
    /// joint.
    pub fn export_table(&self) -> String {
        let mut out = String::new();
        out.push_str("time");
        for j in 0..self.n {
            out.push_str(&format!(",q{j},v{j},a{j},u{j}"));
        }
        out.push('\n');
        let mut q = self.start;
        let mut v = [0.0; ARM_DOF];
        let mut a = [0.0; ARM_DOF];
        for (k, u) in self.steps.iter().enumerate() {
            let dt = self.dt;
            for j in 0..ARM_DOF {
                q[j] += v[j] * dt + a[j] * dt * dt / 2.0 + u[j] * dt * dt * dt / 6.0;
                v[j] += a[j] * dt + u[j] * dt * dt / 2.0;
                a[j] += u[j] * dt;
            }
            out.push_str(&fmt_sig9((k + 1) as f64 * self.dt));
            for j in 0..self.n {
                out.push_str(&format!(
                    ",{},{},{},{}",
                    fmt_sig9(q[j]),
                    fmt_sig9(v[j]),
                    fmt_sig9(a[j]),
                    fmt_sig9(u[j])
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean per-step L1 control magnitude: `(1/T_steps) * sum_t |u_t|_1`.
pub fn control_effort(seq: &ControlSequence) -> f64 {
    debug_assert!(!seq.steps.is_empty());
    if seq.steps.is_empty() {
        return 0.0;
    }
    let total: f64 = seq
        .steps
        .iter()
        .map(|row| row.iter().map(|u| u.abs()).sum::<f64>())
        .sum();
    total / seq.steps.len() as f64
}

// ---------------------------------------------------------------------------
// S-curve primitives
// ---------------------------------------------------------------------------

/// Continuous minimum-time phase durations (t_jerk, t_accel, t_coast) for a
/// rest-to-rest move of |d| under (jerk, accel, vel) limits.
fn min_time_phases(d: f64, jerk: f64, accel: f64, vel: f64) -> (f64, f64, f64) {
    if d <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let t1 = (d / (2.0 * jerk)).cbrt();
    if jerk * t1 <= accel && jerk * t1 * t1 <= vel {
        return (t1, 0.0, 0.0);
    }
    if jerk * t1 > accel {
        // acceleration saturates
        let t1 = accel / jerk;
        let t2 = (-3.0 * t1 + (t1 * t1 + 4.0 * d / accel).sqrt()) / 2.0;
        let v_peak = accel * (t1 + t2);
        if v_peak <= vel {
            return (t1, t2.max(0.0), 0.0);
        }
        let t2 = (vel / accel - t1).max(0.0);
        let t3 = (d / vel - 2.0 * t1 - t2).max(0.0);
        return (t1, t2, t3);
    }
    // velocity saturates before acceleration
    if (vel * jerk).sqrt() <= accel {
        let t1 = (vel / jerk).sqrt();
        let t3 = (d / vel - 2.0 * t1).max(0.0);
        (t1, 0.0, t3)
    } else {
        let t1 = accel / jerk;
        let t2 = (vel / accel - t1).max(0.0);
        let t3 = (d / vel - 2.0 * t1 - t2).max(0.0);
        (t1, t2, t3)
    }
}

/// Exact displacement of the seven-segment shape with unit jerk and phase
/// durations (t1, t2, t3).
fn unit_displacement(t1: f64, t2: f64, t3: f64) -> f64 {
    t1 * (t1 + t2) * (2.0 * t1 + t2 + t3)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Shape {
    n1: usize,
    n2: usize,
    n3: usize,
}

impl Shape {
    fn samples(&self) -> usize {
        4 * self.n1 + 2 * self.n2 + self.n3
    }
}

/// One waypoint-to-waypoint segment of a joint-space profile.
#[derive(Clone, Debug)]
struct Segment {
    shape: Shape,
    /// Allocated samples (>= shape.samples(); excess extends the coast).
    n_total: usize,
    delta: [f64; ARM_DOF],
    /// Signed jerk amplitude per joint.
    jerk: [f64; ARM_DOF],
    idle: bool,
}

const IDLE_EPS: f64 = 1e-12;

/// Static (horizon-independent) description of one segment: per-joint
/// continuous minimum phases and the quantised minimum shape.
#[derive(Clone, Debug)]
struct SegmentPlan {
    delta: [f64; ARM_DOF],
    min_shape: Shape,
    idle: bool,
}

impl SegmentPlan {
    fn new(delta: [f64; ARM_DOF], limits: &ControlLimits, dt: f64) -> Self {
        let mut n1 = 0usize;
        let mut n2 = 0usize;
        let mut n3 = 0usize;
        let mut idle = true;
        for j in 0..ARM_DOF {
            let d = delta[j].abs();
            if d <= IDLE_EPS {
                continue;
            }
            idle = false;
            let (t1, t2, t3) = min_time_phases(d, limits.jerk_cap(j), limits.accel[j], limits.vel[j]);
            n1 = n1.max((t1 / dt).ceil().max(1.0) as usize);
            n2 = n2.max((t2 / dt).ceil() as usize);
            n3 = n3.max((t3 / dt).ceil() as usize);
        }
        SegmentPlan {
            delta,
            min_shape: Shape { n1, n2, n3 },
            idle,
        }
    }

    fn min_samples(&self) -> usize {
        if self.idle {
            0
        } else {
            self.min_shape.samples()
        }
    }

    /// Resolves jerk amplitudes for a shape; `None` when any joint would
    /// exceed its limits.
    fn solve(&self, shape: Shape, limits: &ControlLimits, dt: f64) -> Option<[f64; ARM_DOF]> {
        let t1 = shape.n1 as f64 * dt;
        let t2 = shape.n2 as f64 * dt;
        let t3 = shape.n3 as f64 * dt;
        let du = unit_displacement(t1, t2, t3);
        let mut jerk = [0.0; ARM_DOF];
        for j in 0..ARM_DOF {
            let d = self.delta[j];
            if d.abs() <= IDLE_EPS {
                continue;
            }
            let amp = d.abs() / du;
            let tol = 1.0 + 1e-9;
            if amp > limits.jerk_cap(j) * tol
                || amp * t1 > limits.accel[j] * tol
                || amp * t1 * (t1 + t2) > limits.vel[j] * tol
            {
                return None;
            }
            jerk[j] = amp * d.signum();
        }
        Some(jerk)
    }

    /// Builds the segment for `n_total` samples (must be >= min_samples).
    fn build(&self, n_total: usize, limits: &ControlLimits, dt: f64) -> Option<Segment> {
        if self.idle {
            return Some(Segment {
                shape: Shape { n1: 0, n2: 0, n3: 0 },
                n_total,
                delta: self.delta,
                jerk: [0.0; ARM_DOF],
                idle: true,
            });
        }
        if n_total < self.min_samples() {
            return None;
        }
        // Preferred: stretch the whole shape with the allocation (keeps the
        // pure 1/T^3 jerk scaling); fall back to the minimum shape with a
        // longer coast when limits bind.
        let n1 = (n_total / 4).max(1);
        let rem = n_total - 4 * n1.min(n_total / 4).max(if n_total >= 4 { 1 } else { 0 });
        let quarters = if n_total >= 4 {
            let n1 = (n_total / 4).max(1);
            let rem = n_total - 4 * n1;
            let n2 = rem / 2;
            let n3 = rem - 2 * n2;
            Some(Shape { n1, n2, n3 })
        } else {
            None
        };
        let _ = (n1, rem);
        if let Some(shape) = quarters {
            if let Some(jerk) = self.solve(shape, limits, dt) {
                return Some(Segment {
                    shape,
                    n_total,
                    delta: self.delta,
                    jerk,
                    idle: false,
                });
            }
        }
        let shape = Shape {
            n3: self.min_shape.n3 + (n_total - self.min_samples()),
            ..self.min_shape
        };
        let jerk = self.solve(shape, limits, dt)?;
        Some(Segment {
            shape,
            n_total,
            delta: self.delta,
            jerk,
            idle: false,
        })
    }
}

/// A fully resolved joint-space profile for one horizon.
#[derive(Clone, Debug)]
pub struct JointProfile {
    segments: Vec<Segment>,
    dt: f64,
    start: [f64; ARM_DOF],
}

impl JointProfile {
    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(|s| s.n_total).sum()
    }

    /// Mean per-step L1 jerk, computed without materialising samples.
    pub fn effort(&self) -> f64 {
        let steps = self.total_samples().max(1) as f64;
        let total: f64 = self
            .segments
            .iter()
            .map(|s| {
                s.jerk
                    .iter()
                    .map(|j| j.abs() * 4.0 * s.shape.n1 as f64)
                    .sum::<f64>()
            })
            .sum();
        total / steps
    }

    pub fn peak_jerk(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.jerk.iter())
            .fold(0.0f64, |m, j| m.max(j.abs()))
    }

    /// Materialises the jerk staircase and integrates it exactly.
    pub fn materialize(&self) -> ControlSequence {
        let n_steps = self.total_samples();
        let mut steps = Vec::with_capacity(n_steps);
        let mut realized = Vec::with_capacity(n_steps);
        let mut boundaries = Vec::with_capacity(self.segments.len());
        let mut q = self.start;
        let mut v = [0.0; ARM_DOF];
        let mut a = [0.0; ARM_DOF];
        let dt = self.dt;
        for seg in &self.segments {
            let Shape { n1, n2, n3 } = seg.shape;
            let coast_extra = seg.n_total - seg.shape.samples();
            let phases: [(usize, f64); 7] = [
                (n1, 1.0),
                (n2, 0.0),
                (n1, -1.0),
                (n3 + coast_extra, 0.0),
                (n1, -1.0),
                (n2, 0.0),
                (n1, 1.0),
            ];
            for (count, sign) in phases {
                for _ in 0..count {
                    let mut u = [0.0; ARM_DOF];
                    for j in 0..ARM_DOF {
                        u[j] = seg.jerk[j] * sign;
                        q[j] += v[j] * dt + a[j] * dt * dt / 2.0 + u[j] * dt * dt * dt / 6.0;
                        v[j] += a[j] * dt + u[j] * dt * dt / 2.0;
                        a[j] += u[j] * dt;
                    }
                    steps.push(u);
                    realized.push(q);
                }
            }
            boundaries.push(steps.len());
        }
        ControlSequence {
            steps,
            dt,
            n: ARM_DOF,
            start: self.start,
            realized,
            boundaries,
            jerk_violation: false,
        }
    }
}

/// Horizon-independent part of joint-JPC generation: waypoint IK plus the
/// per-segment minimum shapes. Reused by the learning loop and the grid
/// oracle so every caller prices a horizon identically.
#[derive(Clone, Debug)]
pub struct PreparedJointPlan {
    pub waypoint_q: Vec<JointVector>,
    plans: Vec<SegmentPlan>,
    dt: f64,
}

impl PreparedJointPlan {
    pub fn new(
        arm: &ArmModel,
        plan: &ManipulationPlan,
        limits: &ControlLimits,
        dt: f64,
    ) -> Result<Self, TrajectoryError> {
        limits.validate()?;
        assert!(dt > 0.0);
        let mut waypoint_q = Vec::with_capacity(plan.waypoints.len());
        let mut seed = arm.ik_seed;
        for (index, w) in plan.waypoints.iter().enumerate() {
            let target = plan.flange_pose(&w.pose);
            let q = arm
                .inverse_kinematics(&target, &seed)
                .map_err(|source| TrajectoryError::IkFailure { index, source })?;
            seed = q;
            waypoint_q.push(q);
        }
        let mut plans = Vec::new();
        for pair in waypoint_q.windows(2) {
            let mut delta = [0.0; ARM_DOF];
            for j in 0..ARM_DOF {
                delta[j] = pair[1].0[j] - pair[0].0[j];
            }
            plans.push(SegmentPlan::new(delta, limits, dt));
        }
        Ok(Self {
            waypoint_q,
            plans,
            dt,
        })
    }

    /// Smallest horizon (in whole samples) any feasible generation needs.
    pub fn min_samples(&self) -> usize {
        self.plans.iter().map(|p| p.min_samples()).sum()
    }

    pub fn minimum_horizon(&self) -> f64 {
        self.min_samples() as f64 * self.dt
    }

    /// Resolves the profile for a horizon. Fails when the horizon is below
    /// the quantised minimum.
    pub fn build(&self, horizon: f64, limits: &ControlLimits) -> Result<JointProfile, TrajectoryError> {
        let n_total = ((horizon / self.dt) + 0.5).floor().max(1.0) as usize;
        let min = self.min_samples();
        if n_total < min {
            return Err(TrajectoryError::InfeasibleHorizon {
                horizon,
                minimum: self.minimum_horizon(),
            });
        }
        // Deterministic proportional split of the surplus samples.
        let weights: Vec<usize> = self.plans.iter().map(|p| p.min_samples().max(1)).collect();
        let w_total: usize = weights.len().max(1);
        let w_sum: usize = weights.iter().sum::<usize>().max(1);
        let _ = w_total;
        let extra = n_total - min;
        let mut cum = 0usize;
        let mut given = 0usize;
        let mut segments = Vec::with_capacity(self.plans.len());
        for (plan, w) in self.plans.iter().zip(weights.iter()) {
            cum += w;
            let upto = (extra * cum + w_sum / 2) / w_sum;
            let share = upto - given;
            given = upto;
            let n_i = plan.min_samples() + share;
            let seg = plan
                .build(n_i, limits, self.dt)
                .ok_or(TrajectoryError::InfeasibleHorizon {
                    horizon,
                    minimum: self.minimum_horizon(),
                })?;
            segments.push(seg);
        }
        // Empty plans (single waypoint) or rounding shortfall: pad with an
        // idle segment so the sequence always has n_total samples.
        let allocated: usize = segments.iter().map(|s| s.n_total).sum();
        if allocated < n_total {
            segments.push(Segment {
                shape: Shape { n1: 0, n2: 0, n3: 0 },
                n_total: n_total - allocated,
                delta: [0.0; ARM_DOF],
                jerk: [0.0; ARM_DOF],
                idle: true,
            });
        }
        let start = self.waypoint_q.first().map(|q| q.0).unwrap_or([0.0; ARM_DOF]);
        Ok(JointProfile {
            segments,
            dt: self.dt,
            start,
        })
    }
}

/// Joint-based jerk-bounded position controller.
///
/// Produces a piecewise S-curve joint trajectory visiting the IK solutions
/// of all plan waypoints in order, total duration = `horizon` (rounded to
/// `dt`), with every jerk sample within limits.
pub fn generate_joint_jpc(
    arm: &ArmModel,
    plan: &ManipulationPlan,
    horizon: f64,
    limits: &ControlLimits,
    dt: f64,
) -> Result<ControlSequence, TrajectoryError> {
    let prepared = PreparedJointPlan::new(arm, plan, limits, dt)?;
    Ok(prepared.build(horizon, limits)?.materialize())
}

/// Smallest horizon for which [`generate_joint_jpc`] succeeds, by bisection
/// to 1 ms.
pub fn minimum_feasible_time(
    arm: &ArmModel,
    plan: &ManipulationPlan,
    limits: &ControlLimits,
    dt: f64,
) -> Result<f64, TrajectoryError> {
    let prepared = PreparedJointPlan::new(arm, plan, limits, dt)?;
    if prepared.min_samples() == 0 {
        return Ok(0.0);
    }
    let feasible = |t: f64| prepared.build(t, limits).is_ok();
    let mut hi = 1.0f64;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 600.0 {
            return Err(TrajectoryError::InfeasibleHorizon {
                horizon: hi,
                minimum: prepared.minimum_horizon(),
            });
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-3 {
        let mid = (lo + hi) / 2.0;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Cartesian-based jerk-bounded position controller.
///
/// The S-curves run along the Cartesian path (translation plus scaled
/// rotation); each sample maps through IK. Joint-space jerk is recovered by
/// finite differences and reported unclamped; `jerk_violation` flags any
/// sample beyond the joint limits.
pub fn generate_cartesian_jpc(
    arm: &ArmModel,
    plan: &ManipulationPlan,
    horizon: f64,
    cartesian: &CartesianLimits,
    joint_limits: &ControlLimits,
    dt: f64,
) -> Result<ControlSequence, TrajectoryError> {
    assert!(dt > 0.0 && cartesian.jerk > 0.0 && cartesian.accel > 0.0 && cartesian.vel > 0.0);
    // Path lengths per segment.
    let poses: Vec<Pose> = plan.waypoints.iter().map(|w| plan.flange_pose(&w.pose)).collect();
    if poses.is_empty() {
        return Err(TrajectoryError::InfeasibleHorizon {
            horizon,
            minimum: 0.0,
        });
    }
    let mut lengths = Vec::with_capacity(poses.len().saturating_sub(1));
    for pair in poses.windows(2) {
        let dp = pair[0].translation_distance(&pair[1]);
        let dr = pair[0].rotation_distance(&pair[1]) * cartesian.rotation_scale;
        lengths.push(dp.max(dr));
    }
    let scalar_limits = scalar_limits(cartesian);
    let plans: Vec<SegmentPlan> = lengths
        .iter()
        .map(|&len| {
            let mut delta = [0.0; ARM_DOF];
            delta[0] = len;
            SegmentPlan::new(delta, &scalar_limits, dt)
        })
        .collect();
    let min: usize = plans.iter().map(|p| p.min_samples()).sum();
    let n_total = ((horizon / dt) + 0.5).floor().max(1.0) as usize;
    if n_total < min {
        return Err(TrajectoryError::InfeasibleHorizon {
            horizon,
            minimum: min as f64 * dt,
        });
    }

    // Allocate and materialise the path-parameter profile per segment, then
    // chase it with IK.
    let weights: Vec<usize> = plans.iter().map(|p| p.min_samples().max(1)).collect();
    let w_sum: usize = weights.iter().sum::<usize>().max(1);
    let extra = n_total - min;
    let mut cum = 0usize;
    let mut given = 0usize;

    let mut q_path: Vec<[f64; ARM_DOF]> = Vec::with_capacity(n_total + 1);
    let mut seed = arm.ik_seed;
    let q0 = arm
        .inverse_kinematics(&poses[0], &seed)
        .map_err(|source| TrajectoryError::IkFailure { index: 0, source })?;
    seed = q0;
    q_path.push(q0.0);
    let mut boundaries = Vec::with_capacity(plans.len());

    for (i, (plan_i, w)) in plans.iter().zip(weights.iter()).enumerate() {
        cum += w;
        let upto = (extra * cum + w_sum / 2) / w_sum;
        let share = upto - given;
        given = upto;
        let n_i = plan_i.min_samples() + share;
        let seg = plan_i
            .build(n_i, &scalar_limits, dt)
            .ok_or(TrajectoryError::InfeasibleHorizon {
                horizon,
                minimum: min as f64 * dt,
            })?;
        // Integrate the scalar profile to get the path parameter per sample.
        let len = lengths[i];
        let mut s = 0.0f64;
        let mut v = 0.0f64;
        let mut a = 0.0f64;
        let Shape { n1, n2, n3 } = seg.shape;
        let coast_extra = seg.n_total - seg.shape.samples();
        let phases: [(usize, f64); 7] = [
            (n1, 1.0),
            (n2, 0.0),
            (n1, -1.0),
            (n3 + coast_extra, 0.0),
            (n1, -1.0),
            (n2, 0.0),
            (n1, 1.0),
        ];
        let from = poses[i];
        let to = poses[i + 1];
        let rel_log = rotation_log(&(from.rotation.transpose() * to.rotation));
        for (count, sign) in phases {
            for _ in 0..count {
                let u = seg.jerk[0] * sign;
                s += v * dt + a * dt * dt / 2.0 + u * dt * dt * dt / 6.0;
                v += a * dt + u * dt * dt / 2.0;
                a += u * dt;
                let f = if len > IDLE_EPS { (s / len).clamp(0.0, 1.0) } else { 1.0 };
                let pose = interpolate(&from, &to, &rel_log, f);
                let q = arm
                    .inverse_kinematics(&pose, &seed)
                    .map_err(|source| TrajectoryError::IkFailure { index: i + 1, source })?;
                seed = q;
                q_path.push(q.0);
            }
        }
        boundaries.push(q_path.len() - 1);
    }
    while q_path.len() < n_total + 1 {
        q_path.push(*q_path.last().unwrap());
    }

    // Recover controls so that triple integration reproduces the IK path.
    let mut steps = Vec::with_capacity(n_total);
    let mut realized = Vec::with_capacity(n_total);
    let mut v = [0.0; ARM_DOF];
    let mut a = [0.0; ARM_DOF];
    let mut violation = false;
    for k in 0..n_total {
        let mut u = [0.0; ARM_DOF];
        for j in 0..ARM_DOF {
            let dq = q_path[k + 1][j] - q_path[k][j] - v[j] * dt - a[j] * dt * dt / 2.0;
            u[j] = 6.0 * dq / (dt * dt * dt);
            v[j] += a[j] * dt + u[j] * dt * dt / 2.0;
            a[j] += u[j] * dt;
            if u[j].abs() > joint_limits.jerk_cap(j) {
                violation = true;
            }
        }
        steps.push(u);
        realized.push(q_path[k + 1]);
    }
    Ok(ControlSequence {
        steps,
        dt,
        n: ARM_DOF,
        start: q_path[0],
        realized,
        boundaries,
        jerk_violation: violation,
    })
}

fn scalar_limits(c: &CartesianLimits) -> ControlLimits {
    let mut l = ControlLimits {
        u_min: [-c.jerk; ARM_DOF],
        u_max: [c.jerk; ARM_DOF],
        accel: [c.accel; ARM_DOF],
        vel: [c.vel; ARM_DOF],
    };
    // Only index 0 is used for the scalar profile.
    l.u_min[0] = -c.jerk;
    l.u_max[0] = c.jerk;
    l
}

fn interpolate(from: &Pose, to: &Pose, rel_log: &Vector3<f64>, f: f64) -> Pose {
    let translation = from.translation + (to.translation - from.translation) * f;
    let rotation = from.rotation * rotation_exp(&(rel_log * f));
    Pose {
        rotation,
        translation,
    }
}

/// Rodrigues formula: axis-angle vector to rotation matrix.
pub fn rotation_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let angle = w.norm();
    if angle < 1e-12 {
        let k = skew(w);
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let axis = w / angle;
    let k = skew(&axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
