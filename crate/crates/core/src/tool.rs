//! End-of-arm tool geometry: twist-frame construction from the learned
//! offsets and waypoint-level manipulation plans.
//!
//! Conventions: a brick's engagement frame sits at its near lower corner
//! with X along the brick length and Z up. For disassembly the tool frame
//! `O_0` is that base frame (d_z = 0 is the brick base, d_z = side lever is
//! the side-lever contact). For assembly `O_0` is lifted to the knob-top
//! plane of the support. The twist frame offsets `O_0` by (d_x, 0, d_z) and
//! twists happen about its Y axis.

use std::fmt::Write as _;

use thiserror::Error;

use crate::pose::{rotate_about_axis_frame, Pose};
use crate::report::fmt_sig9;
use crate::world::{BrickDims, BrickKind, LegoWorld, Orientation, WorldError};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("target brick {0} is occluded from above")]
    OccludedTarget(u32),
    #[error("assembly cell is blocked or unsupported: {0}")]
    BlockedCell(String),
    #[error("twist spec outside bounds: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Tool geometry, mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EoatConfig {
    pub top_lever: f64,
    pub side_lever: f64,
    pub tool_length: f64,
}

impl EoatConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.top_lever <= 0.0 || self.side_lever <= 0.0 || self.tool_length <= 0.0 {
            return Err(PlanError::InvalidSpec(
                "tool lever and length must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManipulationMode {
    Assemble,
    Disassemble,
}

impl ManipulationMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Assemble => "assemble",
            Self::Disassemble => "disassemble",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PlanError> {
        match s {
            "assemble" => Ok(Self::Assemble),
            "disassemble" => Ok(Self::Disassemble),
            other => Err(PlanError::InvalidSpec(format!("mode `{other}`"))),
        }
    }
}

/// The manipulation parameters under learning, plus the mode they apply to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistSpec {
    pub mode: ManipulationMode,
    /// mm
    pub d_x: f64,
    /// mm
    pub d_z: f64,
    /// degrees
    pub theta_deg: f64,
}

impl TwistSpec {
    pub fn theta_rad(&self) -> f64 {
        self.theta_deg.to_radians()
    }

    /// Checks the learning-space bounds the tool was designed for.
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(0.0..=10.0).contains(&self.d_x) || !(0.0..=10.0).contains(&self.d_z) {
            return Err(PlanError::InvalidSpec(format!(
                "offsets d_x={} d_z={} outside [0, 10] mm",
                self.d_x, self.d_z
            )));
        }
        if !(0.0..=25.0).contains(&self.theta_deg) {
            return Err(PlanError::InvalidSpec(format!(
                "theta {} deg outside [0, 25]",
                self.theta_deg
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Insert,
    TwistArc,
    Retreat,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Approach => "approach",
            Self::Insert => "insert",
            Self::TwistArc => "twist_arc",
            Self::Retreat => "retreat",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Waypoint {
    pub pose: Pose,
    pub phase: Phase,
}

/// What a plan operates on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanTarget {
    Disassemble {
        brick: u32,
    },
    Assemble {
        kind: BrickKind,
        cell: (i32, i32),
        layer: u32,
        orientation: Orientation,
    },
}

/// Waypoint-level manipulation plan in tool (TCP) coordinates.
#[derive(Clone, Debug)]
pub struct ManipulationPlan {
    pub waypoints: Vec<Waypoint>,
    pub arc_steps: usize,
    pub mode: ManipulationMode,
    pub target: PlanTarget,
    pub spec: TwistSpec,
    /// The twist frame the arc rotates about, world coordinates.
    pub twist_frame: Pose,
    /// Flange sits this far up the tool Z axis from the TCP, mm.
    pub flange_offset: f64,
    /// TCP pose at full knob engagement (flat, untwisted).
    pub engaged_pose: Pose,
}

/// Plan shape parameters.
#[derive(Clone, Copy, Debug)]
pub struct PlanParams {
    pub arc_steps: usize,
    pub approach_height: f64,
    pub max_step_mm: f64,
    pub max_step_deg: f64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            arc_steps: 16,
            approach_height: 12.0,
            max_step_mm: 2.0,
            max_step_deg: 3.0,
        }
    }
}

/// Twist frame for a manipulation at `base_frame` (the engagement frame of
/// the target brick or placement cell).
///
/// Assemble: the frame sits at knob-top height, `d_x` along the brick
/// length. Disassemble: the frame sits `d_z` above the brick base at the
/// near edge.
pub fn twist_axis_frame(base_frame: &Pose, spec: &TwistSpec, dims: &BrickDims) -> Pose {
    let lift = match spec.mode {
        ManipulationMode::Assemble => dims.knob_height,
        ManipulationMode::Disassemble => 0.0,
    };
    base_frame.compose(&Pose::from_translation(spec.d_x, 0.0, lift + spec.d_z))
}

/// TCP orientation flips Z down onto the brick; X stays along the length.
fn engaged_tcp(base_frame: &Pose, kind: BrickKind, dims: &BrickDims, top_z: f64) -> Pose {
    let centre = Pose::from_translation(
        kind.length_knobs as f64 * dims.knob_pitch / 2.0,
        kind.width_knobs as f64 * dims.knob_pitch / 2.0,
        top_z,
    );
    base_frame
        .compose(&centre)
        .compose(&Pose::rot_x(std::f64::consts::PI))
}

fn lift(pose: &Pose, dz: f64) -> Pose {
    let mut p = *pose;
    p.translation.z += dz;
    p
}

/// Splits a straight vertical descent into steps within the step bound.
fn descend(from_height: f64, to_height: f64, base: &Pose, max_step: f64, phase: Phase, out: &mut Vec<Waypoint>) {
    let span = from_height - to_height;
    let steps = (span / max_step).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let h = from_height - span * k as f64 / steps as f64;
        out.push(Waypoint {
            pose: lift(base, h),
            phase,
        });
    }
}

/// Builds the approach / insert / twist_arc / retreat waypoint sequence for
/// one manipulation.
///
/// Disassemble: engage flat, twist up to theta about the axis, lift the
/// brick out. Assemble: arrive tilted by theta, twist down flat to seat,
/// release and lift straight up. The two arcs mirror each other.
pub fn plan_manipulation(
    world: &LegoWorld,
    target: PlanTarget,
    spec: &TwistSpec,
    eoat: &EoatConfig,
    params: &PlanParams,
) -> Result<ManipulationPlan, PlanError> {
    spec.validate()?;
    eoat.validate()?;
    assert!(params.arc_steps >= 1);
    let dims = world.dims;

    let (base_frame, kind) = match target {
        PlanTarget::Disassemble { brick } => {
            if spec.mode != ManipulationMode::Disassemble {
                return Err(PlanError::InvalidSpec("mode/target mismatch".into()));
            }
            if world.is_occluded(brick)? {
                return Err(PlanError::OccludedTarget(brick));
            }
            (world.brick_base_frame(brick)?, world.brick(brick)?.kind)
        }
        PlanTarget::Assemble {
            kind,
            cell,
            layer,
            orientation,
        } => {
            if spec.mode != ManipulationMode::Assemble {
                return Err(PlanError::InvalidSpec("mode/target mismatch".into()));
            }
            validate_assembly_site(world, kind, cell, layer, orientation)?;
            (world.cell_base_frame(cell, layer, orientation), kind)
        }
    };

    let axis = twist_axis_frame(&base_frame, spec, &dims);
    let engaged = engaged_tcp(&base_frame, kind, &dims, dims.brick_height);
    let insert_depth = dims.knob_height;
    let theta = spec.theta_rad();
    let arc_steps = params.arc_steps;
    let mut waypoints = Vec::new();

    match spec.mode {
        ManipulationMode::Disassemble => {
            // Slide onto the knobs from above, twist up, carry out.
            descend(
                params.approach_height + insert_depth,
                insert_depth,
                &engaged,
                params.max_step_mm,
                Phase::Approach,
                &mut waypoints,
            );
            descend(insert_depth, 0.0, &engaged, params.max_step_mm, Phase::Insert, &mut waypoints);
            for k in 1..=arc_steps {
                let angle = -theta * k as f64 / arc_steps as f64;
                waypoints.push(Waypoint {
                    pose: rotate_about_axis_frame(&engaged, &axis, angle),
                    phase: Phase::TwistArc,
                });
            }
            let carried = rotate_about_axis_frame(&engaged, &axis, -theta);
            let clearance = params.approach_height + insert_depth + dims.brick_height;
            let steps = (clearance / params.max_step_mm).ceil().max(1.0) as usize;
            for k in 1..=steps {
                waypoints.push(Waypoint {
                    pose: lift(&carried, clearance * k as f64 / steps as f64),
                    phase: Phase::Retreat,
                });
            }
        }
        ManipulationMode::Assemble => {
            // Arrive tilted, press flat about the axis, release, lift.
            let tilted = rotate_about_axis_frame(&engaged, &axis, -theta);
            descend(
                params.approach_height + insert_depth,
                insert_depth,
                &tilted,
                params.max_step_mm,
                Phase::Approach,
                &mut waypoints,
            );
            descend(insert_depth, 0.0, &tilted, params.max_step_mm, Phase::Insert, &mut waypoints);
            for k in 1..=arc_steps {
                let angle = -theta * (arc_steps - k) as f64 / arc_steps as f64;
                waypoints.push(Waypoint {
                    pose: rotate_about_axis_frame(&engaged, &axis, angle),
                    phase: Phase::TwistArc,
                });
            }
            let clearance = params.approach_height + insert_depth;
            let steps = (clearance / params.max_step_mm).ceil().max(1.0) as usize;
            for k in 1..=steps {
                waypoints.push(Waypoint {
                    pose: lift(&engaged, clearance * k as f64 / steps as f64),
                    phase: Phase::Retreat,
                });
            }
        }
    }

    let plan = ManipulationPlan {
        waypoints,
        arc_steps,
        mode: spec.mode,
        target,
        spec: *spec,
        twist_frame: axis,
        flange_offset: eoat.tool_length,
        engaged_pose: engaged,
    };
    plan.validate(params)?;
    Ok(plan)
}

fn validate_assembly_site(
    world: &LegoWorld,
    kind: BrickKind,
    cell: (i32, i32),
    layer: u32,
    orientation: Orientation,
) -> Result<(), PlanError> {
    // Dry-run the placement rules on a scratch copy.
    let mut scratch = world.clone();
    match scratch.place_brick(kind, cell, layer, orientation) {
        Ok(_) => {}
        Err(e) => return Err(PlanError::BlockedCell(e.to_string())),
    }
    // Support knobs must be exposed: nothing may already sit at this layer
    // or above over the footprint.
    let probe = crate::world::BrickInstance {
        id: 0,
        kind,
        cell,
        layer,
        orientation,
    };
    let fp = probe.footprint();
    for b in world.bricks() {
        if b.layer >= layer && b.footprint().iter().any(|c| fp.contains(c)) {
            return Err(PlanError::BlockedCell(format!(
                "cell {:?} occluded by brick {}",
                cell, b.id
            )));
        }
    }
    Ok(())
}

impl ManipulationPlan {
    /// Phase ordering and step-bound checks.
    pub fn validate(&self, params: &PlanParams) -> Result<(), PlanError> {
        let order = [Phase::Approach, Phase::Insert, Phase::TwistArc, Phase::Retreat];
        let mut rank = 0usize;
        for w in &self.waypoints {
            let r = order.iter().position(|p| *p == w.phase).unwrap();
            if r < rank {
                return Err(PlanError::InvalidSpec("phases out of order".into()));
            }
            rank = r;
        }
        let max_rot = params.max_step_deg.to_radians() + 1e-12;
        for pair in self.waypoints.windows(2) {
            let dt = pair[0].pose.translation_distance(&pair[1].pose);
            let dr = pair[0].pose.rotation_distance(&pair[1].pose);
            if dt > params.max_step_mm + 1e-9 || dr > max_rot {
                return Err(PlanError::InvalidSpec(format!(
                    "waypoint step {dt:.3} mm / {:.3} deg exceeds bound",
                    dr.to_degrees()
                )));
            }
        }
        Ok(())
    }

    pub fn phases(&self) -> Vec<Phase> {
        let mut out: Vec<Phase> = Vec::new();
        for w in &self.waypoints {
            if out.last() != Some(&w.phase) {
                out.push(w.phase);
            }
        }
        out
    }

    /// Flange pose for a TCP waypoint (tool hangs flange-down to the tip).
    pub fn flange_pose(&self, tcp: &Pose) -> Pose {
        tcp.compose(&Pose::from_translation(0.0, 0.0, -self.flange_offset))
    }

    /// Text dump: one waypoint per line, translation mm and XYZ angles deg.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "plan mode={} arc_steps={} theta_deg={} d_x={} d_z={}",
            self.mode.label(),
            self.arc_steps,
            fmt_sig9(self.spec.theta_deg),
            fmt_sig9(self.spec.d_x),
            fmt_sig9(self.spec.d_z),
        );
        for w in &self.waypoints {
            let (t, a) = w.pose.to_xyz_degrees();
            let _ = writeln!(
                s,
                "waypoint phase={} t={},{},{} r={},{},{}",
                w.phase.label(),
                fmt_sig9(t[0]),
                fmt_sig9(t[1]),
                fmt_sig9(t[2]),
                fmt_sig9(a[0]),
                fmt_sig9(a[1]),
                fmt_sig9(a[2]),
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;
    use crate::world::{PlateGrid, StructureStyle, Support};

    fn fixture() -> (LegoWorld, EoatConfig, PlanParams) {
        let dims = config::BricksFile::default_shipped().build().unwrap();
        let tightness = config::SurrogateFile::default_shipped().tightness_model(true);
        let world = LegoWorld::build_structure(
            PlateGrid::standard(Pose::identity()),
            dims,
            tightness,
            BrickKind::parse("1x2").unwrap(),
            StructureStyle::new(Support::Solid, 2).unwrap(),
            (10, 10),
            7,
        )
        .unwrap();
        let eoat = config::EoatFile::default_shipped().build().unwrap();
        (world, eoat, PlanParams::default())
    }

    fn spec(mode: ManipulationMode, theta: f64, d_x: f64, d_z: f64) -> TwistSpec {
        TwistSpec {
            mode,
            d_x,
            d_z,
            theta_deg: theta,
        }
    }

    #[test]
    fn zero_offsets_give_the_mode_frame() {
        let (world, _, _) = fixture();
        let dims = world.dims;
        let base = world.brick_base_frame(2).unwrap();
        let s = spec(ManipulationMode::Disassemble, 10.0, 0.0, 0.0);
        let f = twist_axis_frame(&base, &s, &dims);
        assert!(f.translation_distance(&base) < 1e-12);

        let s = spec(ManipulationMode::Assemble, 10.0, 0.0, 0.0);
        let f = twist_axis_frame(&base, &s, &dims);
        let expected = base.compose(&Pose::from_translation(0.0, 0.0, dims.knob_height));
        assert!(f.translation_distance(&expected) < 1e-12);
    }

    #[test]
    fn lever_length_offsets_land_on_lever_tips() {
        let (world, eoat, _) = fixture();
        let dims = world.dims;
        let base = world.brick_base_frame(2).unwrap();
        // Assembly axis d_x = top lever: at the lever tip along the length.
        let s = spec(ManipulationMode::Assemble, 12.0, eoat.top_lever, 0.0);
        let f = twist_axis_frame(&base, &s, &dims);
        let local = base.inverse().compose(&f);
        assert!((local.translation.x - 7.8).abs() < 1e-12);
        assert!((local.translation.z - dims.knob_height).abs() < 1e-12);
        // Disassembly axis d_z = side lever: side-lever height above base.
        let s = spec(ManipulationMode::Disassemble, 12.0, 0.0, eoat.side_lever);
        let f = twist_axis_frame(&base, &s, &dims);
        let local = base.inverse().compose(&f);
        assert!((local.translation.z - 3.2).abs() < 1e-12);
        assert!(local.translation.x.abs() < 1e-12);
    }

    #[test]
    fn disassembly_plan_has_ordered_phases() {
        let (world, eoat, params) = fixture();
        let s = spec(ManipulationMode::Disassemble, 12.0, 0.0, 3.2);
        let plan = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 2 },
            &s,
            &eoat,
            &params,
        )
        .unwrap();
        assert_eq!(
            plan.phases(),
            vec![Phase::Approach, Phase::Insert, Phase::TwistArc, Phase::Retreat]
        );
        let arc = plan
            .waypoints
            .iter()
            .filter(|w| w.phase == Phase::TwistArc)
            .count();
        assert_eq!(arc, params.arc_steps);
    }

    #[test]
    fn zero_theta_arc_collapses_but_plan_is_well_formed() {
        let (world, eoat, params) = fixture();
        let s = spec(ManipulationMode::Disassemble, 0.0, 0.0, 3.2);
        let plan = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 2 },
            &s,
            &eoat,
            &params,
        )
        .unwrap();
        let arc: Vec<_> = plan
            .waypoints
            .iter()
            .filter(|w| w.phase == Phase::TwistArc)
            .collect();
        assert_eq!(arc.len(), params.arc_steps);
        for w in &arc {
            assert!(w.pose.translation_distance(&plan.engaged_pose) < 1e-12);
        }
    }

    // Oracle: consecutive arc poses must differ by exactly theta/arc_steps
    // about the twist axis, measured through the rotation logarithm.
    #[test]
    fn arc_step_angles_match_rotation_log_oracle() {
        let (world, eoat, _) = fixture();
        let params = PlanParams {
            arc_steps: 8,
            ..PlanParams::default()
        };
        let s = spec(ManipulationMode::Disassemble, 12.0, 0.0, 3.2);
        let plan = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 2 },
            &s,
            &eoat,
            &params,
        )
        .unwrap();
        let arc: Vec<_> = plan
            .waypoints
            .iter()
            .filter(|w| w.phase == Phase::TwistArc)
            .collect();
        assert_eq!(arc.len(), 8);
        for pair in arc.windows(2) {
            let rel = pair[0].pose.rotation.transpose() * pair[1].pose.rotation;
            let angle = crate::kinematics::rotation_log(&rel).norm().to_degrees();
            assert!((angle - 1.5).abs() < 1e-9, "step angle {angle}");
        }
    }

    #[test]
    fn buried_brick_is_occluded() {
        let (world, eoat, params) = fixture();
        let s = spec(ManipulationMode::Disassemble, 12.0, 0.0, 3.2);
        let err = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 1 },
            &s,
            &eoat,
            &params,
        )
        .unwrap_err();
        assert_eq!(err, PlanError::OccludedTarget(1));
    }

    #[test]
    fn occupied_assembly_cell_rejected() {
        let (world, eoat, params) = fixture();
        let s = spec(ManipulationMode::Assemble, 12.0, 7.8, 0.0);
        let err = plan_manipulation(
            &world,
            PlanTarget::Assemble {
                kind: BrickKind::parse("1x2").unwrap(),
                cell: (10, 10),
                layer: 2,
                orientation: Orientation::Deg0,
            },
            &s,
            &eoat,
            &params,
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::BlockedCell(_)));
    }

    #[test]
    fn arc_keeps_twist_axis_points_fixed() {
        let (world, eoat, params) = fixture();
        let s = spec(ManipulationMode::Disassemble, 20.0, 0.0, 9.0);
        let plan = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 2 },
            &s,
            &eoat,
            &params,
        )
        .unwrap();
        // A point on the axis, tracked through every arc waypoint relative
        // to the engaged pose.
        let axis_point = plan.twist_frame.translation;
        let local = plan.engaged_pose.inverse().transform_point(&axis_point);
        for w in plan.waypoints.iter().filter(|w| w.phase == Phase::TwistArc) {
            let moved = w.pose.transform_point(&local);
            assert!((moved - axis_point).norm() < 1e-9);
        }
    }

    #[test]
    fn assemble_and_disassemble_plans_mirror() {
        let (mut world, eoat, params) = fixture();
        let top = world.highest_brick().unwrap().id;
        let brick = *world.brick(top).unwrap();
        let dis = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: top },
            &spec(ManipulationMode::Disassemble, 12.0, 0.0, 3.2),
            &eoat,
            &params,
        )
        .unwrap();
        world.remove_brick(top).unwrap();
        let asm = plan_manipulation(
            &world,
            PlanTarget::Assemble {
                kind: brick.kind,
                cell: brick.cell,
                layer: brick.layer,
                orientation: brick.orientation,
            },
            &spec(ManipulationMode::Assemble, 12.0, 0.0, 3.2),
            &eoat,
            &params,
        )
        .unwrap();
        assert_eq!(dis.phases(), asm.phases());
        // The assemble arc ends flat where the disassemble arc starts.
        let asm_last_arc = asm
            .waypoints
            .iter()
            .filter(|w| w.phase == Phase::TwistArc)
            .next_back()
            .unwrap();
        assert!(asm_last_arc.pose.translation_distance(&dis.engaged_pose) < 1e-9);
    }

    #[test]
    fn step_bounds_hold_for_extreme_specs() {
        let (world, eoat, params) = fixture();
        for theta in [1.0, 12.0, 25.0] {
            for d_z in [0.0, 5.0, 10.0] {
                let plan = plan_manipulation(
                    &world,
                    PlanTarget::Disassemble { brick: 2 },
                    &spec(ManipulationMode::Disassemble, theta, 0.0, d_z),
                    &eoat,
                    &params,
                )
                .unwrap();
                plan.validate(&params).unwrap();
            }
        }
    }

    #[test]
    fn plan_dump_lists_waypoints() {
        let (world, eoat, params) = fixture();
        let plan = plan_manipulation(
            &world,
            PlanTarget::Disassemble { brick: 2 },
            &spec(ManipulationMode::Disassemble, 12.0, 0.0, 3.2),
            &eoat,
            &params,
        )
        .unwrap();
        let dump = plan.dump();
        assert!(dump.starts_with("plan mode=disassemble"));
        assert_eq!(dump.lines().count(), plan.waypoints.len() + 1);
        assert!(dump.contains("phase=twist_arc"));
    }
}
