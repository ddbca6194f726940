//! Ground-truth world model: plates, brick geometry, placed structures and
//! per-interface connection tightness.
//!
//! A `LegoWorld` is a value owned by exactly one simulation episode;
//! concurrent episodes clone their own copies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::pose::Pose;
use crate::report::fmt_sig9;
use crate::seeds::{hash01, mix};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("footprint out of plate bounds at cell ({0}, {1})")]
    OutOfBounds(i32, i32),
    #[error("brick overlaps an existing brick in layer {0}")]
    Overlap(u32),
    #[error("unknown brick id {0}")]
    UnknownBrick(u32),
    #[error("unknown knob index {0}")]
    UnknownKnob(usize),
    #[error("invalid structure style: {0}")]
    InvalidStyle(String),
    #[error("brick has no support below")]
    Unsupported,
    #[error("brick {0} is occluded from above")]
    Occluded(u32),
}

/// Rectangular brick footprint in knob counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BrickKind {
    pub width_knobs: u32,
    pub length_knobs: u32,
}

impl BrickKind {
    pub fn new(width_knobs: u32, length_knobs: u32) -> Result<Self, WorldError> {
        let ok = matches!(width_knobs, 1 | 2)
            && matches!(length_knobs, 2 | 4)
            && width_knobs <= length_knobs;
        if !ok {
            return Err(WorldError::InvalidStyle(format!(
                "unsupported brick kind {width_knobs}x{length_knobs}"
            )));
        }
        Ok(Self {
            width_knobs,
            length_knobs,
        })
    }

    pub fn parse(s: &str) -> Result<Self, WorldError> {
        let (w, l) = s
            .split_once('x')
            .ok_or_else(|| WorldError::InvalidStyle(format!("bad brick kind `{s}`")))?;
        let w: u32 = w
            .parse()
            .map_err(|_| WorldError::InvalidStyle(format!("bad brick kind `{s}`")))?;
        let l: u32 = l
            .parse()
            .map_err(|_| WorldError::InvalidStyle(format!("bad brick kind `{s}`")))?;
        Self::new(w, l)
    }

    pub fn knob_count(&self) -> usize {
        (self.width_knobs * self.length_knobs) as usize
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.width_knobs, self.length_knobs)
    }
}

/// Brick dimensional constants, mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrickDims {
    pub knob_pitch: f64,
    pub brick_height: f64,
    pub knob_height: f64,
    pub top_lever: f64,
    pub side_lever: f64,
}

impl BrickDims {
    pub fn validate(&self) -> Result<(), WorldError> {
        let all_pos = self.knob_pitch > 0.0
            && self.brick_height > 0.0
            && self.knob_height > 0.0
            && self.top_lever > 0.0
            && self.side_lever > 0.0;
        if !all_pos {
            return Err(WorldError::InvalidStyle(
                "brick dimensions must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Deg0,
    Deg90,
}

impl Orientation {
    pub fn parse(v: u32) -> Result<Self, WorldError> {
        match v {
            0 => Ok(Self::Deg0),
            90 => Ok(Self::Deg90),
            _ => Err(WorldError::InvalidStyle(format!("orientation {v}"))),
        }
    }

    pub fn degrees(&self) -> u32 {
        match self {
            Self::Deg0 => 0,
            Self::Deg90 => 90,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Solid,
    Hollow,
}

impl Support {
    pub fn parse(s: &str) -> Result<Self, WorldError> {
        match s {
            "solid" => Ok(Self::Solid),
            "hollow" => Ok(Self::Hollow),
            other => Err(WorldError::InvalidStyle(format!("support `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Solid => "solid",
            Self::Hollow => "hollow",
        }
    }
}

/// Tower style for the evaluation structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructureStyle {
    pub support: Support,
    pub height_layers: u32,
}

impl StructureStyle {
    pub fn new(support: Support, height_layers: u32) -> Result<Self, WorldError> {
        if height_layers < 1 || height_layers > 10 {
            return Err(WorldError::InvalidStyle(format!(
                "height {height_layers} outside 1..10"
            )));
        }
        if support == Support::Hollow && height_layers < 2 {
            return Err(WorldError::InvalidStyle(
                "hollow support requires height >= 2".into(),
            ));
        }
        Ok(Self {
            support,
            height_layers,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateGrid {
    pub rows: u32,
    pub cols: u32,
    pub origin: Pose,
}

impl PlateGrid {
    pub fn standard(origin: Pose) -> Self {
        Self {
            rows: 48,
            cols: 48,
            origin,
        }
    }
}

/// What an interface's lower side rests on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LowerRef {
    Plate,
    Brick(u32),
}

/// One brick-to-support connection with its sampled per-knob tightness.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionState {
    pub upper: u32,
    pub lower: LowerRef,
    /// One release threshold per engaged knob pair, N*mm.
    pub per_knob_tightness: Vec<f64>,
    /// Engaged cells, plate coordinates (row, col).
    pub engaged_cells: Vec<(i32, i32)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrickInstance {
    pub id: u32,
    pub kind: BrickKind,
    /// Minimum-corner cell (row, col) of the footprint.
    pub cell: (i32, i32),
    pub layer: u32,
    pub orientation: Orientation,
}

impl BrickInstance {
    /// Occupied cells, sorted (row, col).
    pub fn footprint(&self) -> Vec<(i32, i32)> {
        let (rows, cols) = self.footprint_extent();
        let mut cells = Vec::with_capacity((rows * cols) as usize);
        for r in 0..rows {
            for c in 0..cols {
                cells.push((self.cell.0 + r as i32, self.cell.1 + c as i32));
            }
        }
        cells
    }

    /// (rows, cols) spanned on the plate.
    pub fn footprint_extent(&self) -> (u32, u32) {
        match self.orientation {
            Orientation::Deg0 => (self.kind.width_knobs, self.kind.length_knobs),
            Orientation::Deg90 => (self.kind.length_knobs, self.kind.width_knobs),
        }
    }

    /// Cells of the two end knob columns along the brick's length.
    pub fn end_columns(&self) -> Vec<(i32, i32)> {
        let len = self.kind.length_knobs as i32;
        let wid = self.kind.width_knobs as i32;
        let mut cells = Vec::new();
        for w in 0..wid {
            for l in [0, len - 1] {
                let (r, c) = match self.orientation {
                    Orientation::Deg0 => (self.cell.0 + w, self.cell.1 + l),
                    Orientation::Deg90 => (self.cell.0 + l, self.cell.1 + w),
                };
                if !cells.contains(&(r, c)) {
                    cells.push((r, c));
                }
            }
        }
        cells.sort_unstable();
        cells
    }

    /// Distance of a cell's knob centre from the brick's near edge along the
    /// brick length, mm.
    pub fn knob_x_along_length(&self, cell: (i32, i32), pitch: f64) -> f64 {
        let idx = match self.orientation {
            Orientation::Deg0 => cell.1 - self.cell.1,
            Orientation::Deg90 => cell.0 - self.cell.0,
        };
        (idx as f64 + 0.5) * pitch
    }
}

/// Tightness sampling model; lives with the world so worlds stay
/// self-contained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TightnessModel {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Interface threshold clamp, fraction of nominal.
    pub clamp_frac: f64,
    /// Per-cell deterministic factor amplitude.
    pub position_amplitude: f64,
    /// When false every draw is the nominal midpoint and the position factor
    /// is 1 (fully deterministic worlds).
    pub noise: bool,
}

impl TightnessModel {
    pub fn nominal(&self) -> f64 {
        self.tau_min + self.tau_max
    }

    /// Hard upper bound on any interface release threshold this model can
    /// produce (used by the binding-force heuristic in the simulator).
    pub fn worst_case_release(&self) -> f64 {
        if !self.noise {
            return self.nominal();
        }
        self.nominal() * (1.0 + self.clamp_frac) * (1.0 + self.position_amplitude)
    }
}

#[derive(Clone, Debug)]
pub struct LegoWorld {
    pub plate: PlateGrid,
    pub dims: BrickDims,
    pub tightness: TightnessModel,
    seed: u64,
    /// Deterministic per-world tightness factor (position dependent).
    position_factor: f64,
    bricks: BTreeMap<u32, BrickInstance>,
    /// Lower interfaces keyed by upper brick id.
    interfaces: BTreeMap<u32, Vec<ConnectionState>>,
    next_id: u32,
    next_stream: u64,
}

impl LegoWorld {
    pub fn empty(plate: PlateGrid, dims: BrickDims, tightness: TightnessModel, seed: u64) -> Self {
        Self {
            plate,
            dims,
            tightness,
            seed,
            position_factor: 1.0,
            bricks: BTreeMap::new(),
            interfaces: BTreeMap::new(),
            next_id: 1,
            next_stream: 0,
        }
    }

    /// Builds a uniform tower of `style.height_layers` bricks at `cell`.
    /// Tightness is sampled deterministically from `seed`; the per-position
    /// factor comes from the cell indices.
    pub fn build_structure(
        plate: PlateGrid,
        dims: BrickDims,
        tightness: TightnessModel,
        kind: BrickKind,
        style: StructureStyle,
        cell: (i32, i32),
        seed: u64,
    ) -> Result<Self, WorldError> {
        let mut world = Self::empty(plate, dims, tightness, seed);
        if tightness.noise {
            world.position_factor =
                1.0 + tightness.position_amplitude * (2.0 * hash01(mix(cell.0 as u64, cell.1 as u64)) - 1.0);
        }
        for layer in 1..=style.height_layers {
            world.place_brick_with_support(kind, cell, layer, Orientation::Deg0, style.support)?;
        }
        Ok(world)
    }

    pub fn position_factor(&self) -> f64 {
        self.position_factor
    }

    pub fn brick(&self, id: u32) -> Result<&BrickInstance, WorldError> {
        self.bricks.get(&id).ok_or(WorldError::UnknownBrick(id))
    }

    pub fn bricks(&self) -> impl Iterator<Item = &BrickInstance> {
        self.bricks.values()
    }

    pub fn brick_count(&self) -> usize {
        self.bricks.len()
    }

    pub fn highest_brick(&self) -> Option<&BrickInstance> {
        self.bricks.values().max_by_key(|b| (b.layer, b.id))
    }

    fn in_bounds(&self, cell: (i32, i32)) -> bool {
        cell.0 >= 0
            && cell.1 >= 0
            && cell.0 < self.plate.rows as i32
            && cell.1 < self.plate.cols as i32
    }

    pub fn brick_at(&self, cell: (i32, i32), layer: u32) -> Option<&BrickInstance> {
        self.bricks
            .values()
            .find(|b| b.layer == layer && b.footprint().contains(&cell))
    }

    /// True when some brick overlaps `id`'s footprint one layer up.
    pub fn is_occluded(&self, id: u32) -> Result<bool, WorldError> {
        let brick = self.brick(id)?;
        let fp = brick.footprint();
        Ok(self
            .bricks
            .values()
            .any(|b| b.layer == brick.layer + 1 && b.footprint().iter().any(|c| fp.contains(c))))
    }

    /// Places a brick engaging every supported cell under its footprint.
    pub fn place_brick(
        &mut self,
        kind: BrickKind,
        cell: (i32, i32),
        layer: u32,
        orientation: Orientation,
    ) -> Result<u32, WorldError> {
        self.place_brick_with_support(kind, cell, layer, orientation, Support::Solid)
    }

    fn place_brick_with_support(
        &mut self,
        kind: BrickKind,
        cell: (i32, i32),
        layer: u32,
        orientation: Orientation,
        support: Support,
    ) -> Result<u32, WorldError> {
        assert!(layer >= 1, "layers are 1-based");
        let instance = BrickInstance {
            id: self.next_id,
            kind,
            cell,
            layer,
            orientation,
        };
        let fp = instance.footprint();
        for &c in &fp {
            if !self.in_bounds(c) {
                return Err(WorldError::OutOfBounds(c.0, c.1));
            }
        }
        for b in self.bricks.values() {
            if b.layer == layer && b.footprint().iter().any(|c| fp.contains(c)) {
                return Err(WorldError::Overlap(layer));
            }
        }

        // Engagement pattern: hollow support restricts to the end knob
        // columns along the brick length.
        let pattern: Vec<(i32, i32)> = match support {
            Support::Solid => fp.clone(),
            Support::Hollow => instance.end_columns(),
        };

        let mut connections: Vec<(LowerRef, Vec<(i32, i32)>)> = Vec::new();
        if layer == 1 {
            connections.push((LowerRef::Plate, pattern));
        } else {
            let mut per_lower: BTreeMap<u32, Vec<(i32, i32)>> = BTreeMap::new();
            for &c in &pattern {
                if let Some(b) = self.brick_at(c, layer - 1) {
                    per_lower.entry(b.id).or_default().push(c);
                }
            }
            if per_lower.is_empty() {
                return Err(WorldError::Unsupported);
            }
            for (lower, cells) in per_lower {
                connections.push((LowerRef::Brick(lower), cells));
            }
        }

        let id = instance.id;
        self.next_id += 1;
        let mut states = Vec::new();
        for (lower, cells) in connections {
            let tightness = self.sample_tightness(cells.len());
            states.push(ConnectionState {
                upper: id,
                lower,
                per_knob_tightness: tightness,
                engaged_cells: cells,
            });
        }
        self.interfaces.insert(id, states);
        self.bricks.insert(id, instance);
        Ok(id)
    }

    fn sample_tightness(&mut self, knobs: usize) -> Vec<f64> {
        let stream = self.next_stream;
        self.next_stream += 1;
        let model = &self.tightness;
        if !model.noise {
            return vec![(model.tau_min + model.tau_max) / 2.0; knobs];
        }
        let mut state = mix(self.seed, stream);
        (0..knobs)
            .map(|i| {
                let u = hash01(mix(state, i as u64));
                state = mix(state, 0x9e37_79b9_7f4a_7c15 ^ i as u64);
                model.tau_min + u * (model.tau_max - model.tau_min)
            })
            .collect()
    }

    /// Effective release threshold of an interface, N*mm. Twice the mean
    /// per-knob tightness (peel works row by row), clamped, then scaled by
    /// the world's position factor.
    pub fn release_threshold(&self, state: &ConnectionState) -> f64 {
        let n = state.per_knob_tightness.len().max(1) as f64;
        let mean: f64 = state.per_knob_tightness.iter().sum::<f64>() / n;
        let nominal = self.tightness.nominal();
        let lo = nominal * (1.0 - self.tightness.clamp_frac);
        let hi = nominal * (1.0 + self.tightness.clamp_frac);
        (2.0 * mean).clamp(lo, hi) * self.position_factor
    }

    /// The connection record between `id` and its primary support (unique in
    /// every shipped scenario; first by lower reference otherwise).
    pub fn interface_below(&self, id: u32) -> Result<&ConnectionState, WorldError> {
        self.brick(id)?;
        self.interfaces
            .get(&id)
            .and_then(|v| v.first())
            .ok_or(WorldError::UnknownBrick(id))
    }

    pub fn interfaces_of(&self, id: u32) -> Result<&[ConnectionState], WorldError> {
        self.brick(id)?;
        Ok(self.interfaces.get(&id).map(|v| v.as_slice()).unwrap_or(&[]))
    }

    /// Interfaces along the support chain starting at `id`: the brick's own
    /// lower interfaces first, then everything reachable below, in
    /// breadth-first order. Each entry carries the layer depth from the
    /// target (1 = the target's own interface).
    pub fn support_chain(&self, id: u32) -> Result<Vec<(usize, &ConnectionState)>, WorldError> {
        self.brick(id)?;
        let mut out = Vec::new();
        let mut frontier = vec![id];
        let mut depth = 1usize;
        let mut visited = vec![id];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for upper in frontier {
                for state in self.interfaces.get(&upper).into_iter().flatten() {
                    out.push((depth, state));
                    if let LowerRef::Brick(b) = state.lower {
                        if !visited.contains(&b) {
                            visited.push(b);
                            next.push(b);
                        }
                    }
                }
            }
            frontier = next;
            depth += 1;
        }
        Ok(out)
    }

    /// World pose of knob `knob_index` (row-major over the footprint) on top
    /// of brick `id`.
    pub fn knob_world_pose(&self, id: u32, knob_index: usize) -> Result<Pose, WorldError> {
        let brick = self.brick(id)?;
        let fp = brick.footprint();
        let &(r, c) = fp.get(knob_index).ok_or(WorldError::UnknownKnob(knob_index))?;
        let local = Pose::from_translation(
            (c as f64 + 0.5) * self.dims.knob_pitch,
            (r as f64 + 0.5) * self.dims.knob_pitch,
            brick.layer as f64 * self.dims.brick_height,
        );
        Ok(self.plate.origin.compose(&local))
    }

    /// Frame anchored at the brick's near lower corner: X along the brick
    /// length, Z up, at the brick's base plane.
    pub fn brick_base_frame(&self, id: u32) -> Result<Pose, WorldError> {
        let brick = self.brick(id)?;
        Ok(self.cell_base_frame(brick.cell, brick.layer, brick.orientation))
    }

    /// Same frame for a prospective placement.
    pub fn cell_base_frame(&self, cell: (i32, i32), layer: u32, orientation: Orientation) -> Pose {
        let corner = Pose::from_translation(
            cell.1 as f64 * self.dims.knob_pitch,
            cell.0 as f64 * self.dims.knob_pitch,
            (layer as f64 - 1.0) * self.dims.brick_height,
        );
        let oriented = match orientation {
            Orientation::Deg0 => corner,
            Orientation::Deg90 => corner.compose(&Pose::rot_z(std::f64::consts::FRAC_PI_2)),
        };
        self.plate.origin.compose(&oriented)
    }

    /// Removes an exposed brick. Fails when bricks rest on it.
    pub fn remove_brick(&mut self, id: u32) -> Result<BrickInstance, WorldError> {
        if self.is_occluded(id)? {
            return Err(WorldError::Occluded(id));
        }
        let has_dependents = self
            .interfaces
            .values()
            .flatten()
            .any(|s| s.lower == LowerRef::Brick(id));
        if has_dependents {
            return Err(WorldError::Occluded(id));
        }
        let brick = self.bricks.remove(&id).ok_or(WorldError::UnknownBrick(id))?;
        self.interfaces.remove(&id);
        Ok(brick)
    }

    /// Human-readable snapshot: bricks then interfaces, stable order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "plate {} {}", self.plate.rows, self.plate.cols);
        for b in self.bricks.values() {
            let _ = writeln!(
                s,
                "brick id={} kind={} cell={},{} layer={} orient={}",
                b.id,
                b.kind.label(),
                b.cell.0,
                b.cell.1,
                b.layer,
                b.orientation.degrees()
            );
        }
        for states in self.interfaces.values() {
            for st in states {
                let lower = match st.lower {
                    LowerRef::Plate => "plate".to_string(),
                    LowerRef::Brick(id) => format!("brick:{id}"),
                };
                let tight: Vec<String> =
                    st.per_knob_tightness.iter().map(|t| fmt_sig9(*t)).collect();
                let _ = writeln!(
                    s,
                    "interface upper={} lower={} knobs={} tightness={}",
                    st.upper,
                    lower,
                    st.per_knob_tightness.len(),
                    tight.join(",")
                );
            }
        }
        s
    }

    /// Snapshot of the structure only: brick placements and interface
    /// topology, no tightness values (those re-sample on re-assembly).
    pub fn structural_snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "plate {} {}", self.plate.rows, self.plate.cols);
        let mut placements: Vec<String> = self
            .bricks
            .values()
            .map(|b| {
                format!(
                    "brick kind={} cell={},{} layer={} orient={}",
                    b.kind.label(),
                    b.cell.0,
                    b.cell.1,
                    b.layer,
                    b.orientation.degrees()
                )
            })
            .collect();
        placements.sort();
        for p in placements {
            let _ = writeln!(s, "{p}");
        }
        s
    }
}
