//! Deterministic 2D tabletop simulator: a round peg pushed by xy-delta
//! actions on a unit board, pushable colored/shaped blocks, oracle
//! predicates over state pairs, a 32x32 renderer, and scripted policies
//! for data collection.
//!
//! Everything is a value type and stepping is pure, so (seed, actions)
//! replays to bit-identical trajectories.

mod oracle;
mod policy;
mod render;
pub(crate) mod scene;
mod trajectory;

pub use oracle::{
    all_instantiations, oracle_predicates, Direction, Predicates, PredicateSet, QuestionKey,
};
pub use policy::{PolicyKind, PushDest, ScriptedPolicy};
pub use render::{render, Image, RENDER_SIZE};
pub use scene::{sample_scene, PairSet, Scene, SceneParams};
pub use scene::{DEFAULT_BACKGROUND, DEFAULT_BLOCK_RADIUS, DEFAULT_PEG_RADIUS};
pub use trajectory::{
    collect_trajectory, replay, task_success, TaskId, Trajectory, TrajectoryFile,
    PUSH_TOGETHER_MAX_DIST, SEPARATE_MIN_DIST,
};

use serde::{Deserialize, Serialize};

/// Per-component action bounds (board units per control tick).
pub const ACTION_MIN: f32 = -0.03;
pub const ACTION_MAX: f32 = 0.03;
/// Contact slack for `touching` predicates.
pub const EPS_TOUCH: f32 = 0.005;
/// Minimum displacement for `moved` / `closer` predicates.
pub const EPS_MOVE: f32 = 0.01;
/// Half-width of the central board region for `in_center`.
pub const CENTER_HALF_WIDTH: f32 = 0.2;
/// Episodes are cut off after this many environment steps (10 Hz notional).
pub const EPISODE_CAP: usize = 120;

const RESOLVE_PASSES: usize = 8;
const PUSH_EPS: f32 = 1e-6;
/// The peg sweep is split into sub-steps so a full-speed action cannot pass
/// through a block's center and flip the contact normal.
const SWEEP_SUBSTEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f32,
    pub y: f32,
}

impl Vec2 {
    pub fn new(x: f32, y: f32) -> Self {
        Vec2 { x, y }
    }

    pub fn dist(self, other: Vec2) -> f32 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scaled(self, s: f32) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn norm(self) -> f32 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Unit vector toward `other`, or +x when coincident.
    pub fn dir_to(self, other: Vec2) -> Vec2 {
        let d = other.sub(self);
        let n = d.norm();
        if n > 1e-9 {
            d.scaled(1.0 / n)
        } else {
            Vec2::new(1.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
}

impl Color {
    pub const ALL: [Color; 5] = [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Purple];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 50, 47],
            Color::Green => [70, 190, 80],
            Color::Blue => [55, 110, 230],
            Color::Yellow => [240, 225, 60],
            Color::Purple => [160, 80, 210],
        }
    }

    pub fn parse(s: &str) -> Option<Color> {
        Color::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockShape {
    Cube,
    Moon,
    Star,
    Pentagon,
}

impl BlockShape {
    pub const ALL: [BlockShape; 4] =
        [BlockShape::Cube, BlockShape::Moon, BlockShape::Star, BlockShape::Pentagon];

    pub fn name(self) -> &'static str {
        match self {
            BlockShape::Cube => "cube",
            BlockShape::Moon => "moon",
            BlockShape::Star => "star",
            BlockShape::Pentagon => "pentagon",
        }
    }

    pub fn parse(s: &str) -> Option<BlockShape> {
        BlockShape::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub pos: Vec2,
    pub radius: f32,
    pub color: Color,
    pub shape: BlockShape,
}

impl Block {
    /// "red cube" style name used in question text.
    pub fn display_name(&self) -> String {
        format!("{} {}", self.color.name(), self.shape.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f32,
    pub dy: f32,
}

impl Action {
    pub const ZERO: Action = Action { dx: 0.0, dy: 0.0 };

    /// Construct with components clamped to the action box.
    pub fn clamped(dx: f32, dy: f32) -> Action {
        Action { dx: dx.clamp(ACTION_MIN, ACTION_MAX), dy: dy.clamp(ACTION_MIN, ACTION_MAX) }
    }

    pub fn as_array(self) -> [f32; 2] {
        [self.dx, self.dy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub peg_pos: Vec2,
    pub peg_radius: f32,
    pub blocks: Vec<Block>,
    pub background: [u8; 3],
    pub step_count: u32,
    /// Seed the scene was derived from; carried for provenance.
    pub rng_state: u64,
}

impl WorldState {
    pub fn block_by_name(&self, color: Color, shape: BlockShape) -> Option<usize> {
        self.blocks.iter().position(|b| b.color == color && b.shape == shape)
    }

    pub fn block_by_color(&self, color: Color) -> Option<usize> {
        self.blocks.iter().position(|b| b.color == color)
    }

    /// True when both states describe the same scene configuration
    /// (identities and radii; positions may differ).
    pub fn same_scene(&self, other: &WorldState) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.peg_radius == other.peg_radius
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.color == b.color && a.shape == b.shape && a.radius == b.radius)
    }
}

fn clamp_to_board(p: Vec2, r: f32) -> Vec2 {
    Vec2::new(p.x.clamp(r, 1.0 - r), p.y.clamp(r, 1.0 - r))
}

/// Place `p` at distance >= `target` from `anchor`, preferring the current
/// contact normal and sliding along a wall when the normal push is blocked.
/// Falls back to the best effort position if pinned in a corner.
fn place_outside(p: Vec2, anchor: Vec2, target: f32, r: f32) -> Vec2 {
    let dir = anchor.dir_to(p);
    let q = clamp_to_board(anchor.add(dir.scaled(target + PUSH_EPS)), r);
    if q.dist(anchor) >= target {
        return q;
    }
    // Wall pinned. Keep the pinned coordinate and solve the free one.
    let try_slide_y = |qx: f32, sign: f32| -> Option<Vec2> {
        let dx = qx - anchor.x;
        let rest = target * target - dx * dx;
        if rest < 0.0 {
            return None;
        }
        let dy = rest.sqrt() + PUSH_EPS;
        let cand = clamp_to_board(Vec2::new(qx, anchor.y + sign * dy), r);
        (cand.dist(anchor) >= target).then_some(cand)
    };
    let try_slide_x = |qy: f32, sign: f32| -> Option<Vec2> {
        let dy = qy - anchor.y;
        let rest = target * target - dy * dy;
        if rest < 0.0 {
            return None;
        }
        let dx = rest.sqrt() + PUSH_EPS;
        let cand = clamp_to_board(Vec2::new(anchor.x + sign * dx, qy), r);
        (cand.dist(anchor) >= target).then_some(cand)
    };
    let sy = if dir.y >= 0.0 { 1.0 } else { -1.0 };
    let sx = if dir.x >= 0.0 { 1.0 } else { -1.0 };
    try_slide_y(q.x, sy)
        .or_else(|| try_slide_y(q.x, -sy))
        .or_else(|| try_slide_x(q.y, sx))
        .or_else(|| try_slide_x(q.y, -sx))
        .unwrap_or(q)
}

/// Advance one control tick: sweep the peg along the (clamped) action in
/// sub-steps, pushing any overlapped block out along the contact normal and
/// resolving block-block overlaps with a fixed-order Gauss-Seidel sweep
/// after each sub-step.
pub fn step(state: &WorldState, action: Action) -> WorldState {
    let mut s = state.clone();
    let a = Action::clamped(action.dx, action.dy);
    let sub = SWEEP_SUBSTEPS as f32;
    for _ in 0..SWEEP_SUBSTEPS {
        s.peg_pos = clamp_to_board(
            Vec2::new(s.peg_pos.x + a.dx / sub, s.peg_pos.y + a.dy / sub),
            s.peg_radius,
        );
        resolve_contacts(&mut s);
    }
    s.step_count += 1;
    s
}

fn resolve_contacts(s: &mut WorldState) {
    for _ in 0..RESOLVE_PASSES {
        let mut moved = false;
        for i in 0..s.blocks.len() {
            let target = s.peg_radius + s.blocks[i].radius;
            if s.blocks[i].pos.dist(s.peg_pos) < target {
                let np = place_outside(s.blocks[i].pos, s.peg_pos, target, s.blocks[i].radius);
                if np != s.blocks[i].pos {
                    s.blocks[i].pos = np;
                    moved = true;
                }
            }
        }
        for i in 0..s.blocks.len() {
            for j in (i + 1)..s.blocks.len() {
                moved |= separate_blocks(s, i, j);
            }
        }
        if !moved {
            break;
        }
    }
}

fn separate_blocks(s: &mut WorldState, i: usize, j: usize) -> bool {
    let (pi, pj) = (s.blocks[i].pos, s.blocks[j].pos);
    let target = s.blocks[i].radius + s.blocks[j].radius;
    let d = pi.dist(pj);
    if d >= target {
        return false;
    }
    let dir = pi.dir_to(pj);
    let need = target - d + PUSH_EPS;
    let qi = clamp_to_board(pi.add(dir.scaled(-need * 0.5)), s.blocks[i].radius);
    let qj = clamp_to_board(pj.add(dir.scaled(need * 0.5)), s.blocks[j].radius);
    s.blocks[i].pos = qi;
    s.blocks[j].pos = qj;
    if qi.dist(qj) < target {
        // One of them is wall pinned; move the other the full way.
        s.blocks[j].pos = place_outside(s.blocks[j].pos, s.blocks[i].pos, target, s.blocks[j].radius);
        if s.blocks[i].pos.dist(s.blocks[j].pos) < target {
            s.blocks[i].pos =
                place_outside(s.blocks[i].pos, s.blocks[j].pos, target, s.blocks[i].radius);
        }
    }
    true
}
