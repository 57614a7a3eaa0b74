//! Scripted data-collection policies: a proportional reach controller, a
//! two-phase push controller (approach the far side, then drive through the
//! block toward the destination), a separate controller built on push, and
//! a uniform random policy.

use super::{Action, Vec2, WorldState, ACTION_MAX, ACTION_MIN};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PushDest {
    /// Push toward another block.
    Block(usize),
    /// Push toward a fixed board point.
    Point(Vec2),
    /// Push directly away from another block.
    AwayFrom(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Drive the peg to contact with the target block.
    Reach { target: usize },
    /// Push `block` toward `dest`.
    PushTo { block: usize, dest: PushDest },
    /// Push `neighbor` away from `target`.
    Separate { target: usize, neighbor: usize },
    /// Uniform over the action box.
    Random,
}

pub struct ScriptedPolicy {
    kind: PolicyKind,
    rng: ChaCha8Rng,
    /// Optional per-component noise added before clamping (used to degrade
    /// experts when collecting weak-policy training sets).
    pub action_noise: f32,
}

const CONTACT_SLACK: f32 = 0.004;
const ALIGN_COS: f32 = 0.92;

impl ScriptedPolicy {
    pub fn new(kind: PolicyKind, state: &WorldState, seed: u64) -> Result<Self> {
        let n = state.blocks.len();
        let check = |i: usize| -> Result<()> {
            if i >= n {
                Err(Error::UnknownObject(format!("block index {i} (scene has {n})")))
            } else {
                Ok(())
            }
        };
        match &kind {
            PolicyKind::Reach { target } => check(*target)?,
            PolicyKind::PushTo { block, dest } => {
                check(*block)?;
                match dest {
                    PushDest::Block(b) | PushDest::AwayFrom(b) => check(*b)?,
                    PushDest::Point(_) => {}
                }
            }
            PolicyKind::Separate { target, neighbor } => {
                check(*target)?;
                check(*neighbor)?;
            }
            PolicyKind::Random => {}
        }
        Ok(ScriptedPolicy { kind, rng: rng_from_seed(seed), action_noise: 0.0 })
    }

    pub fn act(&mut self, state: &WorldState) -> Action {
        let mut a = match &self.kind {
            PolicyKind::Reach { target } => reach_action(state, *target),
            PolicyKind::PushTo { block, dest } => {
                if push_goal_met(state, *block, *dest) {
                    Action::ZERO
                } else {
                    let goal = dest_point(state, *block, *dest);
                    push_action(state, *block, goal)
                }
            }
            PolicyKind::Separate { target, neighbor } => {
                let dest = PushDest::AwayFrom(*target);
                if push_goal_met(state, *neighbor, dest) {
                    Action::ZERO
                } else {
                    let goal = dest_point(state, *neighbor, dest);
                    push_action(state, *neighbor, goal)
                }
            }
            PolicyKind::Random => Action::clamped(
                self.rng.gen_range(ACTION_MIN..ACTION_MAX),
                self.rng.gen_range(ACTION_MIN..ACTION_MAX),
            ),
        };
        if self.action_noise > 0.0 {
            a = Action::clamped(
                a.dx + self.rng.gen_range(-self.action_noise..self.action_noise),
                a.dy + self.rng.gen_range(-self.action_noise..self.action_noise),
            );
        }
        a
    }
}

/// Hold position once the push objective is comfortably achieved, instead of
/// shoving the pair around the board for the rest of the episode.
fn push_goal_met(state: &WorldState, block: usize, dest: PushDest) -> bool {
    let blk = &state.blocks[block];
    match dest {
        PushDest::Block(b) => {
            let other = &state.blocks[b];
            blk.pos.dist(other.pos) <= blk.radius + other.radius + 0.002
        }
        PushDest::Point(p) => blk.pos.dist(p) <= 0.05,
        PushDest::AwayFrom(b) => blk.pos.dist(state.blocks[b].pos) >= 0.16,
    }
}

fn dest_point(state: &WorldState, block: usize, dest: PushDest) -> Vec2 {
    match dest {
        PushDest::Block(b) => state.blocks[b].pos,
        PushDest::Point(p) => p,
        PushDest::AwayFrom(b) => {
            // A point far beyond `block` on the ray from `b` through it.
            let dir = state.blocks[b].pos.dir_to(state.blocks[block].pos);
            state.blocks[block].pos.add(dir.scaled(2.0))
        }
    }
}

/// Proportional controller toward contact distance; near-zero once touching.
fn reach_action(state: &WorldState, target: usize) -> Action {
    let blk = &state.blocks[target];
    let dir = state.peg_pos.dir_to(blk.pos);
    let gap = state.peg_pos.dist(blk.pos) - (state.peg_radius + blk.radius);
    let speed = gap.max(0.0).min(ACTION_MAX);
    Action::clamped(dir.x * speed, dir.y * speed)
}

/// Two-phase push: stage behind the block relative to the goal, then drive
/// through the block center toward the goal. When staging would collide with
/// the block, orbit around it tangentially.
fn push_action(state: &WorldState, block: usize, goal: Vec2) -> Action {
    let blk = &state.blocks[block];
    let contact = state.peg_radius + blk.radius;
    let push_dir = blk.pos.dir_to(goal);
    if push_dir.norm() < 1e-6 || blk.pos.dist(goal) < 1e-4 {
        return Action::ZERO;
    }
    // Staging point: just behind the block, opposite the goal.
    let staging = blk.pos.add(push_dir.scaled(-(contact + CONTACT_SLACK)));

    let to_block = state.peg_pos.dir_to(blk.pos);
    let aligned = to_block.x * push_dir.x + to_block.y * push_dir.y >= ALIGN_COS;
    let near_block = state.peg_pos.dist(blk.pos) <= contact + 3.0 * CONTACT_SLACK;

    if aligned && near_block {
        // Push phase: steer through the block center so the contact normal
        // stays pointed at the goal.
        let aim = blk.pos.add(push_dir.scaled(0.01));
        let dir = state.peg_pos.dir_to(aim);
        return Action::clamped(dir.x * ACTION_MAX, dir.y * ACTION_MAX);
    }

    // Approach phase. If the straight line to staging would shove the block,
    // orbit: move perpendicular to the block direction, on the side that
    // shortens the way to the staging point.
    let d_staging = state.peg_pos.dist(staging);
    let step = d_staging.min(ACTION_MAX);
    let blocked = {
        let d = state.peg_pos.dist(blk.pos);
        d < contact + 2.0 * CONTACT_SLACK && !aligned
    };
    if blocked {
        let tangent_a = Vec2::new(-to_block.y, to_block.x);
        let tangent_b = Vec2::new(to_block.y, -to_block.x);
        let da = state.peg_pos.add(tangent_a.scaled(ACTION_MAX)).dist(staging);
        let db = state.peg_pos.add(tangent_b.scaled(ACTION_MAX)).dist(staging);
        let t = if da <= db { tangent_a } else { tangent_b };
        // Blend a slight outward component so the orbit clears the block.
        let out = blk.pos.dir_to(state.peg_pos);
        let dir = Vec2::new(t.x + 0.35 * out.x, t.y + 0.35 * out.y);
        let n = dir.norm().max(1e-6);
        return Action::clamped(dir.x / n * ACTION_MAX, dir.y / n * ACTION_MAX);
    }
    let dir = state.peg_pos.dir_to(staging);
    Action::clamped(dir.x * step, dir.y * step)
}
