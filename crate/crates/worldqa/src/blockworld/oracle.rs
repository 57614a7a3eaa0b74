//! Ground-truth predicates over (previous, current) state pairs. These are
//! the label source for dataset generation and the success reference for
//! evaluation, so conventions are pinned here:
//!
//! - `touching` uses a closed inequality: dist <= r_a + r_b + EPS_TOUCH.
//! - `up` means smaller y (matching the rendered image, where y = 0 is the
//!   top row); `down` is larger y.
//! - `moved_direction` asks for displacement along the axis greater than
//!   EPS_MOVE, so a diagonal move can answer yes for two directions.

use super::{Block, Vec2, WorldState, CENTER_HALF_WIDTH, EPS_MOVE, EPS_TOUCH};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use Direction::{Down, Left, Right, Up};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Left, Right, Up, Down];

    pub fn word(self) -> &'static str {
        match self {
            Left => "left",
            Right => "right",
            Up => "up",
            Down => "down",
        }
    }

    /// Phrase used in relative-position questions.
    pub fn relative_phrase(self) -> &'static str {
        match self {
            Left => "to the left of",
            Right => "to the right of",
            Up => "above",
            Down => "below",
        }
    }
}

/// Every question the template closure can ask about a scene, keyed by block
/// index (indices are stable within a scene).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKey {
    /// Are blocks a and b in contact? (a < b)
    Touching { a: usize, b: usize },
    /// Is the peg in contact with block b?
    PegTouching { b: usize },
    /// Is block b inside the central region?
    InCenter { b: usize },
    /// Is block a in direction `dir` of block b? (a < b canonical order)
    RelativeDir { a: usize, b: usize, dir: Direction },
    /// Did block b move (between prev and curr)?
    Moved { b: usize },
    /// Did block b move in direction `dir`?
    MovedDir { b: usize, dir: Direction },
    /// Did blocks a and b get closer together? (a < b)
    Closer { a: usize, b: usize },
    /// Did the peg get closer to block b?
    PegCloser { b: usize },
}

/// Predicate evaluator over a (prev, curr) state pair from the same scene.
pub struct Predicates<'a> {
    pub prev: &'a WorldState,
    pub curr: &'a WorldState,
}

/// Closed inequality on squared distances: exact at the representable
/// boundary, no sqrt rounding.
pub(crate) fn touch(a: Vec2, ra: f32, b: Vec2, rb: f32) -> bool {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let thr = ra + rb + EPS_TOUCH;
    dx * dx + dy * dy <= thr * thr
}

impl<'a> Predicates<'a> {
    pub fn new(prev: &'a WorldState, curr: &'a WorldState) -> Result<Self> {
        if !prev.same_scene(curr) {
            return Err(Error::InvalidArgument(
                "oracle_predicates: states come from different scenes".into(),
            ));
        }
        Ok(Predicates { prev, curr })
    }

    fn blk(&self, i: usize) -> &Block {
        &self.curr.blocks[i]
    }

    pub fn touching(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.blk(a), self.blk(b));
        touch(x.pos, x.radius, y.pos, y.radius)
    }

    pub fn peg_touching(&self, b: usize) -> bool {
        let blk = self.blk(b);
        touch(self.curr.peg_pos, self.curr.peg_radius, blk.pos, blk.radius)
    }

    pub fn in_center(&self, b: usize) -> bool {
        let p = self.blk(b).pos;
        (p.x - 0.5).abs() <= CENTER_HALF_WIDTH && (p.y - 0.5).abs() <= CENTER_HALF_WIDTH
    }

    pub fn relative_direction(&self, a: usize, b: usize, dir: Direction) -> bool {
        let (pa, pb) = (self.blk(a).pos, self.blk(b).pos);
        match dir {
            Left => pa.x < pb.x,
            Right => pa.x > pb.x,
            Up => pa.y < pb.y,
            Down => pa.y > pb.y,
        }
    }

    pub fn moved(&self, b: usize) -> bool {
        self.prev.blocks[b].pos.dist(self.curr.blocks[b].pos) > EPS_MOVE
    }

    pub fn moved_direction(&self, b: usize, dir: Direction) -> bool {
        let d = self.curr.blocks[b].pos.sub(self.prev.blocks[b].pos);
        match dir {
            Left => -d.x > EPS_MOVE,
            Right => d.x > EPS_MOVE,
            Up => -d.y > EPS_MOVE,
            Down => d.y > EPS_MOVE,
        }
    }

    pub fn closer(&self, a: usize, b: usize) -> bool {
        let before = self.prev.blocks[a].pos.dist(self.prev.blocks[b].pos);
        let after = self.curr.blocks[a].pos.dist(self.curr.blocks[b].pos);
        after < before - EPS_MOVE
    }

    pub fn peg_closer(&self, b: usize) -> bool {
        let before = self.prev.peg_pos.dist(self.prev.blocks[b].pos);
        let after = self.curr.peg_pos.dist(self.curr.blocks[b].pos);
        after < before - EPS_MOVE
    }

    pub fn answer(&self, key: QuestionKey) -> bool {
        match key {
            QuestionKey::Touching { a, b } => self.touching(a, b),
            QuestionKey::PegTouching { b } => self.peg_touching(b),
            QuestionKey::InCenter { b } => self.in_center(b),
            QuestionKey::RelativeDir { a, b, dir } => self.relative_direction(a, b, dir),
            QuestionKey::Moved { b } => self.moved(b),
            QuestionKey::MovedDir { b, dir } => self.moved_direction(b, dir),
            QuestionKey::Closer { a, b } => self.closer(a, b),
            QuestionKey::PegCloser { b } => self.peg_closer(b),
        }
    }
}

/// The full template closure for a scene with `n_blocks` blocks, in a fixed
/// deterministic order.
pub fn all_instantiations(n_blocks: usize) -> Vec<QuestionKey> {
    let mut keys = Vec::new();
    for a in 0..n_blocks {
        for b in (a + 1)..n_blocks {
            keys.push(QuestionKey::Touching { a, b });
        }
    }
    for b in 0..n_blocks {
        keys.push(QuestionKey::PegTouching { b });
    }
    for b in 0..n_blocks {
        keys.push(QuestionKey::InCenter { b });
    }
    for a in 0..n_blocks {
        for b in (a + 1)..n_blocks {
            for dir in Direction::ALL {
                keys.push(QuestionKey::RelativeDir { a, b, dir });
            }
        }
    }
    for b in 0..n_blocks {
        keys.push(QuestionKey::Moved { b });
    }
    for b in 0..n_blocks {
        for dir in Direction::ALL {
            keys.push(QuestionKey::MovedDir { b, dir });
        }
    }
    for a in 0..n_blocks {
        for b in (a + 1)..n_blocks {
            keys.push(QuestionKey::Closer { a, b });
        }
    }
    for b in 0..n_blocks {
        keys.push(QuestionKey::PegCloser { b });
    }
    keys
}

/// Boolean answers for every template instantiation over the pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSet {
    pub answers: Vec<(QuestionKey, bool)>,
}

impl PredicateSet {
    pub fn lookup(&self, key: QuestionKey) -> Option<bool> {
        self.answers.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
    }
}

pub fn oracle_predicates(prev: &WorldState, curr: &WorldState) -> Result<PredicateSet> {
    let p = Predicates::new(prev, curr)?;
    let answers = all_instantiations(curr.blocks.len())
        .into_iter()
        .map(|k| (k, p.answer(k)))
        .collect();
    Ok(PredicateSet { answers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::{sample_scene, step, Action, BlockShape, Color, SceneParams};

    fn state_with_blocks(positions: &[(f32, f32)]) -> WorldState {
        let colors = [Color::Red, Color::Green, Color::Blue, Color::Yellow];
        WorldState {
            peg_pos: Vec2::new(0.5, 0.9),
            peg_radius: 0.025,
            blocks: positions
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Block {
                    pos: Vec2::new(x, y),
                    radius: 0.035,
                    color: colors[i],
                    shape: BlockShape::ALL[i % 4],
                })
                .collect(),
            background: [30, 30, 35],
            step_count: 0,
            rng_state: 0,
        }
    }

    #[test]
    fn zero_horizon_nothing_moved_or_closer() {
        let s = state_with_blocks(&[(0.3, 0.5), (0.7, 0.5), (0.5, 0.2)]);
        let set = oracle_predicates(&s, &s).unwrap();
        for (k, v) in &set.answers {
            match k {
                QuestionKey::Moved { .. }
                | QuestionKey::MovedDir { .. }
                | QuestionKey::Closer { .. }
                | QuestionKey::PegCloser { .. } => assert!(!v, "{k:?} should be false"),
                _ => {}
            }
        }
    }

    #[test]
    fn relative_direction_matches_geometry() {
        let s = state_with_blocks(&[(0.3, 0.5), (0.7, 0.5)]);
        let p = Predicates::new(&s, &s).unwrap();
        assert!(p.relative_direction(0, 1, Direction::Left));
        assert!(!p.relative_direction(0, 1, Direction::Right));
        assert!(p.relative_direction(1, 0, Direction::Right));
    }

    #[test]
    fn touching_threshold_is_closed() {
        // dist exactly r_a + r_b + EPS_TOUCH counts as touching. Anchoring
        // one block at x = 0 makes the separation bit-exact.
        let d = 0.035f32 + 0.035 + EPS_TOUCH;
        let s = state_with_blocks(&[(0.0, 0.5), (d, 0.5)]);
        let p = Predicates::new(&s, &s).unwrap();
        assert!(p.touching(0, 1));
        let s2 = state_with_blocks(&[(0.0, 0.5), (d + 1e-4, 0.5)]);
        let p2 = Predicates::new(&s2, &s2).unwrap();
        assert!(!p2.touching(0, 1));
    }

    #[test]
    fn symmetry_properties() {
        let params = SceneParams::default();
        for seed in 0..30 {
            let scene = sample_scene(&params, seed);
            let prev = scene.initial_state();
            let mut curr = prev.clone();
            for k in 0..10 {
                curr = step(&curr, Action::clamped(0.02, if k % 2 == 0 { 0.01 } else { -0.02 }));
            }
            let p = Predicates::new(&prev, &curr).unwrap();
            for a in 0..prev.blocks.len() {
                for b in (a + 1)..prev.blocks.len() {
                    assert_eq!(p.touching(a, b), p.touching(b, a));
                    assert_eq!(p.closer(a, b), p.closer(b, a));
                    assert_eq!(
                        p.relative_direction(a, b, Direction::Left),
                        p.relative_direction(b, a, Direction::Right)
                    );
                    assert_eq!(
                        p.relative_direction(a, b, Direction::Up),
                        p.relative_direction(b, a, Direction::Down)
                    );
                }
            }
        }
    }

    #[test]
    fn in_center_uses_half_width_box() {
        let s = state_with_blocks(&[(0.5, 0.5), (0.5 + CENTER_HALF_WIDTH, 0.5), (0.75, 0.5)]);
        let p = Predicates::new(&s, &s).unwrap();
        assert!(p.in_center(0));
        assert!(p.in_center(1)); // boundary inclusive
        assert!(!p.in_center(2));
    }

    #[test]
    fn moved_and_direction_track_displacement() {
        let prev = state_with_blocks(&[(0.5, 0.5)]);
        let mut curr = prev.clone();
        curr.blocks[0].pos = Vec2::new(0.45, 0.52); // left 0.05, down 0.02
        let p = Predicates::new(&prev, &curr).unwrap();
        assert!(p.moved(0));
        assert!(p.moved_direction(0, Direction::Left));
        assert!(!p.moved_direction(0, Direction::Right));
        assert!(p.moved_direction(0, Direction::Down));
        assert!(!p.moved_direction(0, Direction::Up));
    }

    #[test]
    fn mismatched_scenes_error() {
        let a = state_with_blocks(&[(0.5, 0.5)]);
        let b = state_with_blocks(&[(0.5, 0.5), (0.7, 0.7)]);
        assert!(Predicates::new(&a, &b).is_err());
    }

    #[test]
    fn closure_size_for_three_blocks() {
        // 3 touching + 3 peg-touching + 3 in-center + 12 rel-dir + 3 moved
        // + 12 moved-dir + 3 closer + 3 peg-closer = 42
        assert_eq!(all_instantiations(3).len(), 42);
    }
}
