//! Scene sampling: which blocks exist, where everything starts, and what the
//! background looks like. A `Scene` is the full initial condition of an
//! episode; trajectories serialize it verbatim so replay never depends on
//! the sampler.

use super::{clamp_to_board, Block, BlockShape, Color, Vec2, WorldState};
use crate::rng::rng_from_seed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK_RADIUS: f32 = 0.035;
pub const DEFAULT_PEG_RADIUS: f32 = 0.025;
pub const DEFAULT_BACKGROUND: [u8; 3] = [28, 28, 34];

/// A set of (color, shape) pairings, used to keep held-out combinations out
/// of training scenes and to force them in OOD probes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairSet(pub Vec<(Color, BlockShape)>);

impl PairSet {
    pub fn contains(&self, color: Color, shape: BlockShape) -> bool {
        self.0.iter().any(|&(c, s)| c == color && s == shape)
    }
}

/// Knobs for the scene sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneParams {
    /// Block colors, in identity order; one block per color.
    pub colors: Vec<Color>,
    /// Shapes each block may take (combined with its color).
    pub shapes: Vec<BlockShape>,
    /// Pairings never produced by this sampler.
    pub excluded_pairs: PairSet,
    /// When set, block i takes exactly this pairing (color still from
    /// `colors`); used by evaluation scenes so task text matches the scene.
    pub fixed_shapes: Option<Vec<BlockShape>>,
    pub block_radius: f32,
    pub peg_radius: f32,
    pub background: [u8; 3],
    /// Probability that one block pair (or the peg and one block) spawns in
    /// contact, so zero-horizon "touching" questions see both answers.
    pub contact_spawn_prob: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            colors: vec![Color::Red, Color::Green, Color::Blue],
            shapes: BlockShape::ALL.to_vec(),
            excluded_pairs: PairSet::default(),
            fixed_shapes: None,
            block_radius: DEFAULT_BLOCK_RADIUS,
            peg_radius: DEFAULT_PEG_RADIUS,
            background: DEFAULT_BACKGROUND,
            contact_spawn_prob: 0.2,
        }
    }
}

/// Initial condition of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub background: [u8; 3],
    pub peg_pos: Vec2,
    pub peg_radius: f32,
    pub blocks: Vec<Block>,
}

impl Scene {
    pub fn initial_state(&self) -> WorldState {
        self.initial_state_with_seed(0)
    }

    pub fn initial_state_with_seed(&self, seed: u64) -> WorldState {
        WorldState {
            peg_pos: self.peg_pos,
            peg_radius: self.peg_radius,
            blocks: self.blocks.clone(),
            background: self.background,
            step_count: 0,
            rng_state: seed,
        }
    }
}

const SPAWN_MARGIN: f32 = 0.08;

/// Deterministically sample a scene from a seed: shapes per color, then
/// non-overlapping positions (with an occasional deliberate contact pair).
pub fn sample_scene(params: &SceneParams, seed: u64) -> Scene {
    let mut rng = rng_from_seed(seed);
    let n = params.colors.len();

    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    for (i, &color) in params.colors.iter().enumerate() {
        let shape = match &params.fixed_shapes {
            Some(fixed) => fixed[i % fixed.len()],
            None => {
                let allowed: Vec<BlockShape> = params
                    .shapes
                    .iter()
                    .copied()
                    .filter(|&s| !params.excluded_pairs.contains(color, s))
                    .collect();
                *allowed.choose(&mut rng).expect("every color needs at least one allowed shape")
            }
        };
        blocks.push(Block {
            pos: Vec2::new(0.0, 0.0),
            radius: params.block_radius,
            color,
            shape,
        });
    }

    // Positions: rejection sample with a minimum spacing, then optionally
    // pull one entity into contact with another.
    let spacing = 0.012f32;
    let mut placed: Vec<Vec2> = Vec::new();
    for b in blocks.iter_mut() {
        loop {
            let p = Vec2::new(
                rng.gen_range(SPAWN_MARGIN..1.0 - SPAWN_MARGIN),
                rng.gen_range(SPAWN_MARGIN..1.0 - SPAWN_MARGIN),
            );
            let ok = placed
                .iter()
                .all(|q| p.dist(*q) >= 2.0 * params.block_radius + spacing);
            if ok {
                b.pos = p;
                placed.push(p);
                break;
            }
        }
    }
    let peg_pos = loop {
        let p = Vec2::new(
            rng.gen_range(SPAWN_MARGIN..1.0 - SPAWN_MARGIN),
            rng.gen_range(SPAWN_MARGIN..1.0 - SPAWN_MARGIN),
        );
        if placed.iter().all(|q| p.dist(*q) >= params.block_radius + params.peg_radius + spacing) {
            break p;
        }
    };

    let mut scene =
        Scene { background: params.background, peg_pos, peg_radius: params.peg_radius, blocks };

    if rng.gen_bool(params.contact_spawn_prob) {
        // Move entity `a` next to entity `b` (distance just inside the
        // touching threshold, never penetrating).
        let n_entities = scene.blocks.len() + 1; // + peg
        let a = rng.gen_range(0..n_entities);
        let mut b = rng.gen_range(0..n_entities - 1);
        if b >= a {
            b += 1;
        }
        let (anchor, anchor_r) = if b < scene.blocks.len() {
            (scene.blocks[b].pos, scene.blocks[b].radius)
        } else {
            (scene.peg_pos, scene.peg_radius)
        };
        let mover_r =
            if a < scene.blocks.len() { scene.blocks[a].radius } else { scene.peg_radius };
        let gap = rng.gen_range(0.0005f32..0.004);
        let angle = rng.gen_range(0.0f32..std::f32::consts::TAU);
        let d = anchor_r + mover_r + gap;
        let p = clamp_to_board(
            Vec2::new(anchor.x + d * angle.cos(), anchor.y + d * angle.sin()),
            mover_r,
        );
        // Only accept if the new spot doesn't penetrate anyone else.
        let clear = scene
            .blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .all(|(_, blk)| p.dist(blk.pos) >= blk.radius + mover_r)
            && (a == scene.blocks.len()
                || b == scene.blocks.len()
                || p.dist(scene.peg_pos) >= scene.peg_radius + mover_r);
        if clear && p.dist(anchor) >= anchor_r + mover_r {
            if a < scene.blocks.len() {
                scene.blocks[a].pos = p;
            } else {
                scene.peg_pos = p;
            }
        }
    }

    scene
}
