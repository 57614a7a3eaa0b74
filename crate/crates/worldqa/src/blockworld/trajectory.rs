//! Trajectories: collection, bit-exact replay, on-disk schema, and
//! ground-truth task success.

use super::{
    step, Action, Predicates, Scene, ScriptedPolicy, WorldState,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A rollout: initial scene, the actions taken, and every intermediate
/// state (`states.len() == actions.len() + 1`). Images are re-rendered on
/// demand rather than stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub scene: Scene,
    pub actions: Vec<Action>,
    pub states: Vec<WorldState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state(&self, i: usize) -> &WorldState {
        &self.states[i]
    }

    pub fn final_state(&self) -> &WorldState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Roll a policy for `len` steps from the scene's initial state.
pub fn collect_trajectory(
    scene: &Scene,
    seed: u64,
    policy: &mut ScriptedPolicy,
    len: usize,
) -> Trajectory {
    let mut states = Vec::with_capacity(len + 1);
    let mut actions = Vec::with_capacity(len);
    let mut s = scene.initial_state_with_seed(seed);
    states.push(s.clone());
    for _ in 0..len {
        let a = policy.act(&s);
        s = step(&s, a);
        actions.push(a);
        states.push(s.clone());
    }
    Trajectory { seed, scene: scene.clone(), actions, states }
}

/// Recompute all states from a scene and action list. Bit-identical to the
/// original collection.
pub fn replay(scene: &Scene, seed: u64, actions: &[Action]) -> Trajectory {
    let mut states = Vec::with_capacity(actions.len() + 1);
    let mut s = scene.initial_state_with_seed(seed);
    states.push(s.clone());
    for a in actions {
        s = step(&s, *a);
        states.push(s.clone());
    }
    Trajectory { seed, scene: scene.clone(), actions: actions.to_vec(), states }
}

/// On-disk schema: one JSON file per trajectory holding (seed, scene,
/// actions); states are reconstructed by replay on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub seed: u64,
    pub scene: Scene,
    pub actions: Vec<[f32; 2]>,
    /// Hash of the config that produced this file, for provenance.
    #[serde(default)]
    pub config_hash: String,
}

impl TrajectoryFile {
    pub fn from_trajectory(t: &Trajectory, config_hash: &str) -> Self {
        TrajectoryFile {
            seed: t.seed,
            scene: t.scene.clone(),
            actions: t.actions.iter().map(|a| a.as_array()).collect(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: TrajectoryFile = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        Ok(file)
    }

    pub fn into_trajectory(self) -> Trajectory {
        let actions: Vec<Action> =
            self.actions.iter().map(|&[dx, dy]| Action { dx, dy }).collect();
        replay(&self.scene, self.seed, &actions)
    }
}

/// Ground-truth task definitions used for evaluation. Thresholds are in
/// board units: separation requires pairwise distance over 0.1, pushing
/// together requires final distance under 0.075.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskId {
    /// Peg touched the target block at any step.
    Reach { target: usize },
    /// Distance from target to every listed neighbor exceeds 0.1 at the end.
    Separate { target: usize, neighbors: Vec<usize> },
    /// Final center distance between the two blocks is below 0.075.
    PushTogether { a: usize, b: usize },
    /// Blocks a,b touch at some step t1 and block a is in the center region
    /// at some step t2 >= t1.
    TwoStage { a: usize, b: usize },
}

pub const SEPARATE_MIN_DIST: f32 = 0.1;
pub const PUSH_TOGETHER_MAX_DIST: f32 = 0.075;

pub fn task_success(task: &TaskId, traj: &Trajectory) -> Result<bool> {
    let n = traj.scene.blocks.len();
    let check = |i: usize| -> Result<()> {
        if i >= n {
            Err(Error::UnknownObject(format!("block index {i} (scene has {n})")))
        } else {
            Ok(())
        }
    };
    match task {
        TaskId::Reach { target } => {
            check(*target)?;
            Ok(traj.states.iter().any(|s| {
                let b = &s.blocks[*target];
                super::oracle::touch(s.peg_pos, s.peg_radius, b.pos, b.radius)
            }))
        }
        TaskId::Separate { target, neighbors } => {
            check(*target)?;
            for nb in neighbors {
                check(*nb)?;
            }
            let end = traj.final_state();
            Ok(neighbors.iter().all(|&nb| {
                end.blocks[*target].pos.dist(end.blocks[nb].pos) > SEPARATE_MIN_DIST
            }))
        }
        TaskId::PushTogether { a, b } => {
            check(*a)?;
            check(*b)?;
            let end = traj.final_state();
            Ok(end.blocks[*a].pos.dist(end.blocks[*b].pos) < PUSH_TOGETHER_MAX_DIST)
        }
        TaskId::TwoStage { a, b } => {
            check(*a)?;
            check(*b)?;
            let initial = &traj.states[0];
            let mut stage1_done = false;
            for s in &traj.states {
                let p = Predicates::new(initial, s)?;
                if !stage1_done && p.touching(*a, *b) {
                    stage1_done = true;
                }
                if stage1_done && p.in_center(*a) {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}
