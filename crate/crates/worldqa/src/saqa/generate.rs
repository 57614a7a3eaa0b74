//! Dataset generation and trajectory-level splitting.

use super::templates::instantiate;
use super::{QuestionType, SaqaRecord};
use crate::blockworld::{all_instantiations, Predicates, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    /// Horizons sampled per state (h = 0 always included).
    pub horizons_per_state: usize,
    pub h_max: usize,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { horizons_per_state: 4, h_max: 20, seed: 0 }
    }
}

/// A trajectory plus the id records refer back to.
#[derive(Debug, Clone)]
pub struct NamedTraj {
    pub id: String,
    pub traj: Trajectory,
}

/// Generate the full record stream. For each state, `horizons_per_state`
/// distinct horizons are sampled: h = 0 is always one of them (so a quarter
/// of all (state, horizon) pairs are zero-horizon) and the rest are drawn
/// uniformly without replacement from 1..=min(h_max, remaining). Every
/// template instantiation is emitted per (state, horizon) with a uniformly
/// chosen phrasing, answered by the oracle on the source trajectory.
pub fn generate(trajs: &[NamedTraj], cfg: &GenerateConfig) -> Result<Vec<SaqaRecord>> {
    if cfg.h_max < 1 {
        return Err(Error::InvalidArgument("h_max must be >= 1".into()));
    }
    for t in trajs {
        if t.traj.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "trajectory {} is shorter than 1 step",
                t.id
            )));
        }
    }
    let per_traj: Vec<Vec<SaqaRecord>> = trajs
        .par_iter()
        .enumerate()
        .map(|(ti, nt)| generate_for_traj(nt, cfg, derive_seed(cfg.seed, ti as u64)))
        .collect::<Result<_>>()?;
    Ok(per_traj.into_iter().flatten().collect())
}

fn generate_for_traj(nt: &NamedTraj, cfg: &GenerateConfig, seed: u64) -> Result<Vec<SaqaRecord>> {
    let mut rng = rng_from_seed(seed);
    let traj = &nt.traj;
    let n_blocks = traj.scene.blocks.len();
    let keys = all_instantiations(n_blocks);
    let mut out = Vec::new();

    for i in 0..traj.states.len() {
        let remaining = traj.len() - i.min(traj.len());
        let mut horizons = vec![0usize];
        let pool_max = remaining.min(cfg.h_max);
        if pool_max >= 1 && cfg.horizons_per_state > 1 {
            let mut pool: Vec<usize> = (1..=pool_max).collect();
            pool.shuffle(&mut rng);
            pool.truncate(cfg.horizons_per_state - 1);
            pool.sort_unstable();
            horizons.extend(pool);
        }
        for &h in &horizons {
            let prev = traj.state(i);
            let curr = traj.state(i + h);
            let pred = Predicates::new(prev, curr)?;
            for &key in &keys {
                let phrasing = rng.gen::<u32>() as usize;
                out.push(SaqaRecord {
                    traj: nt.id.clone(),
                    step: i,
                    horizon: h,
                    qtype: QuestionType::of(key),
                    question: instantiate(key, phrasing, &traj.scene.blocks),
                    answer: pred.answer(key),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    /// Indices into the input record slice.
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
    pub train_trajs: Vec<String>,
    pub heldout_trajs: Vec<String>,
}

/// Split records by trajectory id (no state ever leaks across the split),
/// stratified so every question type appears on both sides.
pub fn split(records: &[SaqaRecord], fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} not in (0,1)")));
    }
    let mut traj_ids: Vec<String> =
        records.iter().map(|r| r.traj.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if traj_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 trajectories to split without leakage".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let n_train = ((traj_ids.len() as f64 * fraction) as usize).clamp(1, traj_ids.len() - 1);

    for _attempt in 0..64 {
        traj_ids.shuffle(&mut rng);
        let train_set: BTreeSet<&String> = traj_ids[..n_train].iter().collect();
        let mut train = Vec::new();
        let mut heldout = Vec::new();
        let mut train_types = BTreeSet::new();
        let mut held_types = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if train_set.contains(&r.traj) {
                train.push(i);
                train_types.insert(r.qtype);
            } else {
                heldout.push(i);
                held_types.insert(r.qtype);
            }
        }
        let all: BTreeSet<QuestionType> = records.iter().map(|r| r.qtype).collect();
        if train_types == all && held_types == all {
            return Ok(SplitResult {
                train,
                heldout,
                train_trajs: traj_ids[..n_train].to_vec(),
                heldout_trajs: traj_ids[n_train..].to_vec(),
            });
        }
    }
    Err(Error::InvalidArgument(
        "too few trajectories to stratify every question type into both splits".into(),
    ))
}

/// Count records per (question type, answer); used by balance tests and the
/// sampler's bucket construction.
pub fn type_answer_histogram(records: &[SaqaRecord]) -> BTreeMap<(QuestionType, bool), usize> {
    let mut hist = BTreeMap::new();
    for r in records {
        *hist.entry((r.qtype, r.answer)).or_insert(0) += 1;
    }
    hist
}
