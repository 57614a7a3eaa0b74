//! Training: balanced batches, data-parallel per-example tapes with a fixed
//! reduction order (so results are independent of thread count), AdamW with
//! linear LR decay, and early stopping on heldout-accuracy plateau.

use super::forward::example_loss;
use super::{Model, ModelConfig, Vocabulary};
use crate::blockworld::{render, Action, Image, Trajectory};
use crate::error::{Error, Result};
use crate::optim::{lr_at, AdamW};
use crate::rng::rng_from_seed;
use crate::saqa::{BalancedSampler, SaqaRecord};
use crate::tensor::Tape;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Records pre-encoded against the vocabulary, with every referenced frame
/// pre-rendered. This is the in-memory form both training and evaluation
/// consume; JSONL records are the interchange form.
pub struct DataBundle {
    pub records: Vec<SaqaRecord>,
    prepped: Vec<PreppedRecord>,
    trajs: Vec<Trajectory>,
    images: Vec<Vec<Image>>,
}

struct PreppedRecord {
    traj: u32,
    step: u32,
    horizon: u32,
    q_ids: Vec<u32>,
    answer: bool,
}

impl DataBundle {
    pub fn build(
        records: Vec<SaqaRecord>,
        trajs: &BTreeMap<String, Trajectory>,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let mut index: BTreeMap<&str, u32> = BTreeMap::new();
        let mut used: Vec<&str> = Vec::new();
        for r in &records {
            if !index.contains_key(r.traj.as_str()) {
                index.insert(r.traj.as_str(), used.len() as u32);
                used.push(r.traj.as_str());
            }
        }
        let mut owned = Vec::with_capacity(used.len());
        for id in &used {
            let t = trajs
                .get(*id)
                .ok_or_else(|| Error::InvalidArgument(format!("record references unknown trajectory {id}")))?;
            owned.push(t.clone());
        }
        let images: Vec<Vec<Image>> = owned
            .par_iter()
            .map(|t| t.states.iter().map(render).collect())
            .collect();
        let mut prepped = Vec::with_capacity(records.len());
        for r in &records {
            prepped.push(PreppedRecord {
                traj: index[r.traj.as_str()],
                step: r.step as u32,
                horizon: r.horizon as u32,
                q_ids: vocab.encode(&r.question)?,
                answer: r.answer,
            });
        }
        Ok(DataBundle { records, prepped, trajs: owned, images })
    }

    pub fn len(&self) -> usize {
        self.prepped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prepped.is_empty()
    }

    fn example(&self, i: usize) -> (&Image, &[Action], &[u32], bool) {
        let p = &self.prepped[i];
        let t = &self.trajs[p.traj as usize];
        let img = &self.images[p.traj as usize][p.step as usize];
        let actions = &t.actions[p.step as usize..p.step as usize + p.horizon as usize];
        (img, actions, &p.q_ids, p.answer)
    }

    /// Question text and image for external callers (attention probes).
    pub fn frame(&self, i: usize) -> (&Image, &SaqaRecord) {
        let p = &self.prepped[i];
        (&self.images[p.traj as usize][p.step as usize], &self.records[i])
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f32,
    pub warmup_steps: usize,
    pub weight_decay: f32,
    /// Steps per logical epoch (loss logging + heldout eval cadence).
    pub steps_per_epoch: usize,
    /// Early stop after this many epochs without heldout improvement.
    pub patience: usize,
    pub min_delta: f64,
    /// Heldout examples evaluated per epoch (deterministic subsample).
    pub heldout_cap: usize,
    pub seed: u64,
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 64,
            peak_lr: 3e-4,
            warmup_steps: 50,
            weight_decay: 0.01,
            steps_per_epoch: 250,
            patience: 4,
            min_delta: 0.002,
            heldout_cap: 2000,
            seed: 0,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: usize,
    pub mean_loss: f64,
    pub heldout_acc: Option<f64>,
    pub lr: f32,
}

pub struct TrainOutcome {
    pub model: Model,
    pub epochs: Vec<EpochLog>,
    pub best_heldout_acc: Option<f64>,
    pub stopped_early: bool,
}

/// Examples per parallel gradient chunk. Fixed so the reduction order (and
/// therefore the trained weights) do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

pub fn train(
    config: ModelConfig,
    vocab: Vocabulary,
    train_data: &DataBundle,
    heldout: Option<&DataBundle>,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_data.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    let mut model = Model::init(config, vocab, tcfg.seed)?;
    let mut sampler = BalancedSampler::new(&train_data.records, tcfg.seed ^ 0x5a5a)?;
    let sizes: Vec<usize> = model.params.visit().iter().map(|(_, t)| t.numel()).collect();
    let mut opt = AdamW::new(&sizes, tcfg.weight_decay);
    let yes_id = model.vocab.yes_id();

    let mut epochs = Vec::new();
    let mut best_acc: Option<f64> = None;
    let mut best_params = model.params.clone();
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut loss_accum = 0.0f64;
    let mut loss_count = 0usize;

    for step in 0..tcfg.steps {
        let idxs = sampler.next_batch(tcfg.batch_size);
        // One tape and parameter binding per chunk: in-chunk examples sum
        // their losses so a single backward accumulates their gradients.
        let chunk_grads: Vec<(Vec<Vec<f32>>, f64)> = idxs
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<(Vec<Vec<f32>>, f64)> {
                let mut tape = Tape::new();
                let bound = super::forward::bind(&mut tape, &model.params, true);
                let mut total: Option<crate::tensor::NodeId> = None;
                let mut loss_sum = 0.0f64;
                for &i in chunk {
                    let (img, actions, q_ids, answer) = train_data.example(i);
                    let loss = example_loss(
                        &mut tape,
                        &bound,
                        &model.config,
                        yes_id,
                        img,
                        actions,
                        q_ids,
                        answer,
                    )?;
                    let loss_val = tape.value(loss).item();
                    if !loss_val.is_finite() {
                        return Err(Error::Diverged(format!(
                            "loss {loss_val} at step {step} (record {i})"
                        )));
                    }
                    loss_sum += loss_val as f64;
                    total = Some(match total {
                        None => loss,
                        Some(acc) => tape.add(acc, loss)?,
                    });
                }
                let total = total.expect("non-empty chunk");
                tape.backward(total)?;
                let grads: Vec<Vec<f32>> = bound
                    .ordered
                    .iter()
                    .zip(&sizes)
                    .map(|(&node, &n)| tape.grad(node).map(|g| g.to_vec()).unwrap_or(vec![0.0; n]))
                    .collect();
                Ok((grads, loss_sum))
            })
            .collect::<Result<_>>()?;

        // Fold chunks in order, then average over the batch.
        let mut grads: Vec<Vec<f32>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut batch_loss = 0.0f64;
        for (g, l) in chunk_grads {
            for (acc, part) in grads.iter_mut().zip(g) {
                for (a, v) in acc.iter_mut().zip(part) {
                    *a += v;
                }
            }
            batch_loss += l;
        }
        let inv = 1.0 / tcfg.batch_size as f32;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= inv;
            }
        }
        batch_loss /= tcfg.batch_size as f64;
        loss_accum += batch_loss;
        loss_count += 1;

        let lr = lr_at(step, tcfg.steps, tcfg.peak_lr, tcfg.warmup_steps);
        let mut params = model.params.visit_mut();
        opt.step(&mut params, &grads, lr);

        let epoch_end = (step + 1) % tcfg.steps_per_epoch == 0 || step + 1 == tcfg.steps;
        if epoch_end {
            let epoch = epochs.len();
            let mean_loss = loss_accum / loss_count.max(1) as f64;
            loss_accum = 0.0;
            loss_count = 0;
            let heldout_acc = match heldout {
                Some(h) => Some(eval_accuracy(&model, h, tcfg.heldout_cap, tcfg.seed)?),
                None => None,
            };
            if tcfg.verbose {
                eprintln!(
                    "epoch {epoch} step {} loss {mean_loss:.4} heldout {:?} lr {lr:.2e}",
                    step + 1,
                    heldout_acc
                );
            }
            epochs.push(EpochLog { epoch, step: step + 1, mean_loss, heldout_acc, lr });
            if let Some(acc) = heldout_acc {
                let improved = match best_acc {
                    None => true,
                    Some(b) => acc > b + tcfg.min_delta,
                };
                if improved {
                    best_acc = Some(acc);
                    best_params = model.params.clone();
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= tcfg.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    if best_acc.is_some() {
        model.params = best_params;
    }
    Ok(TrainOutcome { model, epochs, best_heldout_acc: best_acc, stopped_early })
}

/// Accuracy of argmax(yes, no) against stored answers over a deterministic
/// subsample of the bundle.
pub fn eval_accuracy(model: &Model, data: &DataBundle, cap: usize, seed: u64) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    if data.len() > cap {
        let mut rng = rng_from_seed(seed ^ 0xeeee);
        order.shuffle(&mut rng);
        order.truncate(cap);
    }
    let preds = eval_predictions(model, data, &order)?;
    let correct = order
        .iter()
        .zip(&preds)
        .filter(|(&i, &(py, pn))| (py >= pn) == data.prepped[i].answer)
        .count();
    Ok(correct as f64 / order.len().max(1) as f64)
}

/// (p_yes, p_no) for the given record indices, chunked over shared-binding
/// batches.
pub fn eval_predictions(
    model: &Model,
    data: &DataBundle,
    indices: &[usize],
) -> Result<Vec<(f32, f32)>> {
    const EVAL_CHUNK: usize = 32;
    let chunks: Vec<Vec<(f32, f32)>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let items: Vec<(&Image, &[Action], &[u32])> = chunk
                .iter()
                .map(|&i| {
                    let (img, actions, q_ids, _) = data.example(i);
                    (img, actions, q_ids)
                })
                .collect();
            super::forward::binary_answer_probs_batch(model, &items)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}
