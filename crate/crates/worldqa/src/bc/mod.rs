//! Behavior-cloned proposal policy: a small patch encoder + MLP regressing
//! the next n-step action chunk from the current frame. Trained with MSE
//! against expert chunks (tail chunks padded by repeating the final expert
//! action); used to initialize gradient planning and as the improvement
//! baseline.

use crate::blockworld::{render, Action, Image, Trajectory, ACTION_MAX, ACTION_MIN};
use crate::error::{Error, Result};
use crate::model::{load_tensors, patches_from_image, save_tensors, CheckpointKind};
use crate::optim::{lr_at, AdamW};
use crate::plan::ProposalPolicy;
use crate::rng::rng_from_seed;
use crate::tensor::{NodeId, Tape, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    /// Actions per proposed chunk.
    pub horizon: usize,
    pub patch_size: usize,
    pub d_patch: usize,
    pub d_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f32,
    pub weight_decay: f32,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            horizon: 16,
            patch_size: 8,
            d_patch: 32,
            d_hidden: 128,
            epochs: 40,
            batch_size: 16,
            peak_lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

impl BcConfig {
    fn n_patches(&self) -> usize {
        let per_axis = crate::blockworld::RENDER_SIZE / self.patch_size;
        per_axis * per_axis
    }

    fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcParams {
    pub patch_w: Tensor,
    pub patch_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl BcParams {
    fn init(cfg: &BcConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let flat = cfg.n_patches() * cfg.d_patch;
        BcParams {
            patch_w: Tensor::normal(&[cfg.patch_dim(), cfg.d_patch], 0.02, &mut rng),
            patch_b: Tensor::zeros(&[cfg.d_patch]),
            w1: Tensor::normal(&[flat, cfg.d_hidden], 0.02, &mut rng),
            b1: Tensor::zeros(&[cfg.d_hidden]),
            w2: Tensor::normal(&[cfg.d_hidden, cfg.horizon * 2], 0.01, &mut rng),
            b2: Tensor::zeros(&[cfg.horizon * 2]),
        }
    }

    fn visit(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("patch_w".into(), &self.patch_w),
            ("patch_b".into(), &self.patch_b),
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]
    }

    fn visit_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.patch_w,
            &mut self.patch_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BcPolicy {
    pub config: BcConfig,
    pub params: BcParams,
}

struct BoundBc {
    ids: Vec<NodeId>,
}

fn bind(tape: &mut Tape, p: &BcParams, trainable: bool) -> BoundBc {
    let ids = p
        .visit()
        .into_iter()
        .map(|(_, t)| if trainable { tape.param(t.clone()) } else { tape.leaf(t.clone()) })
        .collect();
    BoundBc { ids }
}

fn forward(tape: &mut Tape, b: &BoundBc, cfg: &BcConfig, image: &Image) -> Result<NodeId> {
    let [patch_w, patch_b, w1, b1, w2, b2] = b.ids[..] else {
        return Err(Error::InvalidArgument("bc binding arity".into()));
    };
    let patches = tape.leaf(patches_from_image(image, cfg.patch_size));
    let f = tape.matmul(patches, patch_w)?;
    let f = tape.add(f, patch_b)?;
    let f = tape.gelu(f)?;
    let flat = tape.reshape(f, &[1, cfg.n_patches() * cfg.d_patch])?;
    let h = tape.matmul(flat, w1)?;
    let h = tape.add(h, b1)?;
    let h = tape.gelu(h)?;
    let out = tape.matmul(h, w2)?;
    tape.add(out, b2)
}

impl BcPolicy {
    pub fn init(config: BcConfig, seed: u64) -> Self {
        let params = BcParams::init(&config, seed);
        BcPolicy { config, params }
    }

    pub fn save(&self, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
        save_tensors(
            path,
            CheckpointKind::BcPolicy,
            serde_json::to_value(&self.config)?,
            None,
            &self.params.visit(),
            seed,
            config_hash,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let loaded = load_tensors(path)?;
        if loaded.kind != CheckpointKind::BcPolicy {
            return Err(Error::Corrupt(format!("{}: not a bc-policy checkpoint", path.display())));
        }
        let config: BcConfig = serde_json::from_value(loaded.config.clone())
            .map_err(|e| Error::Corrupt(format!("config: {e}")))?;
        let mut policy = BcPolicy::init(config, 0);
        let expected: Vec<(String, Vec<usize>)> =
            policy.params.visit().iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
        let got: Vec<(String, Vec<usize>)> =
            loaded.tensors.iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
        if expected != got {
            return Err(Error::Corrupt("bc checkpoint shape table does not match config".into()));
        }
        for (slot, (_, tensor)) in policy.params.visit_mut().into_iter().zip(loaded.tensors) {
            *slot = tensor;
        }
        Ok(policy)
    }
}

impl ProposalPolicy for BcPolicy {
    /// Deterministic chunk, clamped to the action box.
    fn propose(&self, image: &Image) -> Result<Vec<Action>> {
        let mut tape = Tape::new();
        let b = bind(&mut tape, &self.params, false);
        let out = forward(&mut tape, &b, &self.config, image)?;
        let raw = &tape.value(out).data;
        Ok(raw
            .chunks(2)
            .map(|c| Action {
                dx: c[0].clamp(ACTION_MIN, ACTION_MAX),
                dy: c[1].clamp(ACTION_MIN, ACTION_MAX),
            })
            .collect())
    }
}

/// The expert chunk starting at step `i`, padded past the trajectory end by
/// repeating the final action.
pub fn expert_chunk(traj: &Trajectory, i: usize, horizon: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(horizon * 2);
    let last = *traj.actions.last().expect("non-empty trajectory");
    for t in 0..horizon {
        let a = traj.actions.get(i + t).copied().unwrap_or(last);
        out.push(a.dx);
        out.push(a.dy);
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BcEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Behavior cloning: MSE regression of expert chunks from rendered frames.
/// Deterministic given the seed.
pub fn bc_train(
    expert_trajs: &[Trajectory],
    config: BcConfig,
    seed: u64,
) -> Result<(BcPolicy, Vec<BcEpochLog>)> {
    if expert_trajs.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "behavior cloning needs >= 10 trajectories, got {}",
            expert_trajs.len()
        )));
    }
    for t in expert_trajs {
        if t.is_empty() {
            return Err(Error::InvalidArgument("empty expert trajectory".into()));
        }
    }
    // Pre-render frames and targets.
    let mut frames: Vec<Image> = Vec::new();
    let mut targets: Vec<Vec<f32>> = Vec::new();
    for traj in expert_trajs {
        for i in 0..traj.len() {
            frames.push(render(traj.state(i)));
            targets.push(expert_chunk(traj, i, config.horizon));
        }
    }

    let mut policy = BcPolicy::init(config.clone(), seed);
    let sizes: Vec<usize> = policy.params.visit().iter().map(|(_, t)| t.numel()).collect();
    let mut opt = AdamW::new(&sizes, config.weight_decay);
    let mut rng = rng_from_seed(seed ^ 0xbc);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut logs = Vec::new();
    let total_steps = config.epochs * order.len().div_ceil(config.batch_size);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let bound = bind(&mut tape, &policy.params, true);
            let mut total: Option<NodeId> = None;
            for &i in batch {
                let pred = forward(&mut tape, &bound, &config, &frames[i])?;
                let target = tape.leaf(Tensor::new(
                    vec![1, config.horizon * 2],
                    targets[i].clone(),
                )?);
                let neg = tape.scale(target, -1.0)?;
                let diff = tape.add(pred, neg)?;
                let sq = tape.mul(diff, diff)?;
                let mse = tape.sum(sq)?;
                let mse = tape.scale(mse, 1.0 / (config.horizon * 2) as f32)?;
                total = Some(match total {
                    None => mse,
                    Some(acc) => tape.add(acc, mse)?,
                });
            }
            let total = total.expect("non-empty batch");
            let loss_val = tape.value(total).item() / batch.len() as f32;
            if !loss_val.is_finite() {
                return Err(Error::Diverged(format!("bc loss {loss_val} at epoch {epoch}")));
            }
            epoch_loss += loss_val as f64;
            batches += 1;
            tape.backward(total)?;
            let mut grads: Vec<Vec<f32>> = Vec::with_capacity(sizes.len());
            for (&node, &n) in bound.ids.iter().zip(&sizes) {
                let mut g = tape.grad(node).map(|g| g.to_vec()).unwrap_or(vec![0.0; n]);
                for v in g.iter_mut() {
                    *v /= batch.len() as f32;
                }
                grads.push(g);
            }
            let lr = lr_at(step, total_steps, config.peak_lr, 20);
            let mut params = policy.params.visit_mut();
            opt.step(&mut params, &grads, lr);
            step += 1;
        }
        logs.push(BcEpochLog { epoch, mean_loss: epoch_loss / batches.max(1) as f64 });
    }
    Ok((policy, logs))
}
