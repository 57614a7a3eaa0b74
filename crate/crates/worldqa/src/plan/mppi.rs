//! Model predictive path integral planning: per-timestep Gaussians over
//! action components, refit each iteration by softmax-weighted candidate
//! averaging with a temperature, and floored standard deviations.

use super::{clamp_component, PlanResult, SequenceScorer};
use crate::blockworld::Action;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::sample_standard_normal;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MppiConfig {
    /// Candidates per iteration (K).
    pub samples: usize,
    pub iters: usize,
    /// Softmax temperature over candidate values.
    pub lambda: f32,
    /// Plan length n.
    pub horizon: usize,
    /// Reward sub-chunk length c used by the scorer.
    pub chunk: usize,
    pub a_min: f32,
    pub a_max: f32,
    /// Per-component sigma floor as a fraction of (a_max - a_min).
    pub sigma_min_frac: f32,
    pub seed: u64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        MppiConfig {
            samples: 16,
            iters: 8,
            lambda: 0.05,
            horizon: 16,
            chunk: 8,
            a_min: crate::blockworld::ACTION_MIN,
            a_max: crate::blockworld::ACTION_MAX,
            sigma_min_frac: 0.1,
            seed: 0,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidArgument("MPPI needs K >= 2 samples".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidArgument("MPPI temperature must be positive".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("MPPI horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// One distribution refit: softmax weights over values (max-subtracted; a
/// degenerate all-equal set falls back to uniform automatically), then the
/// weighted mean and weighted variance per timestep component.
pub fn mppi_update(
    candidates: &[Vec<Action>],
    values: &[f32],
    lambda: f32,
) -> (Vec<[f32; 2]>, Vec<[f32; 2]>, Vec<f32>) {
    let k = candidates.len();
    assert_eq!(k, values.len());
    assert!(k > 0);
    let horizon = candidates[0].len();

    let vmax = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut weights: Vec<f32> = values.iter().map(|&v| ((v - vmax) / lambda).exp()).collect();
    let sum: f32 = weights.iter().sum();
    if sum.is_finite() && sum > 0.0 {
        for w in weights.iter_mut() {
            *w /= sum;
        }
    } else {
        weights = vec![1.0 / k as f32; k];
    }

    let mut mu = vec![[0.0f32; 2]; horizon];
    for (cand, &w) in candidates.iter().zip(&weights) {
        for (t, a) in cand.iter().enumerate() {
            mu[t][0] += w * a.dx;
            mu[t][1] += w * a.dy;
        }
    }
    let mut sigma = vec![[0.0f32; 2]; horizon];
    for (cand, &w) in candidates.iter().zip(&weights) {
        for (t, a) in cand.iter().enumerate() {
            let dx = a.dx - mu[t][0];
            let dy = a.dy - mu[t][1];
            sigma[t][0] += w * dx * dx;
            sigma[t][1] += w * dy * dy;
        }
    }
    for s in sigma.iter_mut() {
        s[0] = s[0].sqrt();
        s[1] = s[1].sqrt();
    }
    (mu, sigma, weights)
}

/// Iterative MPPI. The first iteration samples uniformly over the action
/// box; later iterations sample the refitted Gaussians (clamped to bounds).
/// Returns the best-scored candidate seen across all iterations, plus the
/// final distribution mean for diagnostics.
pub fn mppi_plan<S: SequenceScorer>(scorer: &S, cfg: &MppiConfig) -> Result<PlanResult> {
    cfg.validate()?;
    let start = Instant::now();
    let fwd0 = scorer.forward_passes();
    let bwd0 = scorer.backward_passes();
    let mut rng = rng_from_seed(cfg.seed);
    let sigma_min = cfg.sigma_min_frac * (cfg.a_max - cfg.a_min);

    let mut mu: Vec<[f32; 2]> = vec![[0.0; 2]; cfg.horizon];
    let mut sigma: Vec<[f32; 2]> = vec![[0.0; 2]; cfg.horizon];
    let mut best_value = f32::NEG_INFINITY;
    let mut best: Vec<Action> = Vec::new();
    let mut value_trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let candidates: Vec<Vec<Action>> = (0..cfg.samples)
            .map(|_| {
                (0..cfg.horizon)
                    .map(|t| {
                        if iter == 0 {
                            Action {
                                dx: rng.gen_range(cfg.a_min..=cfg.a_max),
                                dy: rng.gen_range(cfg.a_min..=cfg.a_max),
                            }
                        } else {
                            Action {
                                dx: clamp_component(
                                    mu[t][0] + sigma[t][0] * sample_standard_normal(&mut rng),
                                ),
                                dy: clamp_component(
                                    mu[t][1] + sigma[t][1] * sample_standard_normal(&mut rng),
                                ),
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        let values = scorer.score_batch(&candidates)?;
        let mut iter_best = f32::NEG_INFINITY;
        for (cand, &v) in candidates.iter().zip(&values) {
            if v > iter_best {
                iter_best = v;
            }
            if v > best_value {
                best_value = v;
                best = cand.clone();
            }
        }
        value_trace.push(iter_best);
        let (new_mu, new_sigma, _) = mppi_update(&candidates, &values, cfg.lambda);
        mu = new_mu;
        sigma = new_sigma
            .into_iter()
            .map(|s| [s[0].max(sigma_min), s[1].max(sigma_min)])
            .collect();
    }

    Ok(PlanResult {
        actions: best,
        final_mean: Some(mu.iter().map(|m| Action { dx: m[0], dy: m[1] }).collect()),
        value_trace,
        forward_passes: scorer.forward_passes() - fwd0,
        backward_passes: scorer.backward_passes() - bwd0,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}
