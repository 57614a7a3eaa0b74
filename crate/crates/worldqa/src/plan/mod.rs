//! Planners over action-sequence scorers: sampling-based MPPI with
//! exponentially value-weighted Gaussian refitting, gradient ascent on the
//! chunked value with norm clipping, receding-horizon execution, and
//! multistep subgoal orchestration.

mod execute;
mod grad;
mod mppi;

pub use execute::{
    multistep_execute, receding_horizon_execute, EpisodeResult, MultistepResult, PlannerKind,
    ProposalPolicy, SubgoalLog,
};
pub use grad::{grad_plan, GradPlanConfig};
pub use mppi::{mppi_plan, mppi_update, MppiConfig};

use crate::blockworld::{Action, ACTION_MAX, ACTION_MIN};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Anything that can score candidate action sequences. The model-backed
/// implementation lives in the value module; a synthetic quadratic scorer
/// below supports planner tests without a trained model.
pub trait SequenceScorer: Sync {
    fn score(&self, actions: &[Action]) -> Result<f32>;

    fn score_batch(&self, candidates: &[Vec<Action>]) -> Result<Vec<f32>> {
        candidates.iter().map(|c| self.score(c)).collect()
    }

    fn score_with_grad(&self, actions: &[Action]) -> Result<(f32, Vec<[f32; 2]>)>;

    fn forward_passes(&self) -> u64;
    fn backward_passes(&self) -> u64;
}

impl<'m> SequenceScorer for crate::value::TaskScorer<'m> {
    fn score(&self, actions: &[Action]) -> Result<f32> {
        crate::value::TaskScorer::score(self, actions)
    }

    fn score_batch(&self, candidates: &[Vec<Action>]) -> Result<Vec<f32>> {
        crate::value::TaskScorer::score_batch(self, candidates)
    }

    fn score_with_grad(&self, actions: &[Action]) -> Result<(f32, Vec<[f32; 2]>)> {
        crate::value::TaskScorer::score_with_grad(self, actions)
    }

    fn forward_passes(&self) -> u64 {
        crate::value::TaskScorer::forward_passes(self)
    }

    fn backward_passes(&self) -> u64 {
        crate::value::TaskScorer::backward_passes(self)
    }
}

/// V(a) = -sum_t ||a_t - a*_t||^2 with analytic gradient; used by planner
/// tests and examples.
pub struct QuadraticScorer {
    pub target: Vec<Action>,
    forwards: AtomicU64,
    backwards: AtomicU64,
}

impl QuadraticScorer {
    pub fn new(target: Vec<Action>) -> Self {
        QuadraticScorer { target, forwards: AtomicU64::new(0), backwards: AtomicU64::new(0) }
    }
}

impl SequenceScorer for QuadraticScorer {
    fn score(&self, actions: &[Action]) -> Result<f32> {
        self.forwards.fetch_add(1, Ordering::Relaxed);
        let mut v = 0.0f32;
        for (a, t) in actions.iter().zip(&self.target) {
            let dx = a.dx - t.dx;
            let dy = a.dy - t.dy;
            v -= dx * dx + dy * dy;
        }
        Ok(v)
    }

    fn score_with_grad(&self, actions: &[Action]) -> Result<(f32, Vec<[f32; 2]>)> {
        let v = self.score(actions)?;
        self.backwards.fetch_add(1, Ordering::Relaxed);
        let grad = actions
            .iter()
            .zip(&self.target)
            .map(|(a, t)| [-2.0 * (a.dx - t.dx), -2.0 * (a.dy - t.dy)])
            .collect();
        Ok((v, grad))
    }

    fn forward_passes(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    fn backward_passes(&self) -> u64 {
        self.backwards.load(Ordering::Relaxed)
    }
}

/// Output of one planning call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    /// The plan to execute (best-scored sequence).
    pub actions: Vec<Action>,
    /// Final distribution mean (MPPI only; diagnostics and convergence
    /// checks).
    pub final_mean: Option<Vec<Action>>,
    /// One entry per iteration: the best sampled value (MPPI) or the value
    /// of the iterate entering the step (gradient planning, so the first
    /// entry is the initial proposal's value).
    pub value_trace: Vec<f32>,
    pub forward_passes: u64,
    pub backward_passes: u64,
    pub wall_secs: f64,
}

pub(crate) fn clamp_component(v: f32) -> f32 {
    v.clamp(ACTION_MIN, ACTION_MAX)
}
