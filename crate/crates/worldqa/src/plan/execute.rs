//! Receding-horizon execution and multistep subgoal orchestration.

use super::{grad_plan, mppi_plan, GradPlanConfig, MppiConfig, PlanResult};
use crate::blockworld::{
    render, step, task_success, Action, Image, Scene, TaskId, Trajectory, WorldState,
};
use crate::error::{Error, Result};
use crate::model::{answer_likelihood, Model};
use crate::rng::derive_seed;
use crate::value::{Subgoal, TaskScorer, TaskSpec};
use serde::Serialize;

/// A policy that proposes an initial action chunk from the current frame
/// (the gradient planner refines it).
pub trait ProposalPolicy: Sync {
    fn propose(&self, image: &Image) -> Result<Vec<Action>>;
}

#[derive(Debug, Clone)]
pub enum PlannerKind {
    Mppi(MppiConfig),
    Grad(GradPlanConfig),
}

impl PlannerKind {
    pub fn chunk(&self) -> usize {
        match self {
            PlannerKind::Mppi(c) => c.chunk,
            PlannerKind::Grad(c) => c.chunk,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            PlannerKind::Mppi(c) => c.horizon,
            PlannerKind::Grad(c) => c.horizon,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub rounds: usize,
    pub forward_passes: u64,
    pub backward_passes: u64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

struct Rollout {
    scene: Scene,
    seed: u64,
    states: Vec<WorldState>,
    actions: Vec<Action>,
}

impl Rollout {
    fn new(scene: &Scene, seed: u64) -> Self {
        Rollout {
            scene: scene.clone(),
            seed,
            states: vec![scene.initial_state_with_seed(seed)],
            actions: Vec::new(),
        }
    }

    fn state(&self) -> &WorldState {
        self.states.last().unwrap()
    }

    fn push(&mut self, a: Action) {
        let next = step(self.state(), a);
        self.actions.push(a);
        self.states.push(next);
    }

    fn trajectory(&self) -> Trajectory {
        Trajectory {
            seed: self.seed,
            scene: self.scene.clone(),
            actions: self.actions.clone(),
            states: self.states.clone(),
        }
    }
}

fn plan_round(
    model: &Model,
    frame: &Image,
    task: &TaskSpec,
    planner: &PlannerKind,
    proposal: Option<&dyn ProposalPolicy>,
    round_seed: u64,
) -> Result<PlanResult> {
    let scorer = TaskScorer::new(model, frame.clone(), task.clone(), planner.chunk())?;
    match planner {
        PlannerKind::Mppi(cfg) => {
            let cfg = MppiConfig { seed: round_seed, ..cfg.clone() };
            mppi_plan(&scorer, &cfg)
        }
        PlannerKind::Grad(cfg) => {
            let policy = proposal.ok_or_else(|| {
                Error::InvalidArgument("gradient planning requires a proposal policy".into())
            })?;
            let init = policy.propose(frame)?;
            grad_plan(&scorer, &init, cfg)
        }
    }
}

/// Plan, execute the first `execute_steps` actions, re-observe, replan;
/// stop at verified ground-truth success or the episode cap.
pub fn receding_horizon_execute(
    scene: &Scene,
    model: &Model,
    task: &TaskSpec,
    task_id: &TaskId,
    planner: &PlannerKind,
    execute_steps: usize,
    episode_cap: usize,
    proposal: Option<&dyn ProposalPolicy>,
    seed: u64,
) -> Result<EpisodeResult> {
    if execute_steps == 0 {
        return Err(Error::InvalidArgument("execute_steps must be >= 1".into()));
    }
    let mut roll = Rollout::new(scene, seed);
    let mut rounds = 0usize;
    let mut forwards = 0u64;
    let mut backwards = 0u64;
    let mut success = task_success(task_id, &roll.trajectory())?;

    while !success && roll.actions.len() < episode_cap {
        let frame = render(roll.state());
        let plan = plan_round(model, &frame, task, planner, proposal, derive_seed(seed, rounds as u64))?;
        forwards += plan.forward_passes;
        backwards += plan.backward_passes;
        rounds += 1;
        for &a in plan.actions.iter().take(execute_steps) {
            roll.push(a);
            if task_success(task_id, &roll.trajectory())? {
                success = true;
                break;
            }
            if roll.actions.len() >= episode_cap {
                break;
            }
        }
    }
    Ok(EpisodeResult {
        success,
        steps: roll.actions.len(),
        rounds,
        forward_passes: forwards,
        backward_passes: backwards,
        trajectory: roll.trajectory(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgoalLog {
    pub name: String,
    pub started_at_step: usize,
    pub verified_at_step: Option<usize>,
    pub last_verify_prob: f32,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistepResult {
    pub all_verified: bool,
    pub steps: usize,
    pub subgoals: Vec<SubgoalLog>,
    pub forward_passes: u64,
    pub backward_passes: u64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

/// Execute an ordered subgoal list: plan against the current subgoal's QA
/// set, and after each executed chunk ask the verification question at zero
/// horizon; advance when P(desired answer) clears `theta_verify`.
pub fn multistep_execute(
    scene: &Scene,
    model: &Model,
    subgoals: &[Subgoal],
    planner: &PlannerKind,
    execute_steps: usize,
    episode_cap: usize,
    theta_verify: f32,
    proposal: Option<&dyn ProposalPolicy>,
    seed: u64,
) -> Result<MultistepResult> {
    if subgoals.is_empty() {
        return Err(Error::InvalidArgument("multistep execution needs >= 1 subgoal".into()));
    }
    let mut roll = Rollout::new(scene, seed);
    let mut logs: Vec<SubgoalLog> = Vec::new();
    let mut forwards = 0u64;
    let mut backwards = 0u64;
    let mut current = 0usize;
    logs.push(SubgoalLog {
        name: subgoals[0].name.clone(),
        started_at_step: 0,
        verified_at_step: None,
        last_verify_prob: 0.0,
    });
    let mut rounds = 0u64;

    while current < subgoals.len() && roll.actions.len() < episode_cap {
        let sg = &subgoals[current];
        let task = TaskSpec { name: sg.name.clone(), items: sg.items.clone(), subgoals: vec![] };
        let frame = render(roll.state());
        let plan = plan_round(model, &frame, &task, planner, proposal, derive_seed(seed, rounds))?;
        rounds += 1;
        forwards += plan.forward_passes;
        backwards += plan.backward_passes;
        for &a in plan.actions.iter().take(execute_steps) {
            roll.push(a);
            if roll.actions.len() >= episode_cap {
                break;
            }
        }
        // Zero-horizon verification on the new frame.
        let now = render(roll.state());
        let p = answer_likelihood(model, &now, &[], &sg.verify_question, &sg.verify_answer)?;
        forwards += 1;
        let log = logs.last_mut().unwrap();
        log.last_verify_prob = p;
        if p > theta_verify {
            log.verified_at_step = Some(roll.actions.len());
            current += 1;
            if current < subgoals.len() {
                logs.push(SubgoalLog {
                    name: subgoals[current].name.clone(),
                    started_at_step: roll.actions.len(),
                    verified_at_step: None,
                    last_verify_prob: 0.0,
                });
            }
        }
    }
    Ok(MultistepResult {
        all_verified: current >= subgoals.len(),
        steps: roll.actions.len(),
        subgoals: logs,
        forward_passes: forwards,
        backward_passes: backwards,
        trajectory: roll.trajectory(),
    })
}
