//! End-to-end pipeline: every CLI subcommand is a pure function of
//! (config, seed) producing artifacts on disk, and `run_all` chains the
//! standard experiment. Deterministic numbers land in `metrics.json`;
//! wall-clock timings are kept apart in `timings.json` so repeated runs are
//! byte-identical.

pub mod config;

pub use config::{load_config, AppConfig, LoadedConfig};

use crate::bc::{bc_train, BcPolicy};
use crate::blockworld::{
    collect_trajectory, render, sample_scene, Block, PolicyKind, PushDest, Scene,
    ScriptedPolicy, TaskId, Trajectory, TrajectoryFile, Vec2, WorldState,
};
use crate::error::{Error, Result};
use crate::eval::{
    attention_probe, bc_execute, bench_report, check_seed_ranges, eval_future_qa, eval_planning,
    eval_subset, mixture_ablation, AblationReport, AttentionProbe, BenchReport,
    EpisodeSummary, PlanningEval, QaReport,
};
use crate::model::{
    load_checkpoint, save_checkpoint, train, DataBundle, Model, TrainConfig, Vocabulary,
};
use crate::plan::{
    grad_plan, mppi_plan, multistep_execute, receding_horizon_execute, MppiConfig,
    PlanResult, PlannerKind, ProposalPolicy,
};
use crate::saqa::templates::instantiate;
use crate::saqa::{generate, write_jsonl, DatasetMeta, GenerateConfig, NamedTraj, SaqaRecord};
use crate::value::{QaItem, Subgoal, TaskScorer, TaskSpec};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

// ── task builders ────────────────────────────────────────────────────

use crate::blockworld::QuestionKey;

fn q(blocks: &[Block], key: QuestionKey) -> String {
    instantiate(key, 0, blocks)
}

pub fn build_reach_task(blocks: &[Block], target: usize) -> TaskSpec {
    TaskSpec {
        name: format!("reach_{}", blocks[target].display_name().replace(' ', "_")),
        items: vec![
            QaItem {
                question: q(blocks, QuestionKey::PegTouching { b: target }),
                answer: "yes".into(),
                weight: 0.8,
            },
            QaItem {
                question: q(blocks, QuestionKey::PegCloser { b: target }),
                answer: "yes".into(),
                weight: 0.2,
            },
        ],
        subgoals: vec![],
    }
}

pub fn build_push_task(blocks: &[Block], a: usize, b: usize) -> TaskSpec {
    let (lo, hi) = (a.min(b), a.max(b));
    TaskSpec {
        name: format!(
            "push_{}_to_{}",
            blocks[a].display_name().replace(' ', "_"),
            blocks[b].display_name().replace(' ', "_")
        ),
        items: vec![
            QaItem {
                question: q(blocks, QuestionKey::Touching { a: lo, b: hi }),
                answer: "yes".into(),
                weight: 0.8,
            },
            QaItem {
                question: q(blocks, QuestionKey::Closer { a: lo, b: hi }),
                answer: "yes".into(),
                weight: 0.2,
            },
        ],
        subgoals: vec![],
    }
}

pub fn build_separate_task(blocks: &[Block], target: usize, avoid: usize) -> TaskSpec {
    let (lo, hi) = (target.min(avoid), target.max(avoid));
    TaskSpec {
        name: format!("separate_{}", blocks[target].display_name().replace(' ', "_")),
        items: vec![
            QaItem {
                question: q(blocks, QuestionKey::PegTouching { b: target }),
                answer: "yes".into(),
                weight: 0.6,
            },
            QaItem {
                question: q(blocks, QuestionKey::Touching { a: lo, b: hi }),
                answer: "no".into(),
                weight: 0.4,
            },
        ],
        subgoals: vec![],
    }
}

/// Two-stage task: push block a to block b, then push block a into the
/// central region.
pub fn build_two_stage_task(blocks: &[Block], a: usize, b: usize) -> TaskSpec {
    let push = build_push_task(blocks, a, b);
    let stage2_items = vec![
        QaItem {
            question: q(blocks, QuestionKey::InCenter { b: a }),
            answer: "yes".into(),
            weight: 0.6,
        },
        QaItem {
            question: q(blocks, QuestionKey::PegTouching { b: a }),
            answer: "yes".into(),
            weight: 0.4,
        },
    ];
    let (lo, hi) = (a.min(b), a.max(b));
    TaskSpec {
        name: format!("two_stage_{}", blocks[a].display_name().replace(' ', "_")),
        items: push.items.clone(),
        subgoals: vec![
            Subgoal {
                name: "push_together".into(),
                items: push.items,
                verify_question: q(blocks, QuestionKey::Touching { a: lo, b: hi }),
                verify_answer: "yes".into(),
            },
            Subgoal {
                name: "into_center".into(),
                items: stage2_items,
                verify_question: q(blocks, QuestionKey::InCenter { b: a }),
                verify_answer: "yes".into(),
            },
        ],
    }
}

// ── scripted experts ─────────────────────────────────────────────────

/// Deterministic rotation of expert behaviors over training seeds, so the
/// offline data contains reaches, pushes, and separations on varied goals.
pub fn training_expert_kind(idx: u64, n_blocks: usize) -> PolicyKind {
    let n = n_blocks as u64;
    match idx % 3 {
        0 => PolicyKind::Reach { target: ((idx / 3) % n) as usize },
        1 => {
            let a = ((idx / 3) % n) as usize;
            let b = ((idx / 3 + 1) % n) as usize;
            PolicyKind::PushTo { block: a, dest: PushDest::Block(b) }
        }
        _ => {
            let t = ((idx / 3) % n) as usize;
            let nb = ((idx / 3 + 1) % n) as usize;
            PolicyKind::Separate { target: t, neighbor: nb }
        }
    }
}

/// Two-phase scripted expert for the two-stage task: push a onto b, then
/// push a into the board center. Used to behavior-clone the multistep
/// baseline.
pub struct TwoStageExpert {
    a: usize,
    b: usize,
    push: ScriptedPolicy,
    center: ScriptedPolicy,
    stage2: bool,
}

impl TwoStageExpert {
    pub fn new(state: &WorldState, a: usize, b: usize, seed: u64) -> Result<Self> {
        Ok(TwoStageExpert {
            a,
            b,
            push: ScriptedPolicy::new(
                PolicyKind::PushTo { block: a, dest: PushDest::Block(b) },
                state,
                seed,
            )?,
            center: ScriptedPolicy::new(
                PolicyKind::PushTo { block: a, dest: PushDest::Point(Vec2::new(0.5, 0.5)) },
                state,
                seed ^ 0x2,
            )?,
            stage2: false,
        })
    }

    pub fn act(&mut self, state: &WorldState) -> crate::blockworld::Action {
        if !self.stage2 {
            let (pa, pb) = (&state.blocks[self.a], &state.blocks[self.b]);
            if pa.pos.dist(pb.pos) <= pa.radius + pb.radius + 0.002 {
                self.stage2 = true;
            }
        }
        if self.stage2 {
            self.center.act(state)
        } else {
            self.push.act(state)
        }
    }
}

// ── artifact helpers ─────────────────────────────────────────────────

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn traj_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

// ── trajectory collection ────────────────────────────────────────────

pub struct CollectedTrajs {
    pub named: Vec<NamedTraj>,
}

/// Expert + random training trajectories per the config's seed layout.
pub fn collect_training_trajectories(cfg: &AppConfig) -> Result<CollectedTrajs> {
    let params = cfg.train_scene_params();
    let n_blocks = cfg.env.colors.len();
    let mut named = Vec::new();
    for i in 0..cfg.data.expert_trajs as u64 {
        let seed = cfg.data.traj_seed_start + i;
        let scene = sample_scene(&params, seed);
        let kind = training_expert_kind(i, n_blocks);
        let mut policy = ScriptedPolicy::new(kind, &scene.initial_state(), seed)?;
        let traj = collect_trajectory(&scene, seed, &mut policy, cfg.data.traj_len);
        named.push(NamedTraj { id: format!("expert_{seed:05}"), traj });
    }
    for i in 0..cfg.data.random_trajs as u64 {
        let seed = cfg.data.traj_seed_start + cfg.data.expert_trajs as u64 + i;
        let scene = sample_scene(&params, seed);
        let mut policy = ScriptedPolicy::new(PolicyKind::Random, &scene.initial_state(), seed)?;
        let traj = collect_trajectory(&scene, seed, &mut policy, cfg.data.traj_len);
        named.push(NamedTraj { id: format!("random_{seed:05}"), traj });
    }
    Ok(CollectedTrajs { named })
}

/// Expert trajectories on evaluation scenes (in-distribution or OOD
/// pairings) for heldout future-QA sets.
pub fn collect_heldout_trajectories(cfg: &AppConfig, ood: bool) -> Result<CollectedTrajs> {
    let params = cfg.eval_scene_params(ood);
    let n_blocks = cfg.env.colors.len();
    let offset = if ood { cfg.data.eval_expert_trajs as u64 } else { 0 };
    let mut named = Vec::new();
    for i in 0..cfg.data.eval_expert_trajs as u64 {
        let seed = cfg.data.eval_traj_seed_start + offset + i;
        let scene = sample_scene(&params, seed);
        let kind = training_expert_kind(i, n_blocks);
        let mut policy = ScriptedPolicy::new(kind, &scene.initial_state(), seed)?;
        let traj = collect_trajectory(&scene, seed, &mut policy, cfg.data.traj_len);
        let tag = if ood { "ood" } else { "id" };
        named.push(NamedTraj { id: format!("heldout_{tag}_{seed:05}"), traj });
    }
    Ok(CollectedTrajs { named })
}

pub fn save_trajectories(named: &[NamedTraj], dir: &Path, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for nt in named {
        TrajectoryFile::from_trajectory(&nt.traj, config_hash).save(&traj_path(dir, &nt.id))?;
    }
    Ok(())
}

pub fn load_trajectories(dir: &Path) -> Result<Vec<NamedTraj>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!("no trajectories in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::InvalidArgument(format!("bad file name {}", p.display())))?
                .to_string();
            Ok(NamedTraj { id, traj: TrajectoryFile::load(&p)?.into_trajectory() })
        })
        .collect()
}

// ── dataset generation ───────────────────────────────────────────────

pub fn generate_records(
    named: &[NamedTraj],
    cfg: &AppConfig,
    seed: u64,
) -> Result<Vec<SaqaRecord>> {
    let gcfg = GenerateConfig {
        horizons_per_state: cfg.data.horizons_per_state,
        h_max: cfg.data.h_max,
        seed,
    };
    generate(named, &gcfg)
}

pub fn bundle_from(named: &[NamedTraj], records: Vec<SaqaRecord>) -> Result<DataBundle> {
    let map: BTreeMap<String, Trajectory> =
        named.iter().map(|nt| (nt.id.clone(), nt.traj.clone())).collect();
    DataBundle::build(records, &map, &Vocabulary::build())
}

// ── BC experts per task family ───────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFamily {
    /// Push colors[0] onto colors[1].
    PushFirst,
    /// Push colors[1] onto colors[2].
    PushSecond,
    /// Two-stage: push colors[0] onto colors[1], then to the center.
    TwoStage,
}

impl TaskFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "push-first" => Ok(TaskFamily::PushFirst),
            "push-second" => Ok(TaskFamily::PushSecond),
            "two-stage" => Ok(TaskFamily::TwoStage),
            other => Err(Error::InvalidArgument(format!(
                "unknown task family {other:?} (push-first | push-second | two-stage)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::PushFirst => "push-first",
            TaskFamily::PushSecond => "push-second",
            TaskFamily::TwoStage => "two-stage",
        }
    }

    pub fn blocks(&self) -> (usize, usize) {
        match self {
            TaskFamily::PushFirst => (0, 1),
            TaskFamily::PushSecond => (1, 2),
            TaskFamily::TwoStage => (0, 1),
        }
    }

    pub fn task_id(&self) -> TaskId {
        let (a, b) = self.blocks();
        match self {
            TaskFamily::TwoStage => TaskId::TwoStage { a, b },
            _ => TaskId::PushTogether { a, b },
        }
    }

    pub fn task_spec(&self, blocks: &[Block]) -> TaskSpec {
        let (a, b) = self.blocks();
        match self {
            TaskFamily::TwoStage => build_two_stage_task(blocks, a, b),
            _ => build_push_task(blocks, a, b),
        }
    }
}

/// Noisy expert demonstrations for one task family on evaluation scenes
/// (disjoint seed range from the evaluation episodes).
pub fn collect_bc_trajectories(cfg: &AppConfig, family: TaskFamily) -> Result<Vec<Trajectory>> {
    let params = cfg.eval_scene_params(false);
    let (a, b) = family.blocks();
    let offset = match family {
        TaskFamily::PushFirst => 0u64,
        TaskFamily::PushSecond => 10_000,
        TaskFamily::TwoStage => 20_000,
    };
    let mut out = Vec::new();
    for i in 0..cfg.bc.trajs as u64 {
        let seed = cfg.bc.seed_start + offset + i;
        let scene = sample_scene(&params, seed);
        let state = scene.initial_state_with_seed(seed);
        let traj = match family {
            TaskFamily::TwoStage => {
                let mut expert = TwoStageExpert::new(&state, a, b, seed)?;
                let mut noise =
                    ScriptedPolicy::new(PolicyKind::Random, &state, seed ^ 0x77)?;
                noise.action_noise = cfg.bc.expert_noise;
                let mut states = vec![state.clone()];
                let mut actions = Vec::new();
                let mut s = state;
                for _ in 0..cfg.bc.traj_len {
                    let mut act = expert.act(&s);
                    if cfg.bc.expert_noise > 0.0 {
                        let jitter = noise.act(&s);
                        act = crate::blockworld::Action::clamped(
                            act.dx + jitter.dx * cfg.bc.expert_noise / 0.03,
                            act.dy + jitter.dy * cfg.bc.expert_noise / 0.03,
                        );
                    }
                    s = crate::blockworld::step(&s, act);
                    actions.push(act);
                    states.push(s.clone());
                }
                Trajectory { seed, scene: scene.clone(), actions, states }
            }
            _ => {
                let mut policy = ScriptedPolicy::new(
                    PolicyKind::PushTo { block: a, dest: PushDest::Block(b) },
                    &state,
                    seed,
                )?;
                policy.action_noise = cfg.bc.expert_noise;
                collect_trajectory(&scene, seed, &mut policy, cfg.bc.traj_len)
            }
        };
        out.push(traj);
    }
    Ok(out)
}

// ── planning evaluation ──────────────────────────────────────────────

fn eval_seeds(cfg: &AppConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| cfg.eval.eval_seed_start + i).collect()
}

/// Run the planner on one task family over the evaluation seed range.
pub fn eval_planner_on_task(
    cfg: &AppConfig,
    model: &Model,
    family: TaskFamily,
    planner: &PlannerKind,
    proposal: Option<&dyn ProposalPolicy>,
    n_seeds: usize,
    ood: bool,
) -> Result<PlanningEval> {
    let params = cfg.eval_scene_params(ood);
    let task_id = family.task_id();
    let seeds = eval_seeds(cfg, n_seeds);
    eval_planning(family.name(), &seeds, |seed| {
        let scene = sample_scene(&params, seed);
        let blocks = &scene.initial_state().blocks;
        let task = family.task_spec(blocks);
        let r = receding_horizon_execute(
            &scene,
            model,
            &task,
            &task_id,
            planner,
            cfg.eval.execute_steps,
            cfg.env.episode_cap,
            proposal,
            seed,
        )?;
        Ok(EpisodeSummary {
            seed,
            success: r.success,
            steps: r.steps,
            rounds: r.rounds,
            forward_passes: r.forward_passes,
            backward_passes: r.backward_passes,
        })
    })
}

/// MPPI on the reach task over the evaluation seed range.
pub fn eval_mppi_reach(cfg: &AppConfig, model: &Model, n_seeds: usize) -> Result<PlanningEval> {
    let params = cfg.eval_scene_params(false);
    let planner = PlannerKind::Mppi(cfg.planners.mppi.clone());
    let seeds = eval_seeds(cfg, n_seeds);
    eval_planning("reach", &seeds, |seed| {
        let scene = sample_scene(&params, seed);
        let blocks = &scene.initial_state().blocks;
        let task = build_reach_task(blocks, 0);
        let r = receding_horizon_execute(
            &scene,
            model,
            &task,
            &TaskId::Reach { target: 0 },
            &planner,
            cfg.eval.execute_steps,
            cfg.env.episode_cap,
            None,
            seed,
        )?;
        Ok(EpisodeSummary {
            seed,
            success: r.success,
            steps: r.steps,
            rounds: r.rounds,
            forward_passes: r.forward_passes,
            backward_passes: r.backward_passes,
        })
    })
}

/// The base policy alone on one task family.
pub fn eval_bc_on_task(
    cfg: &AppConfig,
    policy: &BcPolicy,
    family: TaskFamily,
    n_seeds: usize,
) -> Result<PlanningEval> {
    let params = cfg.eval_scene_params(false);
    let task_id = family.task_id();
    let seeds = eval_seeds(cfg, n_seeds);
    eval_planning(&format!("bc_{}", family.name()), &seeds, |seed| {
        let scene = sample_scene(&params, seed);
        bc_execute(&scene, policy, &task_id, cfg.eval.execute_steps, cfg.env.episode_cap, seed)
    })
}

/// Multistep subgoal execution on the two-stage task.
pub fn eval_multistep(
    cfg: &AppConfig,
    model: &Model,
    proposal: Option<&dyn ProposalPolicy>,
    n_seeds: usize,
) -> Result<PlanningEval> {
    let params = cfg.eval_scene_params(false);
    let planner = PlannerKind::Grad(cfg.planners.grad.clone());
    let seeds = eval_seeds(cfg, n_seeds);
    eval_planning("two_stage", &seeds, |seed| {
        let scene = sample_scene(&params, seed);
        let blocks = &scene.initial_state().blocks;
        let task = build_two_stage_task(blocks, 0, 1);
        let r = multistep_execute(
            &scene,
            model,
            &task.subgoals,
            &planner,
            cfg.eval.execute_steps,
            cfg.env.episode_cap,
            cfg.eval.theta_verify,
            proposal,
            seed,
        )?;
        // Ground truth: both stages completed in order.
        let success = crate::blockworld::task_success(&TaskId::TwoStage { a: 0, b: 1 }, &r.trajectory)?;
        Ok(EpisodeSummary {
            seed,
            success,
            steps: r.steps,
            rounds: 0,
            forward_passes: r.forward_passes,
            backward_passes: r.backward_passes,
        })
    })
}

// ── zero-horizon verification probe ──────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct ZeroHorizonReport {
    pub n: usize,
    pub agreement: f64,
}

/// Agreement between the model's zero-horizon answers and the oracle over
/// heldout zero-horizon records.
pub fn zero_horizon_agreement(
    model: &Model,
    heldout: &DataBundle,
    cap: usize,
    seed: u64,
) -> Result<ZeroHorizonReport> {
    let zero: Vec<usize> = (0..heldout.len())
        .filter(|&i| heldout.records[i].horizon == 0)
        .collect();
    if zero.is_empty() {
        return Err(Error::EmptyDataset("no zero-horizon heldout records".into()));
    }
    let pick = eval_subset(zero.len(), cap, seed);
    let indices: Vec<usize> = pick.into_iter().map(|k| zero[k]).collect();
    let probs = crate::model::eval_predictions(model, heldout, &indices)?;
    let agree = indices
        .iter()
        .zip(&probs)
        .filter(|(&i, &(py, pn))| (py >= pn) == heldout.records[i].answer)
        .count();
    Ok(ZeroHorizonReport { n: indices.len(), agreement: agree as f64 / indices.len() as f64 })
}

// ── bench ────────────────────────────────────────────────────────────

pub struct BenchOutcome {
    pub report: BenchReport,
    pub mppi_times: Vec<f64>,
    pub grad_times: Vec<f64>,
}

/// Planning-speed benchmark: >= `chunks` single planning calls per method
/// on fresh evaluation scenes. The protocol is pinned: 16 MPPI samples for
/// 8 iterations vs 10 gradient iterations on one candidate, both with a
/// reward sub-chunk of 8 and a horizon of 16.
pub fn bench_planning_speed(
    cfg: &AppConfig,
    model: &Model,
    proposal: &dyn ProposalPolicy,
    chunks: usize,
) -> Result<BenchOutcome> {
    let params = cfg.eval_scene_params(false);
    let mcfg_base = MppiConfig {
        samples: 16,
        iters: 8,
        horizon: 16,
        chunk: 8,
        ..cfg.planners.mppi.clone()
    };
    let gcfg = crate::plan::GradPlanConfig {
        iters: 10,
        horizon: 16,
        chunk: 8,
        ..cfg.planners.grad.clone()
    };
    let mut mppi_times = Vec::with_capacity(chunks);
    let mut grad_times = Vec::with_capacity(chunks);
    let mut mppi_passes = (0u64, 0u64);
    let mut grad_passes = (0u64, 0u64);
    for i in 0..chunks as u64 {
        let seed = cfg.eval.eval_seed_start + 100_000 + i;
        let scene = sample_scene(&params, seed);
        let state = scene.initial_state();
        let frame = render(&state);
        let task = build_push_task(&state.blocks, 0, 1);

        let scorer = TaskScorer::new(model, frame.clone(), task.clone(), mcfg_base.chunk)?;
        let mcfg = MppiConfig { seed, ..mcfg_base.clone() };
        let r = mppi_plan(&scorer, &mcfg)?;
        mppi_times.push(r.wall_secs);
        mppi_passes = (r.forward_passes, r.backward_passes);

        let scorer = TaskScorer::new(model, frame, task, gcfg.chunk)?;
        let init = proposal.propose(&render(&state))?;
        let r = grad_plan(&scorer, &init, &gcfg)?;
        grad_times.push(r.wall_secs);
        grad_passes = (r.forward_passes, r.backward_passes);
    }
    Ok(BenchOutcome {
        report: bench_report(&mppi_times, mppi_passes, &grad_times, grad_passes),
        mppi_times,
        grad_times,
    })
}

// ── single-shot planning (the `plan` subcommand) ─────────────────────

pub fn plan_once(
    cfg: &AppConfig,
    model: &Model,
    task: &TaskSpec,
    planner: &str,
    proposal: Option<&dyn ProposalPolicy>,
    seed: u64,
    ood: bool,
) -> Result<PlanResult> {
    let params = cfg.eval_scene_params(ood);
    let scene = sample_scene(&params, seed);
    let frame = render(&scene.initial_state());
    match planner {
        "mppi" => {
            let scorer =
                TaskScorer::new(model, frame, task.clone(), cfg.planners.mppi.chunk)?;
            let mcfg = MppiConfig { seed, ..cfg.planners.mppi.clone() };
            mppi_plan(&scorer, &mcfg)
        }
        "grad" => {
            let scorer =
                TaskScorer::new(model, frame.clone(), task.clone(), cfg.planners.grad.chunk)?;
            let policy = proposal.ok_or_else(|| {
                Error::InvalidArgument("gradient planning requires --bc CKPT".into())
            })?;
            let init = policy.propose(&frame)?;
            grad_plan(&scorer, &init, &cfg.planners.grad)
        }
        other => Err(Error::InvalidArgument(format!("unknown planner {other:?} (mppi | grad)"))),
    }
}

// ── run-all ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct PlanningSummary {
    pub n: usize,
    pub successes: usize,
    pub rate_percent: f64,
    pub ci95_points: f64,
}

impl From<&PlanningEval> for PlanningSummary {
    fn from(e: &PlanningEval) -> Self {
        PlanningSummary {
            n: e.n,
            successes: e.successes,
            rate_percent: e.rate * 100.0,
            ci95_points: e.ci95 * 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ImprovementRow {
    pub task: String,
    pub base: PlanningSummary,
    pub refined: PlanningSummary,
    pub improvement_points: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: DatasetStats,
    pub training: TrainingStats,
    pub future_qa: QaReport,
    pub future_qa_ood: QaReport,
    pub zero_horizon: ZeroHorizonReport,
    pub mppi_reach: PlanningSummary,
    pub improvements: Vec<ImprovementRow>,
    pub multistep: MultistepMetrics,
    pub ablation: AblationReport,
    pub bench_passes: BenchPasses,
    pub attention: AttentionProbe,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub train_records: usize,
    pub heldout_id_records: usize,
    pub heldout_ood_records: usize,
    pub zero_horizon_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingStats {
    pub epochs: Vec<crate::model::EpochLog>,
    pub best_heldout_acc: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistepMetrics {
    pub planner: PlanningSummary,
    pub base: PlanningSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchPasses {
    pub mppi_forwards_per_chunk: u64,
    pub mppi_backwards_per_chunk: u64,
    pub grad_forwards_per_chunk: u64,
    pub grad_backwards_per_chunk: u64,
    pub grad_fewer_passes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_secs: f64,
    pub train_secs: f64,
    pub ablation_secs: f64,
    pub planning_secs: f64,
    pub bench: BenchTimings,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTimings {
    pub mppi_median_secs_per_chunk: f64,
    pub grad_median_secs_per_chunk: f64,
    pub grad_faster_wall: bool,
}

/// The standard experiment, end to end. Writes artifacts under `out_dir`;
/// `metrics.json` holds only deterministic numbers.
pub fn run_all(loaded: &LoadedConfig, out_dir: &Path) -> Result<Metrics> {
    let cfg = &loaded.config;
    let hash = &loaded.hash;
    let t_total = std::time::Instant::now();
    std::fs::create_dir_all(out_dir)?;
    check_seed_ranges(&cfg.seed_ranges())?;

    // 1. trajectories
    eprintln!("[run-all] collecting trajectories");
    let train_trajs = collect_training_trajectories(cfg)?;
    save_trajectories(&train_trajs.named, &out_dir.join("trajs"), hash)?;
    let held_id = collect_heldout_trajectories(cfg, false)?;
    let held_ood = collect_heldout_trajectories(cfg, true)?;

    // 2. datasets
    eprintln!("[run-all] generating SAQA datasets");
    let train_records = generate_records(&train_trajs.named, cfg, cfg.train.seed)?;
    let id_records = generate_records(&held_id.named, cfg, cfg.train.seed ^ 0x1d)?;
    let ood_records = generate_records(&held_ood.named, cfg, cfg.train.seed ^ 0x0d)?;
    let zero_fraction = train_records.iter().filter(|r| r.horizon == 0).count() as f64
        / train_records.len() as f64;
    let meta = DatasetMeta {
        config_hash: hash.clone(),
        seed: cfg.train.seed,
        records: train_records.len(),
    };
    write_jsonl(&train_records, &out_dir.join("train.jsonl"), &meta)?;
    write_jsonl(
        &id_records,
        &out_dir.join("heldout_id.jsonl"),
        &DatasetMeta { records: id_records.len(), ..meta.clone() },
    )?;
    write_jsonl(
        &ood_records,
        &out_dir.join("heldout_ood.jsonl"),
        &DatasetMeta { records: ood_records.len(), ..meta.clone() },
    )?;
    let stats = DatasetStats {
        train_records: train_records.len(),
        heldout_id_records: id_records.len(),
        heldout_ood_records: ood_records.len(),
        zero_horizon_fraction: zero_fraction,
    };

    let train_bundle = bundle_from(&train_trajs.named, train_records)?;
    let id_bundle = bundle_from(&held_id.named, id_records)?;
    let ood_bundle = bundle_from(&held_ood.named, ood_records)?;

    // 3. main model
    eprintln!("[run-all] training the main model");
    let t_train = std::time::Instant::now();
    let outcome = train(
        cfg.model.clone(),
        Vocabulary::build(),
        &train_bundle,
        Some(&id_bundle),
        &cfg.train_config(),
    )?;
    let train_secs = t_train.elapsed().as_secs_f64();
    let model = outcome.model;
    save_checkpoint(&model, &out_dir.join("model.ckpt"), cfg.train.seed, hash)?;
    let training = TrainingStats {
        epochs: outcome.epochs,
        best_heldout_acc: outcome.best_heldout_acc,
        stopped_early: outcome.stopped_early,
    };

    // 4. future-QA reports
    eprintln!("[run-all] future-QA evaluation");
    let qa = eval_future_qa(&model, &id_bundle, cfg.eval.qa_eval_cap, cfg.train.seed)?;
    let qa_ood = eval_future_qa(&model, &ood_bundle, cfg.eval.qa_eval_cap, cfg.train.seed)?;
    let zero = zero_horizon_agreement(&model, &id_bundle, 1000, cfg.train.seed)?;

    // 5. BC policies
    eprintln!("[run-all] behavior cloning base policies");
    let mut bc_policies = BTreeMap::new();
    for family in [TaskFamily::PushFirst, TaskFamily::PushSecond, TaskFamily::TwoStage] {
        let trajs = collect_bc_trajectories(cfg, family)?;
        let (policy, _) = bc_train(&trajs, cfg.bc_config(), cfg.bc.seed)?;
        policy.save(
            &out_dir.join(format!("bc_{}.ckpt", family.name())),
            cfg.bc.seed,
            hash,
        )?;
        bc_policies.insert(family.name().to_string(), policy);
    }

    // 6. planning evaluations
    eprintln!("[run-all] MPPI reach evaluation");
    let t_plan = std::time::Instant::now();
    let reach = eval_mppi_reach(cfg, &model, cfg.eval.reach_seeds)?;
    write_json(&out_dir.join("episodes_reach.json"), &reach)?;

    let mut improvements = Vec::new();
    for family in [TaskFamily::PushFirst, TaskFamily::PushSecond] {
        eprintln!("[run-all] improvement evaluation: {}", family.name());
        let policy = &bc_policies[family.name()];
        let base = eval_bc_on_task(cfg, policy, family, cfg.eval.improvement_seeds)?;
        let refined = eval_planner_on_task(
            cfg,
            &model,
            family,
            &PlannerKind::Grad(cfg.planners.grad.clone()),
            Some(policy),
            cfg.eval.improvement_seeds,
            false,
        )?;
        write_json(&out_dir.join(format!("episodes_base_{}.json", family.name())), &base)?;
        write_json(&out_dir.join(format!("episodes_grad_{}.json", family.name())), &refined)?;
        improvements.push(ImprovementRow {
            task: family.name().to_string(),
            improvement_points: (refined.rate - base.rate) * 100.0,
            base: (&base).into(),
            refined: (&refined).into(),
        });
    }

    eprintln!("[run-all] multistep evaluation");
    let ms_policy = &bc_policies[TaskFamily::TwoStage.name()];
    let ms = eval_multistep(cfg, &model, Some(ms_policy), cfg.eval.multistep_seeds)?;
    let ms_base =
        eval_bc_on_task(cfg, ms_policy, TaskFamily::TwoStage, cfg.eval.multistep_seeds)?;
    write_json(&out_dir.join("episodes_multistep.json"), &ms)?;
    let planning_secs = t_plan.elapsed().as_secs_f64();

    // 7. ablation
    eprintln!("[run-all] dataset-mixture ablation");
    let t_abl = std::time::Instant::now();
    let ablation = run_ablation(cfg, &id_bundle, &ood_bundle)?;
    let ablation_secs = t_abl.elapsed().as_secs_f64();

    // 8. bench + attention probe
    eprintln!("[run-all] planning-speed benchmark");
    let bench = bench_planning_speed(cfg, &model, &bc_policies[TaskFamily::PushFirst.name()], 20)?;
    let attn_scenes: Vec<(Scene, usize)> = (0..8u64)
        .map(|i| {
            (sample_scene(&cfg.eval_scene_params(false), cfg.eval.eval_seed_start + 200_000 + i), (i % 3) as usize)
        })
        .collect();
    let attention = attention_probe(&model, &attn_scenes, cfg.eval.attention_layer)?;

    let metrics = Metrics {
        config_hash: hash.clone(),
        seed: cfg.train.seed,
        dataset: stats,
        training,
        future_qa: qa,
        future_qa_ood: qa_ood,
        zero_horizon: zero,
        mppi_reach: (&reach).into(),
        improvements,
        multistep: MultistepMetrics { planner: (&ms).into(), base: (&ms_base).into() },
        ablation,
        bench_passes: BenchPasses {
            mppi_forwards_per_chunk: bench.report.mppi.forwards_per_chunk,
            mppi_backwards_per_chunk: bench.report.mppi.backwards_per_chunk,
            grad_forwards_per_chunk: bench.report.grad.forwards_per_chunk,
            grad_backwards_per_chunk: bench.report.grad.backwards_per_chunk,
            grad_fewer_passes: bench.report.grad_fewer_passes,
        },
        attention,
    };
    write_json(&out_dir.join("metrics.json"), &metrics)?;

    let timings = Timings {
        total_secs: t_total.elapsed().as_secs_f64(),
        train_secs,
        ablation_secs,
        planning_secs,
        bench: BenchTimings {
            mppi_median_secs_per_chunk: bench.report.mppi.median_secs_per_chunk,
            grad_median_secs_per_chunk: bench.report.grad.median_secs_per_chunk,
            grad_faster_wall: bench.report.grad_faster_wall,
        },
    };
    write_json(&out_dir.join("timings.json"), &timings)?;
    Ok(metrics)
}

/// Train suboptimal / expert / combined variants (3 seeds each) and compare
/// heldout accuracy in and out of distribution.
pub fn run_ablation(
    cfg: &AppConfig,
    id_bundle: &DataBundle,
    ood_bundle: &DataBundle,
) -> Result<AblationReport> {
    let params = cfg.train_scene_params();
    let n_blocks = cfg.env.colors.len();
    let n = cfg.ablation.trajs_per_variant;
    let base_seed = cfg.data.traj_seed_start;

    let mut expert = Vec::new();
    let mut random = Vec::new();
    for i in 0..n as u64 {
        let seed = base_seed + i;
        let scene = sample_scene(&params, seed);
        let kind = training_expert_kind(i, n_blocks);
        let mut policy = ScriptedPolicy::new(kind, &scene.initial_state(), seed)?;
        expert.push(NamedTraj {
            id: format!("abl_expert_{seed:05}"),
            traj: collect_trajectory(&scene, seed, &mut policy, cfg.ablation.traj_len),
        });
        let mut rnd = ScriptedPolicy::new(PolicyKind::Random, &scene.initial_state(), seed ^ 0x9)?;
        random.push(NamedTraj {
            id: format!("abl_random_{seed:05}"),
            traj: collect_trajectory(&scene, seed, &mut rnd, cfg.ablation.traj_len),
        });
    }
    let mut combined = Vec::new();
    combined.extend_from_slice(&expert[..n / 2]);
    combined.extend_from_slice(&random[..n / 2]);

    let gen_seed = cfg.train.seed ^ 0xab1;
    let mk_bundle = |named: &Vec<NamedTraj>| -> Result<DataBundle> {
        let records = generate_records(named, cfg, gen_seed)?;
        bundle_from(named, records)
    };
    let sub_bundle = mk_bundle(&random)?;
    let exp_bundle = mk_bundle(&expert)?;
    let com_bundle = mk_bundle(&combined)?;

    let tcfg = TrainConfig {
        steps: cfg.ablation.steps,
        batch_size: cfg.ablation.batch_size,
        peak_lr: cfg.ablation.peak_lr,
        steps_per_epoch: cfg.ablation.steps, // single epoch log, no early stop
        patience: usize::MAX,
        verbose: false,
        ..cfg.train_config()
    };
    let variants: Vec<(String, &DataBundle)> = vec![
        ("suboptimal".into(), &sub_bundle),
        ("expert".into(), &exp_bundle),
        ("combined".into(), &com_bundle),
    ];
    mixture_ablation(
        &variants,
        id_bundle,
        ood_bundle,
        &cfg.ablation_model_config(),
        &tcfg,
        &cfg.ablation.seeds,
        cfg.ablation.eval_cap,
    )
}

/// Success-criterion spec for `eval-plan`: "reach:COLOR",
/// "push:COLOR,COLOR", "separate:COLOR,COLOR", or "two-stage:COLOR,COLOR".
pub fn parse_success_spec(spec: &str, state: &WorldState) -> Result<TaskId> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("bad success spec {spec:?}")))?;
    let find = |c: &str| -> Result<usize> {
        let color = crate::blockworld::Color::parse(c.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown color {c:?}")))?;
        state
            .block_by_color(color)
            .ok_or_else(|| Error::UnknownObject(format!("no {c} block in scene")))
    };
    let parts: Vec<&str> = rest.split(',').collect();
    match (kind, parts.as_slice()) {
        ("reach", [t]) => Ok(TaskId::Reach { target: find(t)? }),
        ("push", [a, b]) => Ok(TaskId::PushTogether { a: find(a)?, b: find(b)? }),
        ("separate", [t, rest @ ..]) => Ok(TaskId::Separate {
            target: find(t)?,
            neighbors: rest.iter().map(|c| find(c)).collect::<Result<_>>()?,
        }),
        ("two-stage", [a, b]) => Ok(TaskId::TwoStage { a: find(a)?, b: find(b)? }),
        _ => Err(Error::InvalidArgument(format!("bad success spec {spec:?}"))),
    }
}

pub fn load_model_checkpoint(path: &Path) -> Result<Model> {
    load_checkpoint(path)
}
