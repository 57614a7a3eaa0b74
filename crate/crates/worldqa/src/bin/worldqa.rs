//! Command-line entry point. Each subcommand is a thin wrapper over the
//! library pipeline: a pure function of (config, seed) that leaves
//! artifacts on disk. See `worldqa <cmd> --help` and configs/golden.toml.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use worldqa::bc::{bc_train, BcPolicy};
use worldqa::blockworld::{render, sample_scene};
use worldqa::eval::check_seed_ranges;
use worldqa::model::{attention_maps, load_checkpoint, save_checkpoint, train, Vocabulary};
use worldqa::pipeline::{
    self, bundle_from, collect_bc_trajectories, collect_heldout_trajectories,
    collect_training_trajectories, eval_bc_on_task, eval_mppi_reach, eval_multistep,
    eval_planner_on_task, generate_records, load_config, load_trajectories, plan_once,
    save_trajectories, LoadedConfig, TaskFamily,
};
use worldqa::plan::PlannerKind;
use worldqa::saqa::{read_jsonl, split, write_jsonl, DatasetMeta};
use worldqa::value::TaskSpec;

#[derive(Parser)]
#[command(name = "worldqa", version, about = "Action-conditioned future QA over a toy block world: data, training, planning, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect training and heldout trajectories into OUT/{train,heldout_id,heldout_ood}.
    CollectTrajs {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the SAQA dataset from a trajectory directory.
    GenData {
        #[arg(long)]
        trajs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Horizons sampled per state (overrides the config).
        #[arg(long)]
        horizons: Option<usize>,
        /// Maximum horizon (overrides the config).
        #[arg(long)]
        hmax: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the model on a SAQA dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Trajectory directory the records reference.
        #[arg(long)]
        trajs: PathBuf,
        /// Optional heldout dataset; when absent, a trajectory-level split
        /// of --data is used.
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long)]
        heldout_trajs: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Behavior-clone a base policy for one task family.
    BcTrain {
        #[arg(long)]
        config: PathBuf,
        /// push-first | push-second | two-stage
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One planning call on a fresh evaluation scene; writes the result JSON.
    Plan {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: PathBuf,
        /// mppi | grad
        #[arg(long)]
        planner: String,
        #[arg(long)]
        config: PathBuf,
        /// Base-policy checkpoint (required for grad).
        #[arg(long)]
        bc: Option<PathBuf>,
        #[arg(long, default_value_t = 6000)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        ood: bool,
    },
    /// Future-QA accuracy report for a checkpoint on a dataset.
    EvalQa {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trajs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Planning success rate over the evaluation seed range.
    EvalPlan {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// mppi | grad | bc
        #[arg(long)]
        planner: String,
        /// reach | push-first | push-second | two-stage
        #[arg(long)]
        task: String,
        #[arg(long)]
        bc: Option<PathBuf>,
        /// Episode count (defaults from the config per task).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset-mixture ablation (suboptimal / expert / combined x seeds).
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Planning-speed benchmark (pass counts + wall times).
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bc: PathBuf,
        #[arg(long, default_value_t = 20)]
        chunks: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export question-token-to-image-patch attention for one frame.
    DumpAttention {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 6000)]
        seed: u64,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        question: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        ood: bool,
    },
    /// The standard experiment end to end; writes metrics.json and
    /// timings.json under OUT.
    RunAll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("WORLDQA_THREADS") {
        let n: usize = threads.parse().context("WORLDQA_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let cli = Cli::parse();
    match cli.command {
        Command::CollectTrajs { config, out } => {
            let loaded = load_config(&config)?;
            check_seed_ranges(&loaded.config.seed_ranges())?;
            let train = collect_training_trajectories(&loaded.config)?;
            save_trajectories(&train.named, &out.join("train"), &loaded.hash)?;
            let id = collect_heldout_trajectories(&loaded.config, false)?;
            save_trajectories(&id.named, &out.join("heldout_id"), &loaded.hash)?;
            let ood = collect_heldout_trajectories(&loaded.config, true)?;
            save_trajectories(&ood.named, &out.join("heldout_ood"), &loaded.hash)?;
            eprintln!(
                "collected {} train / {} heldout-id / {} heldout-ood trajectories under {}",
                train.named.len(),
                id.named.len(),
                ood.named.len(),
                out.display()
            );
        }
        Command::GenData { trajs, out, config, horizons, hmax, seed } => {
            let loaded = load_config(&config)?;
            let mut cfg = loaded.config.clone();
            if let Some(h) = horizons {
                cfg.data.horizons_per_state = h;
            }
            if let Some(h) = hmax {
                cfg.data.h_max = h;
            }
            let named = load_trajectories(&trajs)?;
            let records = generate_records(&named, &cfg, seed)?;
            let meta =
                DatasetMeta { config_hash: loaded.hash.clone(), seed, records: records.len() };
            write_jsonl(&records, &out, &meta)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Train { data, trajs, heldout, heldout_trajs, config, out, seed } => {
            let loaded = load_config(&config)?;
            let mut tcfg = loaded.config.train_config();
            if let Some(s) = seed {
                tcfg.seed = s;
            }
            let named = load_trajectories(&trajs)?;
            let records = read_jsonl(&data)?;
            let (train_bundle, heldout_bundle) = match (&heldout, &heldout_trajs) {
                (Some(hfile), Some(hdir)) => {
                    let hnamed = load_trajectories(hdir)?;
                    let hrecords = read_jsonl(hfile)?;
                    (bundle_from(&named, records)?, Some(bundle_from(&hnamed, hrecords)?))
                }
                (None, None) => {
                    let sp = split(&records, 0.9, tcfg.seed)?;
                    let train_recs = sp.train.iter().map(|&i| records[i].clone()).collect();
                    let held_recs = sp.heldout.iter().map(|&i| records[i].clone()).collect();
                    (bundle_from(&named, train_recs)?, Some(bundle_from(&named, held_recs)?))
                }
                _ => bail!("--heldout and --heldout-trajs must be given together"),
            };
            let outcome = train(
                loaded.config.model.clone(),
                Vocabulary::build(),
                &train_bundle,
                heldout_bundle.as_ref(),
                &tcfg,
            )?;
            save_checkpoint(&outcome.model, &out, tcfg.seed, &loaded.hash)?;
            eprintln!(
                "trained {} steps; best heldout accuracy {:?}; checkpoint at {}",
                outcome.epochs.last().map(|e| e.step).unwrap_or(0),
                outcome.best_heldout_acc,
                out.display()
            );
        }
        Command::BcTrain { config, task, out, seed } => {
            let loaded = load_config(&config)?;
            let family = TaskFamily::parse(&task)?;
            let trajs = collect_bc_trajectories(&loaded.config, family)?;
            let seed = seed.unwrap_or(loaded.config.bc.seed);
            let (policy, logs) = bc_train(&trajs, loaded.config.bc_config(), seed)?;
            policy.save(&out, seed, &loaded.hash)?;
            eprintln!(
                "behavior-cloned {} on {} trajectories (final loss {:.5}); checkpoint at {}",
                family.name(),
                trajs.len(),
                logs.last().map(|l| l.mean_loss).unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Plan { ckpt, task, planner, config, bc, seed, out, ood } => {
            let loaded = load_config(&config)?;
            let model = load_checkpoint(&ckpt)?;
            let spec = TaskSpec::load(&task)?;
            let proposal = bc.map(|p| BcPolicy::load(&p)).transpose()?;
            let result = plan_once(
                &loaded.config,
                &model,
                &spec,
                &planner,
                proposal.as_ref().map(|p| p as &dyn worldqa::plan::ProposalPolicy),
                seed,
                ood,
            )?;
            write_json(&out, &result)?;
        }
        Command::EvalQa { ckpt, data, trajs, config, out, seed } => {
            let loaded = load_config(&config)?;
            let model = load_checkpoint(&ckpt)?;
            let named = load_trajectories(&trajs)?;
            let records = read_jsonl(&data)?;
            let bundle = bundle_from(&named, records)?;
            let report = worldqa::eval::eval_future_qa(
                &model,
                &bundle,
                loaded.config.eval.qa_eval_cap,
                seed,
            )?;
            write_json(&out, &report)?;
            println!("overall accuracy: {:.2}%", report.overall * 100.0);
        }
        Command::EvalPlan { ckpt, config, planner, task, bc, n, out } => {
            let loaded = load_config(&config)?;
            let cfg = &loaded.config;
            let model = load_checkpoint(&ckpt)?;
            let policy = bc.map(|p| BcPolicy::load(&p)).transpose()?;
            let eval = match (planner.as_str(), task.as_str()) {
                ("mppi", "reach") => {
                    eval_mppi_reach(cfg, &model, n.unwrap_or(cfg.eval.reach_seeds))?
                }
                ("bc", fam) => {
                    let family = TaskFamily::parse(fam)?;
                    let policy =
                        policy.ok_or_else(|| anyhow::anyhow!("--bc CKPT required for bc"))?;
                    eval_bc_on_task(cfg, &policy, family, n.unwrap_or(cfg.eval.improvement_seeds))?
                }
                ("grad", "two-stage") => {
                    let policy =
                        policy.ok_or_else(|| anyhow::anyhow!("--bc CKPT required for grad"))?;
                    eval_multistep(cfg, &model, Some(&policy), n.unwrap_or(cfg.eval.multistep_seeds))?
                }
                ("grad", fam) => {
                    let family = TaskFamily::parse(fam)?;
                    let policy =
                        policy.ok_or_else(|| anyhow::anyhow!("--bc CKPT required for grad"))?;
                    eval_planner_on_task(
                        cfg,
                        &model,
                        family,
                        &PlannerKind::Grad(cfg.planners.grad.clone()),
                        Some(&policy),
                        n.unwrap_or(cfg.eval.improvement_seeds),
                        false,
                    )?
                }
                (p, t) => bail!("unsupported planner/task combination: {p} on {t}"),
            };
            println!(
                "{}: {}/{} = {:.1}% +- {:.1}",
                eval.name,
                eval.successes,
                eval.n,
                eval.rate * 100.0,
                eval.ci95 * 100.0
            );
            write_json(&out, &eval)?;
        }
        Command::Ablate { config, out } => {
            let loaded = load_config(&config)?;
            let cfg = &loaded.config;
            let id = collect_heldout_trajectories(cfg, false)?;
            let ood = collect_heldout_trajectories(cfg, true)?;
            let id_records = generate_records(&id.named, cfg, cfg.train.seed ^ 0x1d)?;
            let ood_records = generate_records(&ood.named, cfg, cfg.train.seed ^ 0x0d)?;
            let id_bundle = bundle_from(&id.named, id_records)?;
            let ood_bundle = bundle_from(&ood.named, ood_records)?;
            let report = pipeline::run_ablation(cfg, &id_bundle, &ood_bundle)?;
            write_json(&out, &report)?;
        }
        Command::Bench { ckpt, config, bc, chunks, out } => {
            let loaded = load_config(&config)?;
            let model = load_checkpoint(&ckpt)?;
            let policy = BcPolicy::load(&bc)?;
            let bench =
                pipeline::bench_planning_speed(&loaded.config, &model, &policy, chunks)?;
            write_json(&out, &bench.report)?;
            println!(
                "mppi {:.3}s/chunk ({} fwd) vs grad {:.3}s/chunk ({} fwd + {} bwd)",
                bench.report.mppi.median_secs_per_chunk,
                bench.report.mppi.forwards_per_chunk,
                bench.report.grad.median_secs_per_chunk,
                bench.report.grad.forwards_per_chunk,
                bench.report.grad.backwards_per_chunk,
            );
        }
        Command::DumpAttention { ckpt, config, seed, layer, question, out, ood } => {
            let loaded = load_config(&config)?;
            let model = load_checkpoint(&ckpt)?;
            let scene = sample_scene(&loaded.config.eval_scene_params(ood), seed);
            let frame = render(&scene.initial_state());
            let export = attention_maps(&model, &frame, &[], &question, layer)?;
            write_json(&out, &export)?;
        }
        Command::RunAll { config, out } => {
            let loaded: LoadedConfig = load_config(&config)?;
            let metrics = pipeline::run_all(&loaded, &out)?;
            println!(
                "run-all complete: future-QA {:.2}%, MPPI reach {:.1}%, metrics at {}",
                metrics.future_qa.overall * 100.0,
                metrics.mppi_reach.rate_percent,
                out.join("metrics.json").display()
            );
        }
    }
    Ok(())
}
