//! The experiment configuration file: flat, human-editable TOML with
//! sections. Unknown keys are hard errors so typos cannot silently change
//! an experiment. Every artifact embeds the hash of the config that
//! produced it.

use crate::blockworld::{BlockShape, Color, PairSet, SceneParams};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::plan::{GradPlanConfig, MppiConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub colors: Vec<String>,
    #[serde(default = "d_block_radius")]
    pub block_radius: f32,
    #[serde(default = "d_peg_radius")]
    pub peg_radius: f32,
    #[serde(default = "d_background")]
    pub background: [u8; 3],
    #[serde(default = "d_ood_background")]
    pub ood_background: [u8; 3],
    /// (color, shape) pairings excluded from training scenes and forced in
    /// OOD probes.
    #[serde(default)]
    pub held_out_pairs: Vec<(String, String)>,
    #[serde(default = "d_contact_prob")]
    pub contact_spawn_prob: f64,
    #[serde(default = "d_episode_cap")]
    pub episode_cap: usize,
}

fn d_block_radius() -> f32 {
    crate::blockworld::DEFAULT_BLOCK_RADIUS
}
fn d_peg_radius() -> f32 {
    crate::blockworld::DEFAULT_PEG_RADIUS
}
fn d_background() -> [u8; 3] {
    crate::blockworld::DEFAULT_BACKGROUND
}
fn d_ood_background() -> [u8; 3] {
    [92, 58, 142]
}
fn d_contact_prob() -> f64 {
    0.2
}
fn d_episode_cap() -> usize {
    crate::blockworld::EPISODE_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub expert_trajs: usize,
    pub random_trajs: usize,
    pub traj_len: usize,
    #[serde(default = "d_horizons")]
    pub horizons_per_state: usize,
    #[serde(default = "d_hmax")]
    pub h_max: usize,
    /// First seed for training trajectories.
    pub traj_seed_start: u64,
    /// First seed for heldout evaluation trajectories (must not overlap).
    pub eval_traj_seed_start: u64,
    pub eval_expert_trajs: usize,
}

fn d_horizons() -> usize {
    4
}
fn d_hmax() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f32,
    #[serde(default = "d_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "d_wd")]
    pub weight_decay: f32,
    pub steps_per_epoch: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_min_delta")]
    pub min_delta: f64,
    #[serde(default = "d_heldout_cap")]
    pub heldout_cap: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub verbose: bool,
}

fn d_warmup() -> usize {
    50
}
fn d_wd() -> f32 {
    0.01
}
fn d_patience() -> usize {
    6
}
fn d_min_delta() -> f64 {
    0.002
}
fn d_heldout_cap() -> usize {
    1500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    /// Trajectories per variant (expert / suboptimal use this count; the
    /// combined variant mixes half and half).
    pub trajs_per_variant: usize,
    pub traj_len: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f32,
    pub seeds: Vec<u64>,
    /// Reduced architecture for the ablation models.
    pub d_tok: usize,
    pub d_img: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    #[serde(default = "d_ablation_eval_cap")]
    pub eval_cap: usize,
}

fn d_ablation_eval_cap() -> usize {
    1200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    pub trajs: usize,
    pub traj_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f32,
    /// Uniform action noise injected into the scripted expert during BC
    /// data collection (creates improvement headroom).
    pub expert_noise: f32,
    /// First seed for BC expert trajectories.
    pub seed_start: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannersSection {
    pub mppi: MppiConfig,
    pub grad: GradPlanConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// First evaluation scene seed (disjoint from all training seeds).
    pub eval_seed_start: u64,
    pub reach_seeds: usize,
    pub improvement_seeds: usize,
    pub multistep_seeds: usize,
    pub execute_steps: usize,
    #[serde(default = "d_theta")]
    pub theta_verify: f32,
    pub qa_eval_cap: usize,
    /// Transformer layer whose attention is exported by probes.
    pub attention_layer: usize,
    /// Block shapes of evaluation scenes, by color order (so task text
    /// matches the scene exactly).
    pub eval_shapes: Vec<String>,
    /// Held-out pairings used by the OOD probe.
    pub ood_shapes: Vec<String>,
}

fn d_theta() -> f32 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub env: EnvSection,
    pub data: DataSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub ablation: AblationSection,
    pub bc: BcSection,
    pub planners: PlannersSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: AppConfig,
    /// Hex SHA-256 of the raw config file bytes (first 16 chars).
    pub hash: String,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..16].to_string()
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    let config: AppConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(LoadedConfig { config, hash: hash_bytes(&bytes) })
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.env.colors.len() < 2 {
            return Err(Error::Config("need at least 2 block colors".into()));
        }
        for c in &self.env.colors {
            if Color::parse(c).is_none() {
                return Err(Error::Config(format!("unknown color {c:?}")));
            }
        }
        for shapes in [&self.eval.eval_shapes, &self.eval.ood_shapes] {
            if shapes.len() != self.env.colors.len() {
                return Err(Error::Config(
                    "eval_shapes/ood_shapes must list one shape per color".into(),
                ));
            }
            for s in shapes {
                if BlockShape::parse(s).is_none() {
                    return Err(Error::Config(format!("unknown shape {s:?}")));
                }
            }
        }
        for (c, s) in &self.env.held_out_pairs {
            if Color::parse(c).is_none() || BlockShape::parse(s).is_none() {
                return Err(Error::Config(format!("unknown held-out pair ({c}, {s})")));
            }
        }
        // OOD eval scenes must use pairings the training sampler excluded.
        for (color, shape) in self.env.colors.iter().zip(&self.eval.ood_shapes) {
            let pair = (Color::parse(color).unwrap(), BlockShape::parse(shape).unwrap());
            let held = self
                .env
                .held_out_pairs
                .iter()
                .any(|(c, s)| Color::parse(c) == Some(pair.0) && BlockShape::parse(s) == Some(pair.1));
            if !held {
                return Err(Error::Config(format!(
                    "ood shape {shape} for {color} must appear in held_out_pairs"
                )));
            }
        }
        Ok(())
    }

    pub fn colors(&self) -> Vec<Color> {
        self.env.colors.iter().map(|c| Color::parse(c).unwrap()).collect()
    }

    fn held_out_pairset(&self) -> PairSet {
        PairSet(
            self.env
                .held_out_pairs
                .iter()
                .map(|(c, s)| (Color::parse(c).unwrap(), BlockShape::parse(s).unwrap()))
                .collect(),
        )
    }

    /// Scene sampler for training trajectories: random shapes, held-out
    /// pairings excluded.
    pub fn train_scene_params(&self) -> SceneParams {
        SceneParams {
            colors: self.colors(),
            shapes: BlockShape::ALL.to_vec(),
            excluded_pairs: self.held_out_pairset(),
            fixed_shapes: None,
            block_radius: self.env.block_radius,
            peg_radius: self.env.peg_radius,
            background: self.env.background,
            contact_spawn_prob: self.env.contact_spawn_prob,
        }
    }

    /// Evaluation scenes: fixed shapes so task question text matches.
    pub fn eval_scene_params(&self, ood: bool) -> SceneParams {
        let shapes = if ood { &self.eval.ood_shapes } else { &self.eval.eval_shapes };
        SceneParams {
            colors: self.colors(),
            shapes: BlockShape::ALL.to_vec(),
            excluded_pairs: PairSet::default(),
            fixed_shapes: Some(shapes.iter().map(|s| BlockShape::parse(s).unwrap()).collect()),
            block_radius: self.env.block_radius,
            peg_radius: self.env.peg_radius,
            background: if ood { self.env.ood_background } else { self.env.background },
            contact_spawn_prob: self.env.contact_spawn_prob,
        }
    }

    pub fn train_config(&self) -> crate::model::TrainConfig {
        crate::model::TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            peak_lr: self.train.peak_lr,
            warmup_steps: self.train.warmup_steps,
            weight_decay: self.train.weight_decay,
            steps_per_epoch: self.train.steps_per_epoch,
            patience: self.train.patience,
            min_delta: self.train.min_delta,
            heldout_cap: self.train.heldout_cap,
            seed: self.train.seed,
            verbose: self.train.verbose,
        }
    }

    pub fn ablation_model_config(&self) -> ModelConfig {
        ModelConfig {
            d_tok: self.ablation.d_tok,
            d_img: self.ablation.d_img,
            n_layers: self.ablation.n_layers,
            n_heads: self.ablation.n_heads,
            d_mlp: self.ablation.d_mlp,
            ..self.model.clone()
        }
    }

    pub fn bc_config(&self) -> crate::bc::BcConfig {
        crate::bc::BcConfig {
            horizon: self.planners.grad.horizon,
            patch_size: self.model.patch_size,
            epochs: self.bc.epochs,
            batch_size: self.bc.batch_size,
            peak_lr: self.bc.peak_lr,
            ..crate::bc::BcConfig::default()
        }
    }

    /// All seed ranges that must stay disjoint.
    pub fn seed_ranges(&self) -> Vec<(&'static str, std::ops::Range<u64>)> {
        let d = &self.data;
        let n_train = (d.expert_trajs + d.random_trajs) as u64;
        vec![
            ("train_trajs", d.traj_seed_start..d.traj_seed_start + n_train),
            (
                "heldout_trajs",
                d.eval_traj_seed_start..d.eval_traj_seed_start + d.eval_expert_trajs as u64,
            ),
            ("bc_trajs", self.bc.seed_start..self.bc.seed_start + self.bc.trajs as u64),
            (
                "eval_episodes",
                self.eval.eval_seed_start
                    ..self.eval.eval_seed_start
                        + self
                            .eval
                            .reach_seeds
                            .max(self.eval.improvement_seeds)
                            .max(self.eval.multistep_seeds) as u64,
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_config_parses_and_validates() {
        let loaded = load_config(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/golden.toml"
        )))
        .unwrap();
        assert_eq!(loaded.hash.len(), 16);
        crate::eval::check_seed_ranges(&loaded.config.seed_ranges()).unwrap();
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/golden.toml"
        ))
        .unwrap();
        let broken = text.replace("expert_trajs", "expert_trajss");
        let err = toml::from_str::<AppConfig>(&broken).unwrap_err().to_string();
        assert!(err.contains("expert_trajss"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        assert_eq!(hash_bytes(b"abc"), hash_bytes(b"abc"));
        assert_ne!(hash_bytes(b"abc"), hash_bytes(b"abd"));
    }
}
