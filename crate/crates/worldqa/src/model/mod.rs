//! The action-conditioned question-answering model: a small prefix-LM
//! transformer over [image patch tokens, projected action tokens, SEP,
//! question tokens], decoding one-word answers. Prefix positions attend
//! bidirectionally among themselves; answer positions decode causally.

mod checkpoint;
mod forward;
mod train;
pub mod vocab;

pub use checkpoint::{load_checkpoint, load_tensors, save_checkpoint, save_tensors, CheckpointKind};
pub use forward::{
    answer_likelihood, attention_maps, binary_answer_probs, binary_answer_probs_unrestricted,
    binary_answer_probs_batch, build_prefix_embedding, patches_from_image, ActionsHandle,
    AttentionExport, PrefixLayout, ValueGraph,
};
pub use train::{eval_accuracy, eval_predictions, train, DataBundle, EpochLog, TrainConfig, TrainOutcome};
pub use vocab::Vocabulary;

use crate::blockworld::RENDER_SIZE;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token embedding width.
    pub d_tok: usize,
    /// Patch feature width (vision encoder output).
    pub d_img: usize,
    /// Action dimensionality.
    pub d_act: usize,
    pub patch_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    /// Longest action sequence the model accepts.
    pub max_actions: usize,
    pub max_question_len: usize,
    pub layer_norm_eps: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_tok: 128,
            d_img: 64,
            d_act: 2,
            patch_size: 8,
            n_layers: 4,
            n_heads: 4,
            d_mlp: 512,
            max_actions: 20,
            max_question_len: 16,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_tok % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_tok {} must be divisible by n_heads {}",
                self.d_tok, self.n_heads
            )));
        }
        if self.max_actions < 20 {
            return Err(Error::Config(format!(
                "max_actions {} must be >= 20",
                self.max_actions
            )));
        }
        if RENDER_SIZE % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "patch_size {} must divide {}",
                self.patch_size, RENDER_SIZE
            )));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        let per_axis = RENDER_SIZE / self.patch_size;
        per_axis * per_axis
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    /// Upper bound on sequence length: patches + actions + SEP + question +
    /// answer tokens (answer word + EOS slack).
    pub fn max_seq(&self) -> usize {
        self.n_patches() + self.max_actions + 1 + self.max_question_len + 2
    }

    pub fn head_dim(&self) -> usize {
        self.d_tok / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// All trainable tensors. Linear weights are stored input-major
/// `[in, out]` so the forward pass right-multiplies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub patch_w: Tensor,
    pub patch_b: Tensor,
    /// Image feature -> token space (the W projection).
    pub img_proj: Tensor,
    /// Action -> token space (the P projection).
    pub act_proj: Tensor,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    /// Segment-type embeddings: image / action / question / answer.
    pub seg_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub ln_f_g: Tensor,
    pub ln_f_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

pub const SEG_IMAGE: u32 = 0;
pub const SEG_ACTION: u32 = 1;
pub const SEG_QUESTION: u32 = 2;
pub const SEG_ANSWER: u32 = 3;

impl ModelParams {
    /// Seeded init: truncated-scale Gaussians for weights, zeros for biases,
    /// ones for norm gains.
    pub fn init(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let d = cfg.d_tok;
        let w_std = 0.02f32;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            layers.push(LayerParams {
                ln1_g: Tensor::new(vec![d], vec![1.0; d])?,
                ln1_b: Tensor::zeros(&[d]),
                wq: Tensor::normal(&[d, d], w_std, &mut rng),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::normal(&[d, d], w_std, &mut rng),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::normal(&[d, d], w_std, &mut rng),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::normal(&[d, d], w_std, &mut rng),
                bo: Tensor::zeros(&[d]),
                ln2_g: Tensor::new(vec![d], vec![1.0; d])?,
                ln2_b: Tensor::zeros(&[d]),
                w1: Tensor::normal(&[d, cfg.d_mlp], w_std, &mut rng),
                b1: Tensor::zeros(&[cfg.d_mlp]),
                w2: Tensor::normal(&[cfg.d_mlp, d], w_std, &mut rng),
                b2: Tensor::zeros(&[d]),
            });
        }
        Ok(ModelParams {
            patch_w: Tensor::normal(&[cfg.patch_dim(), cfg.d_img], w_std, &mut rng),
            patch_b: Tensor::zeros(&[cfg.d_img]),
            img_proj: Tensor::normal(&[cfg.d_img, d], w_std, &mut rng),
            act_proj: Tensor::normal(&[cfg.d_act, d], 0.5, &mut rng),
            tok_emb: Tensor::normal(&[vocab_size, d], w_std, &mut rng),
            pos_emb: Tensor::normal(&[cfg.max_seq(), d], w_std, &mut rng),
            seg_emb: Tensor::normal(&[4, d], w_std, &mut rng),
            layers,
            ln_f_g: Tensor::new(vec![d], vec![1.0; d])?,
            ln_f_b: Tensor::zeros(&[d]),
            // Small head init keeps answer probabilities near-symmetric at
            // init (and the initial loss near ln 2 on binary answers).
            head_w: Tensor::normal(&[d, vocab_size], w_std / (d as f32).sqrt(), &mut rng),
            head_b: Tensor::zeros(&[vocab_size]),
        })
    }

    /// Ordered (name, tensor) view; the order defines optimizer slot and
    /// checkpoint layout.
    pub fn visit(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("patch_w".into(), &self.patch_w),
            ("patch_b".into(), &self.patch_b),
            ("img_proj".into(), &self.img_proj),
            ("act_proj".into(), &self.act_proj),
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("seg_emb".into(), &self.seg_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, t) in [
                ("ln1_g", &l.ln1_g),
                ("ln1_b", &l.ln1_b),
                ("wq", &l.wq),
                ("bq", &l.bq),
                ("wk", &l.wk),
                ("bk", &l.bk),
                ("wv", &l.wv),
                ("bv", &l.bv),
                ("wo", &l.wo),
                ("bo", &l.bo),
                ("ln2_g", &l.ln2_g),
                ("ln2_b", &l.ln2_b),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
            ] {
                out.push((format!("layer{i}.{suffix}"), t));
            }
        }
        out.push(("ln_f_g".into(), &self.ln_f_g));
        out.push(("ln_f_b".into(), &self.ln_f_b));
        out.push(("head_w".into(), &self.head_w));
        out.push(("head_b".into(), &self.head_b));
        out
    }

    pub fn visit_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            &mut self.patch_w,
            &mut self.patch_b,
            &mut self.img_proj,
            &mut self.act_proj,
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.seg_emb,
        ];
        for l in self.layers.iter_mut() {
            out.push(&mut l.ln1_g);
            out.push(&mut l.ln1_b);
            out.push(&mut l.wq);
            out.push(&mut l.bq);
            out.push(&mut l.wk);
            out.push(&mut l.bk);
            out.push(&mut l.wv);
            out.push(&mut l.bv);
            out.push(&mut l.wo);
            out.push(&mut l.bo);
            out.push(&mut l.ln2_g);
            out.push(&mut l.ln2_b);
            out.push(&mut l.w1);
            out.push(&mut l.b1);
            out.push(&mut l.w2);
            out.push(&mut l.b2);
        }
        out.push(&mut self.ln_f_g);
        out.push(&mut self.ln_f_b);
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.visit().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.visit().iter().all(|(_, t)| t.is_finite())
    }
}

/// A trained (or initialized) model: parameters + the frozen vocabulary and
/// architecture; everything inference needs.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Model {
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        // The binary answer head slices the adjacent (yes, no) logit pair.
        if vocab.no_id() != vocab.yes_id() + 1 {
            return Err(Error::Config("vocabulary must place no directly after yes".into()));
        }
        let params = ModelParams::init(&config, vocab.len(), seed)?;
        Ok(Model { config, vocab, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants_enforced() {
        let mut cfg = ModelConfig::default();
        cfg.n_heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.max_actions = 8;
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn init_is_seeded_and_finite() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 90, 5).unwrap();
        let b = ModelParams::init(&cfg, 90, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        assert!(a.n_params() > 100_000);
    }

    #[test]
    fn visit_orders_match() {
        let cfg = ModelConfig { n_layers: 2, ..ModelConfig::default() };
        let mut p = ModelParams::init(&cfg, 50, 1).unwrap();
        let names: Vec<String> = p.visit().iter().map(|(n, _)| n.clone()).collect();
        let shapes: Vec<Vec<usize>> = p.visit().iter().map(|(_, t)| t.shape.clone()).collect();
        let muts: Vec<Vec<usize>> = p.visit_mut().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(shapes, muts);
        assert_eq!(names.len(), 7 + 2 * 16 + 4);
    }
}
