//! Tape-level forward passes: prefix construction, the prefix-LM
//! transformer, answer likelihoods (differentiable w.r.t. action inputs),
//! and attention export.

use super::vocab::SEP;
use super::{Model, ModelConfig, ModelParams, SEG_ACTION, SEG_ANSWER, SEG_IMAGE, SEG_QUESTION};
use crate::blockworld::{Action, Image};
use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape, Tensor};

pub(crate) struct BoundLayer {
    ln1_g: NodeId,
    ln1_b: NodeId,
    wq: NodeId,
    bq: NodeId,
    wk: NodeId,
    bk: NodeId,
    wv: NodeId,
    bv: NodeId,
    wo: NodeId,
    bo: NodeId,
    ln2_g: NodeId,
    ln2_b: NodeId,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
}

/// Parameter tensors copied onto a tape. `ordered` follows
/// `ModelParams::visit` so per-parameter gradients can be read back in
/// optimizer slot order.
pub(crate) struct Bound {
    patch_w: NodeId,
    patch_b: NodeId,
    img_proj: NodeId,
    act_proj: NodeId,
    tok_emb: NodeId,
    pos_emb: NodeId,
    seg_emb: NodeId,
    layers: Vec<BoundLayer>,
    ln_f_g: NodeId,
    ln_f_b: NodeId,
    head_w: NodeId,
    head_b: NodeId,
    pub ordered: Vec<NodeId>,
}

pub(crate) fn bind(tape: &mut Tape, p: &ModelParams, trainable: bool) -> Bound {
    let mut ordered = Vec::new();
    let mut put = |tape: &mut Tape, t: &Tensor| -> NodeId {
        let id = if trainable { tape.param(t.clone()) } else { tape.leaf(t.clone()) };
        ordered.push(id);
        id
    };
    let patch_w = put(tape, &p.patch_w);
    let patch_b = put(tape, &p.patch_b);
    let img_proj = put(tape, &p.img_proj);
    let act_proj = put(tape, &p.act_proj);
    let tok_emb = put(tape, &p.tok_emb);
    let pos_emb = put(tape, &p.pos_emb);
    let seg_emb = put(tape, &p.seg_emb);
    let layers = p
        .layers
        .iter()
        .map(|l| BoundLayer {
            ln1_g: put(tape, &l.ln1_g),
            ln1_b: put(tape, &l.ln1_b),
            wq: put(tape, &l.wq),
            bq: put(tape, &l.bq),
            wk: put(tape, &l.wk),
            bk: put(tape, &l.bk),
            wv: put(tape, &l.wv),
            bv: put(tape, &l.bv),
            wo: put(tape, &l.wo),
            bo: put(tape, &l.bo),
            ln2_g: put(tape, &l.ln2_g),
            ln2_b: put(tape, &l.ln2_b),
            w1: put(tape, &l.w1),
            b1: put(tape, &l.b1),
            w2: put(tape, &l.w2),
            b2: put(tape, &l.b2),
        })
        .collect();
    let ln_f_g = put(tape, &p.ln_f_g);
    let ln_f_b = put(tape, &p.ln_f_b);
    let head_w = put(tape, &p.head_w);
    let head_b = put(tape, &p.head_b);
    Bound {
        patch_w,
        patch_b,
        img_proj,
        act_proj,
        tok_emb,
        pos_emb,
        seg_emb,
        layers,
        ln_f_g,
        ln_f_b,
        head_w,
        head_b,
        ordered,
    }
}

/// Break an image into flattened per-patch pixel vectors, centered in
/// [-1, 1]. Rows are patches in row-major grid order.
pub fn patches_from_image(image: &Image, patch_size: usize) -> Tensor {
    let per_axis = image.width / patch_size;
    let n = per_axis * per_axis;
    let dim = patch_size * patch_size * 3;
    let mut data = Vec::with_capacity(n * dim);
    for gy in 0..per_axis {
        for gx in 0..per_axis {
            for py in 0..patch_size {
                for px in 0..patch_size {
                    let rgb = image.get(gx * patch_size + px, gy * patch_size + py);
                    for c in rgb {
                        data.push((c as f32 / 255.0 - 0.5) * 2.0);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, dim], data).expect("patch layout")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixLayout {
    pub n_img: usize,
    pub n_act: usize,
    /// SEP + question tokens.
    pub n_txt: usize,
    /// Teacher-forced answer input tokens.
    pub n_ans_input: usize,
}

impl PrefixLayout {
    pub fn prefix_len(&self) -> usize {
        self.n_img + self.n_act + self.n_txt
    }

    pub fn total_len(&self) -> usize {
        self.prefix_len() + self.n_ans_input
    }
}

pub struct ForwardOutput {
    pub hidden: NodeId,
    pub layout: PrefixLayout,
    /// Captured attention probabilities per layer per head, `[T, T]` each.
    pub attention: Vec<Vec<NodeId>>,
}

struct SeqInput {
    /// Action rows node (h x d_act) already on the tape, or None for h = 0.
    act_rows: Option<NodeId>,
    question_ids: Vec<u32>,
    answer_input_ids: Vec<u32>,
}

fn linear(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// The full forward: embed segments, add shared positions + segment type
/// embeddings, run the prefix-LM transformer, final layer norm.
fn run_transformer(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    img_tokens: NodeId,
    input: &SeqInput,
    capture_attention: bool,
) -> Result<ForwardOutput> {
    let n_img = cfg.n_patches();
    let n_act = input.act_rows.map(|a| tape.value(a).shape[0]).unwrap_or(0);
    if n_act > cfg.max_actions {
        return Err(Error::InvalidArgument(format!(
            "{} actions exceed max_actions {}",
            n_act, cfg.max_actions
        )));
    }
    if input.question_ids.len() > cfg.max_question_len {
        return Err(Error::InvalidArgument(format!(
            "question length {} exceeds max_question_len {}",
            input.question_ids.len(),
            cfg.max_question_len
        )));
    }
    let layout = PrefixLayout {
        n_img,
        n_act,
        n_txt: 1 + input.question_ids.len(),
        n_ans_input: input.answer_input_ids.len(),
    };
    let total = layout.total_len();

    // Segment embeddings of the raw token streams.
    let mut parts = vec![img_tokens];
    if let Some(act) = input.act_rows {
        let act_tokens = tape.matmul(act, bound.act_proj)?;
        parts.push(act_tokens);
    }
    let mut txt_ids = vec![SEP];
    txt_ids.extend_from_slice(&input.question_ids);
    let txt_tokens = tape.embedding_lookup(bound.tok_emb, &txt_ids)?;
    parts.push(txt_tokens);
    if !input.answer_input_ids.is_empty() {
        let ans_tokens = tape.embedding_lookup(bound.tok_emb, &input.answer_input_ids)?;
        parts.push(ans_tokens);
    }
    let seq = tape.concat(&parts, 0)?;

    // One positional scheme shared across segments, plus segment-type ids.
    let pos = tape.slice(bound.pos_emb, 0, 0, total)?;
    let mut seg_ids = Vec::with_capacity(total);
    seg_ids.extend(std::iter::repeat(SEG_IMAGE).take(n_img));
    seg_ids.extend(std::iter::repeat(SEG_ACTION).take(n_act));
    seg_ids.extend(std::iter::repeat(SEG_QUESTION).take(layout.n_txt));
    seg_ids.extend(std::iter::repeat(SEG_ANSWER).take(layout.n_ans_input));
    let seg = tape.embedding_lookup(bound.seg_emb, &seg_ids)?;
    let x = tape.add(seq, pos)?;
    let mut x = tape.add(x, seg)?;

    // Prefix attends bidirectionally within itself; answer rows are causal.
    let m = layout.prefix_len();
    let mut allowed = vec![false; total * total];
    for i in 0..total {
        for j in 0..total {
            allowed[i * total + j] = if i < m { j < m } else { j <= i };
        }
    }
    let mask = tape.attention_mask(&allowed, total, total);

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f32).sqrt();
    let mut attention = Vec::new();
    for layer in &bound.layers {
        let xn = tape.layer_norm(x, layer.ln1_g, layer.ln1_b, cfg.layer_norm_eps)?;
        let q = linear(tape, xn, layer.wq, layer.bq)?;
        let k = linear(tape, xn, layer.wk, layer.bk)?;
        let v = linear(tape, xn, layer.wv, layer.bv)?;
        let mut head_ctx = Vec::with_capacity(cfg.n_heads);
        let mut head_probs = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = tape.slice(q, 1, h * dh, dh)?;
            let kh = tape.slice(k, 1, h * dh, dh)?;
            let vh = tape.slice(v, 1, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let masked = tape.add(scores, mask)?;
            let probs = tape.softmax(masked)?;
            head_probs.push(probs);
            let ctx = tape.matmul(probs, vh)?;
            head_ctx.push(ctx);
        }
        if capture_attention {
            attention.push(head_probs);
        }
        let ctx = tape.concat(&head_ctx, 1)?;
        let attn_out = linear(tape, ctx, layer.wo, layer.bo)?;
        x = tape.add(x, attn_out)?;
        let xn2 = tape.layer_norm(x, layer.ln2_g, layer.ln2_b, cfg.layer_norm_eps)?;
        let h1 = linear(tape, xn2, layer.w1, layer.b1)?;
        let h1 = tape.gelu(h1)?;
        let h2 = linear(tape, h1, layer.w2, layer.b2)?;
        x = tape.add(x, h2)?;
    }
    let hidden = tape.layer_norm(x, bound.ln_f_g, bound.ln_f_b, cfg.layer_norm_eps)?;
    Ok(ForwardOutput { hidden, layout, attention })
}

fn image_tokens(tape: &mut Tape, bound: &Bound, cfg: &ModelConfig, image: &Image) -> Result<NodeId> {
    let patches = tape.leaf(patches_from_image(image, cfg.patch_size));
    let feat = linear(tape, patches, bound.patch_w, bound.patch_b)?;
    let feat = tape.gelu(feat)?;
    tape.matmul(feat, bound.img_proj)
}

fn actions_tensor(actions: &[Action]) -> Tensor {
    let mut data = Vec::with_capacity(actions.len() * 2);
    for a in actions {
        data.push(a.dx);
        data.push(a.dy);
    }
    Tensor::new(vec![actions.len(), 2], data).expect("action layout")
}

/// Per-example training loss on a caller-provided tape/binding: the
/// cross-entropy of the answer over the binary answer head (the logits of
/// "yes" and "no"; answers are one word by construction, so the likelihood
/// computation stays calibrated with training). Several examples may share
/// one tape and binding; their gradients then accumulate on `bound`.
pub(crate) fn example_loss(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    yes_id: u32,
    image: &Image,
    actions: &[Action],
    question_ids: &[u32],
    answer: bool,
) -> Result<NodeId> {
    let img = image_tokens(tape, bound, cfg, image)?;
    let act_rows = if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
    let input =
        SeqInput { act_rows, question_ids: question_ids.to_vec(), answer_input_ids: vec![] };
    let out = run_transformer(tape, bound, cfg, img, &input, false)?;
    let m = out.layout.prefix_len();
    let rows = tape.slice(out.hidden, 0, m - 1, 1)?;
    let logits = linear(tape, rows, bound.head_w, bound.head_b)?;
    // Binary answer head: softmax over the adjacent (yes, no) logit pair.
    let pair = tape.slice(logits, 1, yes_id as usize, 2)?;
    let target = if answer { 0 } else { 1 };
    tape.cross_entropy(pair, &[target])
}

/// Binary answer probabilities for a batch of (image, actions, question)
/// tuples sharing one parameter binding.
pub fn binary_answer_probs_batch(
    model: &Model,
    items: &[(&Image, &[Action], &[u32])],
) -> Result<Vec<(f32, f32)>> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &model.params, false);
    let mut out = Vec::with_capacity(items.len());
    for &(image, actions, q_ids) in items {
        let img = image_tokens(&mut tape, &bound, &model.config, image)?;
        let act_rows =
            if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
        let input =
            SeqInput { act_rows, question_ids: q_ids.to_vec(), answer_input_ids: vec![] };
        let fw = run_transformer(&mut tape, &bound, &model.config, img, &input, false)?;
        let m = fw.layout.prefix_len();
        let row = tape.slice(fw.hidden, 0, m - 1, 1)?;
        let logits = linear(&mut tape, row, bound.head_w, bound.head_b)?;
        let pair = tape.slice(logits, 1, model.vocab.yes_id() as usize, 2)?;
        let probs = tape.softmax(pair)?;
        let p = &tape.value(probs).data;
        out.push((p[0], p[1]));
    }
    Ok(out)
}

/// The embedded prefix sequence (image tokens, projected actions, SEP,
/// question embeddings, with positions and segment types added) as a plain
/// tensor, plus its layout.
pub fn build_prefix_embedding(
    model: &Model,
    image: &Image,
    actions: &[Action],
    question: &str,
) -> Result<(Tensor, PrefixLayout)> {
    let q_ids = model.vocab.encode(question)?;
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &model.params, false);
    let img = image_tokens(&mut tape, &bound, &model.config, image)?;
    let act_rows =
        if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
    let n_act = actions.len();
    if n_act > model.config.max_actions {
        return Err(Error::InvalidArgument(format!(
            "{} actions exceed max_actions {}",
            n_act, model.config.max_actions
        )));
    }
    let layout = PrefixLayout {
        n_img: model.config.n_patches(),
        n_act,
        n_txt: 1 + q_ids.len(),
        n_ans_input: 0,
    };
    let total = layout.total_len();
    let mut parts = vec![img];
    if let Some(a) = act_rows {
        let t = tape.matmul(a, bound.act_proj)?;
        parts.push(t);
    }
    let mut txt_ids = vec![SEP];
    txt_ids.extend_from_slice(&q_ids);
    let txt = tape.embedding_lookup(bound.tok_emb, &txt_ids)?;
    parts.push(txt);
    let seq = tape.concat(&parts, 0)?;
    let pos = tape.slice(bound.pos_emb, 0, 0, total)?;
    let mut seg_ids = Vec::with_capacity(total);
    seg_ids.extend(std::iter::repeat(SEG_IMAGE).take(layout.n_img));
    seg_ids.extend(std::iter::repeat(SEG_ACTION).take(layout.n_act));
    seg_ids.extend(std::iter::repeat(SEG_QUESTION).take(layout.n_txt));
    let seg = tape.embedding_lookup(bound.seg_emb, &seg_ids)?;
    let x = tape.add(seq, pos)?;
    let x = tape.add(x, seg)?;
    Ok((tape.value(x).clone(), layout))
}

/// Probabilities of "yes" and "no" from one forward pass (the binary fast
/// path). The answer head restricts decoding to the answer vocabulary with
/// a forced end-of-answer, so the pair sums to 1.
pub fn binary_answer_probs(
    model: &Model,
    image: &Image,
    actions: &[Action],
    question: &str,
) -> Result<(f32, f32)> {
    let q_ids = model.vocab.encode(question)?;
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &model.params, false);
    let img = image_tokens(&mut tape, &bound, &model.config, image)?;
    let act_rows =
        if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
    let input = SeqInput { act_rows, question_ids: q_ids, answer_input_ids: vec![] };
    let out = run_transformer(&mut tape, &bound, &model.config, img, &input, false)?;
    let m = out.layout.prefix_len();
    let row = tape.slice(out.hidden, 0, m - 1, 1)?;
    let logits = linear(&mut tape, row, bound.head_w, bound.head_b)?;
    let pair = tape.slice(logits, 1, model.vocab.yes_id() as usize, 2)?;
    let probs = tape.softmax(pair)?;
    let p = &tape.value(probs).data;
    Ok((p[0], p[1]))
}

/// Raw full-vocabulary softmax entries for "yes" and "no" (no restriction);
/// sums to at most 1.
pub fn binary_answer_probs_unrestricted(
    model: &Model,
    image: &Image,
    actions: &[Action],
    question: &str,
) -> Result<(f32, f32)> {
    let q_ids = model.vocab.encode(question)?;
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &model.params, false);
    let img = image_tokens(&mut tape, &bound, &model.config, image)?;
    let act_rows =
        if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
    let input = SeqInput { act_rows, question_ids: q_ids, answer_input_ids: vec![] };
    let out = run_transformer(&mut tape, &bound, &model.config, img, &input, false)?;
    let m = out.layout.prefix_len();
    let row = tape.slice(out.hidden, 0, m - 1, 1)?;
    let logits = linear(&mut tape, row, bound.head_w, bound.head_b)?;
    let probs = tape.softmax(logits)?;
    let p = &tape.value(probs).data;
    Ok((p[model.vocab.yes_id() as usize], p[model.vocab.no_id() as usize]))
}

/// Product of autoregressive token probabilities of `answer` given the
/// prefix. Deterministic; one forward pass.
pub fn answer_likelihood(
    model: &Model,
    image: &Image,
    actions: &[Action],
    question: &str,
    answer: &str,
) -> Result<f32> {
    let mut graph = ValueGraph::new(model, image)?;
    let h = graph.add_actions(actions, false)?;
    let node = graph.prefix_likelihood(h, actions.len(), question, answer)?;
    Ok(graph.value(node))
}

/// Handle to one candidate action sequence on a value graph.
#[derive(Debug, Clone, Copy)]
pub struct ActionsHandle {
    node: Option<NodeId>,
    pub horizon: usize,
}

/// A shared-tape likelihood graph over one image: parameters and image
/// tokens are bound once, then any number of candidate action sequences and
/// prefix likelihood queries run on the same tape. Planners use this to
/// score a whole candidate set (or every sub-chunk prefix) with a single
/// parameter binding, and to differentiate a weighted-sum value with
/// respect to the action inputs.
pub struct ValueGraph<'m> {
    model: &'m Model,
    tape: Tape,
    bound: Bound,
    img_tokens: NodeId,
}

impl<'m> ValueGraph<'m> {
    pub fn new(model: &'m Model, image: &Image) -> Result<Self> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &model.params, false);
        let img_tokens = image_tokens(&mut tape, &bound, &model.config, image)?;
        Ok(ValueGraph { model, tape, bound, img_tokens })
    }

    /// Put a candidate action sequence on the tape. With `need_grad`, the
    /// leaf participates in differentiation and gradients accumulate across
    /// every prefix query that slices it.
    pub fn add_actions(&mut self, actions: &[Action], need_grad: bool) -> Result<ActionsHandle> {
        if actions.len() > self.model.config.max_actions {
            return Err(Error::InvalidArgument(format!(
                "{} actions exceed max_actions {}",
                actions.len(),
                self.model.config.max_actions
            )));
        }
        if actions.is_empty() {
            return Ok(ActionsHandle { node: None, horizon: 0 });
        }
        let t = actions_tensor(actions);
        let node = if need_grad { self.tape.param(t) } else { self.tape.leaf(t) };
        Ok(ActionsHandle { node: Some(node), horizon: actions.len() })
    }

    /// One model forward over the first `j` actions of the candidate;
    /// returns the node holding p(answer | image, a_{1:j}, question) under
    /// the binary answer head.
    pub fn prefix_likelihood(
        &mut self,
        handle: ActionsHandle,
        j: usize,
        question: &str,
        answer: &str,
    ) -> Result<NodeId> {
        if j > handle.horizon {
            return Err(Error::InvalidArgument(format!(
                "prefix {j} exceeds horizon {}",
                handle.horizon
            )));
        }
        let q_ids = self.model.vocab.encode(question)?;
        let ans_ids = self.model.vocab.encode(answer)?;
        let target = match ans_ids.as_slice() {
            [id] if *id == self.model.vocab.yes_id() => 0usize,
            [id] if *id == self.model.vocab.no_id() => 1usize,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "answer {answer:?} must be a single yes/no token"
                )))
            }
        };
        let act_rows = match (handle.node, j) {
            (Some(node), j) if j > 0 => {
                if j == handle.horizon {
                    Some(node)
                } else {
                    Some(self.tape.slice(node, 0, 0, j)?)
                }
            }
            _ => None,
        };
        let input = SeqInput { act_rows, question_ids: q_ids, answer_input_ids: vec![] };
        let out = run_transformer(
            &mut self.tape,
            &self.bound,
            &self.model.config,
            self.img_tokens,
            &input,
            false,
        )?;
        let m = out.layout.prefix_len();
        let rows = self.tape.slice(out.hidden, 0, m - 1, 1)?;
        let logits = linear(&mut self.tape, rows, self.bound.head_w, self.bound.head_b)?;
        let pair = self.tape.slice(logits, 1, self.model.vocab.yes_id() as usize, 2)?;
        let probs = self.tape.softmax(pair)?;
        let p = self.tape.slice(probs, 1, target, 1)?;
        self.tape.reshape(p, &[1])
    }

    pub fn value(&self, node: NodeId) -> f32 {
        self.tape.value(node).item()
    }

    /// Weighted sum of likelihood nodes: sum_i w_i * p_i.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f32)]) -> Result<NodeId> {
        if terms.is_empty() {
            return Ok(self.tape.leaf(Tensor::scalar(0.0)));
        }
        let mut acc: Option<NodeId> = None;
        for &(node, w) in terms {
            let scaled = self.tape.scale(node, w)?;
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.tape.add(a, scaled)?,
            });
        }
        Ok(acc.unwrap())
    }

    /// Backward from a scalar node; returns d(node)/d(actions) per step for
    /// the given candidate.
    pub fn backward_actions_grad(
        &mut self,
        node: NodeId,
        handle: ActionsHandle,
    ) -> Result<Vec<[f32; 2]>> {
        let actions = handle.node.ok_or_else(|| {
            Error::InvalidArgument("gradient requested for a zero-horizon candidate".into())
        })?;
        self.tape.backward(node)?;
        let g = self
            .tape
            .grad(actions)
            .ok_or_else(|| Error::InvalidArgument("actions node has no gradient".into()))?;
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "action gradient" });
        }
        Ok(g.chunks(2).map(|c| [c[0], c[1]]).collect())
    }
}

/// Attention weights from question tokens to image patches at one layer.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AttentionExport {
    pub layer: usize,
    pub grid_side: usize,
    pub seq_len: usize,
    pub prefix_len: usize,
    /// Per head: mean attention mass from question rows onto each patch.
    pub per_head: Vec<Vec<f32>>,
    /// Head-averaged patch grid.
    pub mean: Vec<f32>,
    /// Per head: the full [seq, seq] attention matrix (row-major).
    pub full: Vec<Vec<f32>>,
}

pub fn attention_maps(
    model: &Model,
    image: &Image,
    actions: &[Action],
    question: &str,
    layer: usize,
) -> Result<AttentionExport> {
    if layer >= model.config.n_layers {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range ({} layers)",
            model.config.n_layers
        )));
    }
    let q_ids = model.vocab.encode(question)?;
    let n_q = q_ids.len();
    let mut tape = Tape::new();
    let bound = bind(&mut tape, &model.params, false);
    let img = image_tokens(&mut tape, &bound, &model.config, image)?;
    let act_rows =
        if actions.is_empty() { None } else { Some(tape.leaf(actions_tensor(actions))) };
    let input = SeqInput { act_rows, question_ids: q_ids, answer_input_ids: vec![] };
    let out = run_transformer(&mut tape, &bound, &model.config, img, &input, true)?;

    let layout = out.layout;
    let total = layout.total_len();
    let n_img = layout.n_img;
    // Question rows exclude the SEP marker.
    let q_start = layout.n_img + layout.n_act + 1;
    let heads = &out.attention[layer];
    let mut per_head = Vec::with_capacity(heads.len());
    let mut full = Vec::with_capacity(heads.len());
    for &probs in heads {
        let mat = &tape.value(probs).data;
        full.push(mat.clone());
        let mut patch_mass = vec![0.0f32; n_img];
        for r in q_start..q_start + n_q {
            for (j, pm) in patch_mass.iter_mut().enumerate() {
                *pm += mat[r * total + j];
            }
        }
        for pm in patch_mass.iter_mut() {
            *pm /= n_q.max(1) as f32;
        }
        per_head.push(patch_mass);
    }
    let mut mean = vec![0.0f32; n_img];
    for h in &per_head {
        for (m, &v) in mean.iter_mut().zip(h) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= per_head.len() as f32;
    }
    Ok(AttentionExport {
        layer,
        grid_side: (n_img as f32).sqrt() as usize,
        seq_len: total,
        prefix_len: layout.prefix_len(),
        per_head,
        mean,
        full,
    })
}

