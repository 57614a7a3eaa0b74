//! Task value functions: a task is a weighted set of (question, desired
//! answer) pairs, and the value of an action sequence is the weighted sum
//! of the model's answer likelihoods — either on the full sequence, or
//! summed over every length-c sub-chunk prefix (early reward).

use crate::blockworld::{Action, Image};
use crate::error::{Error, Result};
use crate::model::{Model, ValueGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

/// One weighted question-answer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    /// Desired answer, "yes" or "no".
    pub answer: String,
    pub weight: f32,
}

/// A subgoal for multistep execution: its own QA set plus the zero-horizon
/// verification question that gates advancement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgoal {
    pub name: String,
    pub items: Vec<QaItem>,
    pub verify_question: String,
    pub verify_answer: String,
}

/// A task specification: weighted QA items, with an optional ordered
/// subgoal decomposition for multistep execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub items: Vec<QaItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subgoals: Vec<Subgoal>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument(format!("task {} has no QA items", self.name)));
        }
        for item in self.items.iter().chain(self.subgoals.iter().flat_map(|s| s.items.iter())) {
            if item.weight < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative weight in task {}",
                    self.name
                )));
            }
            if item.answer != "yes" && item.answer != "no" {
                return Err(Error::InvalidArgument(format!(
                    "task {} answer must be yes/no, got {:?}",
                    self.name, item.answer
                )));
            }
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f32 {
        self.items.iter().map(|i| i.weight).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: TaskSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The prefix lengths scored by the chunked value: c, 2c, ..., plus a final
/// partial chunk at n when c does not divide n. For n = 0 the single
/// zero-horizon evaluation remains.
pub fn chunk_prefixes(n: usize, c: usize) -> Result<Vec<usize>> {
    if c == 0 {
        return Err(Error::InvalidArgument("chunk length c must be >= 1".into()));
    }
    let mut js: Vec<usize> = (1..).map(|k| k * c).take_while(|&j| j <= n).collect();
    if js.last() != Some(&n) {
        js.push(n);
    }
    Ok(js)
}

/// Eq-1-style vanilla value: sum_i W_i * p(A_i | S, a_{1:n}, Q_i). One model
/// forward per item.
pub fn value(model: &Model, image: &Image, actions: &[Action], task: &TaskSpec) -> Result<f32> {
    task.validate()?;
    let mut graph = ValueGraph::new(model, image)?;
    let handle = graph.add_actions(actions, false)?;
    let mut total = 0.0f32;
    for item in &task.items {
        let p = graph.prefix_likelihood(handle, actions.len(), &item.question, &item.answer)?;
        total += item.weight * graph.value(p);
    }
    Ok(total)
}

/// Early-reward value: sum over items and over every chunk prefix
/// j = c, 2c, ..., n of W_i * p(A_i | S, a_{1:j}, Q_i). With c = n this
/// reduces bit-exactly to `value`.
pub fn chunked_value(
    model: &Model,
    image: &Image,
    actions: &[Action],
    task: &TaskSpec,
    c: usize,
) -> Result<f32> {
    task.validate()?;
    let js = chunk_prefixes(actions.len(), c)?;
    let mut graph = ValueGraph::new(model, image)?;
    let handle = graph.add_actions(actions, false)?;
    let mut total = 0.0f32;
    for item in &task.items {
        for &j in &js {
            let p = graph.prefix_likelihood(handle, j, &item.question, &item.answer)?;
            total += item.weight * graph.value(p);
        }
    }
    Ok(total)
}

/// Chunked values for a candidate set; element-wise identical to calling
/// `chunked_value` per candidate.
pub fn batched_values(
    model: &Model,
    image: &Image,
    candidates: &[Vec<Action>],
    task: &TaskSpec,
    c: usize,
) -> Result<Vec<f32>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let n = candidates[0].len();
    if candidates.iter().any(|cand| cand.len() != n) {
        return Err(Error::InvalidArgument("candidates have mixed lengths".into()));
    }
    candidates.par_iter().map(|cand| chunked_value(model, image, cand, task, c)).collect()
}

/// A chunked-value scorer with exact forward/backward pass accounting,
/// shared by the planners. Each `score` costs (#prefixes x #items) model
/// forwards; each `score_with_grad` additionally costs one backward.
pub struct TaskScorer<'m> {
    pub model: &'m Model,
    pub image: Image,
    pub task: TaskSpec,
    pub chunk: usize,
    forwards: AtomicU64,
    backwards: AtomicU64,
}

impl<'m> TaskScorer<'m> {
    pub fn new(model: &'m Model, image: Image, task: TaskSpec, chunk: usize) -> Result<Self> {
        task.validate()?;
        if chunk == 0 {
            return Err(Error::InvalidArgument("chunk length c must be >= 1".into()));
        }
        Ok(TaskScorer { model, image, task, chunk, forwards: AtomicU64::new(0), backwards: AtomicU64::new(0) })
    }

    fn build(
        &self,
        graph: &mut ValueGraph<'m>,
        handle: crate::model::ActionsHandle,
        n: usize,
    ) -> Result<crate::tensor::NodeId> {
        let js = chunk_prefixes(n, self.chunk)?;
        let mut terms = Vec::new();
        for item in &self.task.items {
            for &j in &js {
                let p = graph.prefix_likelihood(handle, j, &item.question, &item.answer)?;
                terms.push((p, item.weight));
            }
        }
        self.forwards.fetch_add((js.len() * self.task.items.len()) as u64, Ordering::Relaxed);
        graph.weighted_sum(&terms)
    }

    pub fn score(&self, actions: &[Action]) -> Result<f32> {
        let mut graph = ValueGraph::new(self.model, &self.image)?;
        let handle = graph.add_actions(actions, false)?;
        let v = self.build(&mut graph, handle, actions.len())?;
        Ok(graph.value(v))
    }

    /// Score a whole candidate set on one shared parameter binding.
    pub fn score_batch(&self, candidates: &[Vec<Action>]) -> Result<Vec<f32>> {
        let mut graph = ValueGraph::new(self.model, &self.image)?;
        let mut out = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let handle = graph.add_actions(cand, false)?;
            let v = self.build(&mut graph, handle, cand.len())?;
            out.push(graph.value(v));
        }
        Ok(out)
    }

    pub fn score_with_grad(&self, actions: &[Action]) -> Result<(f32, Vec<[f32; 2]>)> {
        let mut graph = ValueGraph::new(self.model, &self.image)?;
        let handle = graph.add_actions(actions, true)?;
        let v = self.build(&mut graph, handle, actions.len())?;
        let value = graph.value(v);
        let grad = graph.backward_actions_grad(v, handle)?;
        self.backwards.fetch_add(1, Ordering::Relaxed);
        Ok((value, grad))
    }

    pub fn forward_passes(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    pub fn backward_passes(&self) -> u64 {
        self.backwards.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests;
