//! Balanced oversampling: uniform over surviving question types, 50/50 over
//! answers within each type, with replacement.

use super::{QuestionType, SaqaRecord};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct BalancedSampler {
    /// buckets[type][answer as usize] -> record indices
    buckets: Vec<[Vec<usize>; 2]>,
    /// Types with at least one record of each answer class.
    types: Vec<QuestionType>,
    /// Types removed for missing an answer class.
    pub dropped: Vec<QuestionType>,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(records: &[SaqaRecord], seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset("balanced sampler over zero records".into()));
        }
        let mut buckets: Vec<[Vec<usize>; 2]> =
            QuestionType::ALL.iter().map(|_| [Vec::new(), Vec::new()]).collect();
        for (i, r) in records.iter().enumerate() {
            buckets[r.qtype.index()][r.answer as usize].push(i);
        }
        let mut types = Vec::new();
        let mut dropped = Vec::new();
        for qtype in QuestionType::ALL {
            let b = &buckets[qtype.index()];
            if b[0].is_empty() && b[1].is_empty() {
                continue; // type absent from this dataset, not a warning
            }
            if b[0].is_empty() || b[1].is_empty() {
                eprintln!(
                    "warning: question type {} has only {:?} answers and was dropped from sampling",
                    qtype.name(),
                    if b[0].is_empty() { "yes" } else { "no" }
                );
                dropped.push(qtype);
            } else {
                types.push(qtype);
            }
        }
        if types.is_empty() {
            return Err(Error::EmptyDataset(
                "no question type has both answer classes".into(),
            ));
        }
        Ok(BalancedSampler { buckets, types, dropped, rng: rng_from_seed(seed) })
    }

    /// Draw one record index (with replacement).
    pub fn next_index(&mut self) -> usize {
        let qtype = self.types[self.rng.gen_range(0..self.types.len())];
        let answer = self.rng.gen_bool(0.5) as usize;
        let bucket = &self.buckets[qtype.index()][answer];
        bucket[self.rng.gen_range(0..bucket.len())]
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.next_index()).collect()
    }

    pub fn surviving_types(&self) -> &[QuestionType] {
        &self.types
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn record(qtype: QuestionType, answer: bool, tag: usize) -> SaqaRecord {
        SaqaRecord {
            traj: format!("t{tag}"),
            step: tag,
            horizon: 0,
            qtype,
            question: "q?".into(),
            answer,
        }
    }

    fn skewed_dataset() -> Vec<SaqaRecord> {
        // Heavily imbalanced: lots of `moved`=no, few yes; uneven per-type counts.
        let mut recs = Vec::new();
        for qtype in QuestionType::ALL {
            let n_yes = match qtype {
                QuestionType::Moved => 3,
                QuestionType::BlockTouching => 10,
                _ => 25,
            };
            let n_no = match qtype {
                QuestionType::Moved => 500,
                _ => 60,
            };
            for i in 0..n_yes {
                recs.push(record(qtype, true, i));
            }
            for i in 0..n_no {
                recs.push(record(qtype, false, i));
            }
        }
        recs
    }

    #[test]
    fn frequencies_converge_to_uniform_type_and_balanced_answers() {
        // Law-of-large-numbers check at n = 1e5: per-type frequency within
        // +-1 point of 12.5%, per-type yes-rate 50% +- 2 points.
        let recs = skewed_dataset();
        let mut s = BalancedSampler::new(&recs, 7).unwrap();
        let n = 100_000;
        let mut type_counts: BTreeMap<QuestionType, usize> = BTreeMap::new();
        let mut yes_counts: BTreeMap<QuestionType, usize> = BTreeMap::new();
        for _ in 0..n {
            let idx = s.next_index();
            let r = &recs[idx];
            *type_counts.entry(r.qtype).or_insert(0) += 1;
            if r.answer {
                *yes_counts.entry(r.qtype).or_insert(0) += 1;
            }
        }
        for qtype in QuestionType::ALL {
            let c = *type_counts.get(&qtype).unwrap_or(&0) as f64 / n as f64;
            assert!((c - 0.125).abs() < 0.01, "{qtype:?} frequency {c}");
            let yes = *yes_counts.get(&qtype).unwrap_or(&0) as f64
                / *type_counts.get(&qtype).unwrap() as f64;
            assert!((yes - 0.5).abs() < 0.02, "{qtype:?} yes rate {yes}");
        }
    }

    #[test]
    fn single_answer_type_dropped_with_warning() {
        let mut recs = skewed_dataset();
        recs.retain(|r| !(r.qtype == QuestionType::PegCloser && r.answer));
        let s = BalancedSampler::new(&recs, 0).unwrap();
        assert_eq!(s.dropped, vec![QuestionType::PegCloser]);
        assert_eq!(s.surviving_types().len(), 7);
        // Sampling never yields the dropped type.
        let mut s = s;
        for _ in 0..2000 {
            let r = &recs[s.next_index()];
            assert_ne!(r.qtype, QuestionType::PegCloser);
        }
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(BalancedSampler::new(&[], 0).is_err());
    }

    #[test]
    fn batches_are_seeded_and_deterministic() {
        let recs = skewed_dataset();
        let mut a = BalancedSampler::new(&recs, 42).unwrap();
        let mut b = BalancedSampler::new(&recs, 42).unwrap();
        // Default effective batch size from the training recipe.
        assert_eq!(a.next_batch(96), b.next_batch(96));
    }
}
