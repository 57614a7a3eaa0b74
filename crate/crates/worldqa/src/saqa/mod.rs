//! State-action-question-answer dataset generation: multi-horizon sampling
//! over trajectories, template instantiation with phrasing variants,
//! balanced oversampling, and trajectory-level train/heldout splitting.
//!
//! Records are stored by reference (trajectory id + step + horizon); images
//! are re-rendered at load time, which keeps files small and replay exact.

mod generate;
mod sampler;
pub mod templates;

pub use generate::{generate, split, type_answer_histogram, GenerateConfig, NamedTraj, SplitResult};
pub use sampler::BalancedSampler;

use crate::blockworld::QuestionKey;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The eight question types (toy analogs of the source environment's table).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    BlockTouching,
    PegTouching,
    InCenter,
    RelativeDir,
    Moved,
    MovedDir,
    Closer,
    PegCloser,
}

impl QuestionType {
    pub const ALL: [QuestionType; 8] = [
        QuestionType::BlockTouching,
        QuestionType::PegTouching,
        QuestionType::InCenter,
        QuestionType::RelativeDir,
        QuestionType::Moved,
        QuestionType::MovedDir,
        QuestionType::Closer,
        QuestionType::PegCloser,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::BlockTouching => "block_touching",
            QuestionType::PegTouching => "peg_touching",
            QuestionType::InCenter => "in_center",
            QuestionType::RelativeDir => "relative_dir",
            QuestionType::Moved => "moved",
            QuestionType::MovedDir => "moved_dir",
            QuestionType::Closer => "closer",
            QuestionType::PegCloser => "peg_closer",
        }
    }

    pub fn index(self) -> usize {
        QuestionType::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn of(key: QuestionKey) -> QuestionType {
        match key {
            QuestionKey::Touching { .. } => QuestionType::BlockTouching,
            QuestionKey::PegTouching { .. } => QuestionType::PegTouching,
            QuestionKey::InCenter { .. } => QuestionType::InCenter,
            QuestionKey::RelativeDir { .. } => QuestionType::RelativeDir,
            QuestionKey::Moved { .. } => QuestionType::Moved,
            QuestionKey::MovedDir { .. } => QuestionType::MovedDir,
            QuestionKey::Closer { .. } => QuestionType::Closer,
            QuestionKey::PegCloser { .. } => QuestionType::PegCloser,
        }
    }
}

mod yes_no {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "yes" } else { "no" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(serde::de::Error::custom(format!("answer must be yes/no, got {other:?}"))),
        }
    }
}

/// One training tuple. JSONL wire schema:
/// `{traj, step, horizon, qtype, question, answer}` with answer "yes"/"no".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaqaRecord {
    pub traj: String,
    pub step: usize,
    pub horizon: usize,
    pub qtype: QuestionType,
    pub question: String,
    #[serde(with = "yes_no")]
    pub answer: bool,
}

/// Sidecar provenance written next to dataset files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
}

pub fn write_jsonl(records: &[SaqaRecord], path: &Path, meta: &DatasetMeta) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let meta_path = meta_path_for(path);
    std::fs::write(&meta_path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SaqaRecord>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SaqaRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Corrupt(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn meta_path_for(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_wire_schema_matches_spec() {
        let r = SaqaRecord {
            traj: "expert_00001".into(),
            step: 3,
            horizon: 8,
            qtype: QuestionType::PegTouching,
            question: "is the robotic peg touching the red cube?".into(),
            answer: true,
        };
        let json = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["traj"], "expert_00001");
        assert_eq!(v["step"], 3);
        assert_eq!(v["horizon"], 8);
        assert_eq!(v["qtype"], "peg_touching");
        assert_eq!(v["answer"], "yes");
        let back: SaqaRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bad_answer_string_rejected() {
        let json = r#"{"traj":"t","step":0,"horizon":0,"qtype":"moved","question":"q?","answer":"maybe"}"#;
        assert!(serde_json::from_str::<SaqaRecord>(json).is_err());
    }
}
