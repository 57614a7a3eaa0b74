//! Versioned, self-describing checkpoint container: a canonical JSON header
//! (kind, config, vocabulary, shape table, provenance) followed by raw
//! little-endian f32 tensor data in header order. Round trips are bit-exact.

use super::{Model, ModelConfig, ModelParams, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"WQCKPT01";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Model,
    BcPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: CheckpointKind,
    config: serde_json::Value,
    vocab: Option<Vocabulary>,
    shapes: Vec<(String, Vec<usize>)>,
    seed: u64,
    config_hash: String,
}

pub fn save_tensors(
    path: &Path,
    kind: CheckpointKind,
    config: serde_json::Value,
    vocab: Option<&Vocabulary>,
    tensors: &[(String, &Tensor)],
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let header = Header {
        kind,
        config,
        vocab: vocab.cloned(),
        shapes: tensors.iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect(),
        seed,
        config_hash: config_hash.to_string(),
    };
    // Serialize through Value so key order is canonical (alphabetical) and
    // save-load-save is byte-identical.
    let header_json = serde_json::to_string(&serde_json::to_value(&header)?)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(header_json.len() as u64).to_le_bytes())?;
    f.write_all(header_json.as_bytes())?;
    for (_, t) in tensors {
        for v in &t.data {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub struct LoadedCheckpoint {
    pub kind: CheckpointKind,
    pub config: serde_json::Value,
    pub vocab: Option<Vocabulary>,
    pub tensors: Vec<(String, Tensor)>,
    pub seed: u64,
    pub config_hash: String,
}

pub fn load_tensors(path: &Path) -> Result<LoadedCheckpoint> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Corrupt(format!("{}: bad magic", path.display())));
    }
    let mut v4 = [0u8; 4];
    f.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let mut l8 = [0u8; 8];
    f.read_exact(&mut l8)?;
    let hlen = u64::from_le_bytes(l8) as usize;
    let mut hbuf = vec![0u8; hlen];
    f.read_exact(&mut hbuf)?;
    let header: Header = serde_json::from_slice(&hbuf)
        .map_err(|e| Error::Corrupt(format!("{}: header: {e}", path.display())))?;
    let mut vocab = header.vocab;
    if let Some(v) = vocab.as_mut() {
        v.reindex();
    }
    let mut tensors = Vec::with_capacity(header.shapes.len());
    for (name, shape) in header.shapes {
        let numel: usize = shape.iter().product();
        let mut buf = vec![0u8; numel * 4];
        f.read_exact(&mut buf).map_err(|_| {
            Error::Corrupt(format!("{}: truncated tensor {name}", path.display()))
        })?;
        let data: Vec<f32> =
            buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Corrupt(format!("{}: trailing bytes", path.display())));
    }
    Ok(LoadedCheckpoint {
        kind: header.kind,
        config: header.config,
        vocab,
        tensors,
        seed: header.seed,
        config_hash: header.config_hash,
    })
}

pub fn save_checkpoint(model: &Model, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
    let tensors = model.params.visit();
    save_tensors(
        path,
        CheckpointKind::Model,
        serde_json::to_value(&model.config)?,
        Some(&model.vocab),
        &tensors,
        seed,
        config_hash,
    )
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let loaded = load_tensors(path)?;
    if loaded.kind != CheckpointKind::Model {
        return Err(Error::Corrupt(format!("{}: not a model checkpoint", path.display())));
    }
    let config: ModelConfig = serde_json::from_value(loaded.config.clone())
        .map_err(|e| Error::Corrupt(format!("config: {e}")))?;
    config.validate()?;
    let vocab = loaded
        .vocab
        .ok_or_else(|| Error::Corrupt("model checkpoint lacks a vocabulary".into()))?;
    // Validate the shape table against the architecture before accepting.
    let reference = ModelParams::init(&config, vocab.len(), 0)?;
    let expected: Vec<(String, Vec<usize>)> =
        reference.visit().iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
    let got: Vec<(String, Vec<usize>)> =
        loaded.tensors.iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect();
    if expected != got {
        return Err(Error::Corrupt("checkpoint shape table does not match config".into()));
    }
    let mut params = reference;
    for (slot, (_, tensor)) in params.visit_mut().into_iter().zip(loaded.tensors) {
        *slot = tensor;
    }
    Ok(Model { config, vocab, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_model() -> Model {
        let cfg = ModelConfig {
            d_tok: 16,
            d_img: 8,
            n_layers: 1,
            n_heads: 2,
            d_mlp: 32,
            max_question_len: 12,
            ..ModelConfig::default()
        };
        Model::init(cfg, Vocabulary::build(), 3).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempdir().unwrap();
        let model = tiny_model();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&model, &p1, 7, "deadbeef").unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2, 7, "deadbeef").unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.params, model.params);
    }

    #[test]
    fn version_mismatch_detected() {
        let dir = tempdir().unwrap();
        let model = tiny_model();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&model, &p, 0, "h").unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[8] = 99; // stomp version field
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn shape_table_validated_against_config() {
        let dir = tempdir().unwrap();
        let model = tiny_model();
        let p = dir.path().join("m.ckpt");
        // Save with a lying config (more layers than tensors).
        let mut cfg = model.config.clone();
        cfg.n_layers = 2;
        let tensors = model.params.visit();
        save_tensors(
            &p,
            CheckpointKind::Model,
            serde_json::to_value(&cfg).unwrap(),
            Some(&model.vocab),
            &tensors,
            0,
            "h",
        )
        .unwrap();
        assert!(load_checkpoint(&p).is_err());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempdir().unwrap();
        let model = tiny_model();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&model, &p, 0, "h").unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 17]).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Corrupt(_))));
    }
}
