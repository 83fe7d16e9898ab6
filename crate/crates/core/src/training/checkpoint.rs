//! Binary checkpoints: magic, a little-endian `u32` manifest length, a JSON
//! manifest, then every tensor as little-endian `f32` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TagVocabulary, Vocabularies, WordVocabulary};
use crate::model::{param_shapes, Generator, ModelConfig};
use crate::numerics::{ParamStore, Tensor};

use super::{Result, TrainConfig, TrainError};

pub const MAGIC: &[u8; 8] = b"KW2SENT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    model: ModelConfig,
    train: TrainConfig,
    words: Vec<String>,
    tags: TagVocabulary,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to run a trained model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Generator<f32>,
    pub vocab: Vocabularies,
    pub train: TrainConfig,
}

impl Checkpoint {
    /// Refuses a checkpoint whose template mode differs from the caller's.
    pub fn require_mode(&self, no_template: bool) -> Result<()> {
        let have = self.model.config.no_template;
        if have != no_template {
            let name = |b: bool| if b { "no-template" } else { "template" };
            return Err(TrainError::Checkpoint(format!(
                "checkpoint holds a {} model but a {} model was requested",
                name(have),
                name(no_template)
            )));
        }
        Ok(())
    }
}

pub fn encode_checkpoint(model: &Generator<f32>, vocab: &Vocabularies, train: &TrainConfig) -> Vec<u8> {
    let manifest = Manifest {
        version: FORMAT_VERSION,
        model: model.config.clone(),
        train: train.clone(),
        words: vocab.words.words().to_vec(),
        tags: vocab.tags.clone(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.params.num_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let err = |m: String| TrainError::Checkpoint(m);
    if bytes.len() < 12 {
        return Err(err(format!("file is {} bytes, too short for a header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(err("bad magic: not a checkpoint file".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(err(format!("truncated manifest: need {len} bytes, have {}", body.len())));
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[..len]).map_err(|e| err(format!("malformed manifest: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(err(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            manifest.version
        )));
    }
    let tags = manifest.tags.reindexed();
    let words = WordVocabulary::from_words(&manifest.words).map_err(|e| err(e.to_string()))?;
    let cfg = manifest.model;
    if words.len() != cfg.vocab_size || tags.len() != cfg.tag_vocab_size {
        return Err(err(format!(
            "vocabulary sizes {}/{} disagree with the model's {}/{}",
            words.len(),
            tags.len(),
            cfg.vocab_size,
            cfg.tag_vocab_size
        )));
    }
    let expected = param_shapes(&cfg);
    let mut want: Vec<(&str, &[usize])> = expected.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
    want.sort();
    let mut have: Vec<(&str, &[usize])> = manifest
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t.shape.as_slice()))
        .collect();
    have.sort();
    if want != have {
        let missing: Vec<_> = want.iter().filter(|w| !have.contains(w)).map(|w| format!("{}{:?}", w.0, w.1)).collect();
        let extra: Vec<_> = have.iter().filter(|h| !want.contains(h)).map(|h| format!("{}{:?}", h.0, h.1)).collect();
        return Err(err(format!(
            "tensor table does not match the configuration; expected but absent: [{}]; unexpected: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let data = &body[len..];
    if data.len() != 4 * total {
        return Err(err(format!(
            "tensor data is {} bytes, expected {} (file truncated or padded)",
            data.len(),
            4 * total
        )));
    }
    let mut store = ParamStore::new();
    let mut off = 0;
    for t in manifest.tensors {
        let n: usize = t.shape.iter().product();
        let values: Vec<f32> = data[off..off + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 4 * n;
        let tensor = Tensor::new(t.shape, values).map_err(|e| err(e.to_string()))?;
        store.insert(t.name, tensor);
    }
    let model = Generator::from_params(cfg, store).map_err(|e| err(e.to_string()))?;
    manifest.train.validate()?;
    Ok(Checkpoint {
        model,
        vocab: Vocabularies { words, tags },
        train: manifest.train,
    })
}

/// Writes atomically through a temporary file in the same directory.
pub fn save_checkpoint(path: &Path, model: &Generator<f32>, vocab: &Vocabularies, train: &TrainConfig) -> Result<()> {
    let bytes = encode_checkpoint(model, vocab, train);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| TrainError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| TrainError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        TrainError::Checkpoint(m) => TrainError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
