//! The template-controlled generator: keyword encoder, template encoder,
//! tag-matching gate, attention decoder, and greedy/beam generation.

mod batch;
mod generate;
mod network;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TrainingExample;
use crate::numerics::NumericsError;

pub use batch::Batch;
pub use generate::{log_softmax, DecodeTrace, Generation, StepOutputs, TraceStep};
pub use network::Dropout;
pub use params::{init_params, param_shapes, Generator};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture hyperparameters. The tag embedding is square with side
/// `tag_vocab_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub tag_vocab_size: usize,
    pub word_dim: usize,
    pub keyword_dim: usize,
    /// Per direction.
    pub template_hidden: usize,
    pub decoder_dim: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub no_template: bool,
}

impl ModelConfig {
    /// Sizes used in the original experiments, for the given vocabularies.
    pub fn full(vocab_size: usize, tag_vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            tag_vocab_size,
            word_dim: 500,
            keyword_dim: 500,
            template_hidden: 100,
            decoder_dim: 500,
            attention_dim: 100,
            dropout: 0.5,
            init_scale: 0.08,
            no_template: false,
        }
    }

    /// Every dimension set to `d`.
    pub fn uniform(vocab_size: usize, tag_vocab_size: usize, d: usize) -> Self {
        ModelConfig {
            word_dim: d,
            keyword_dim: d,
            template_hidden: d,
            decoder_dim: d,
            attention_dim: d,
            ..Self::full(vocab_size, tag_vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("word_dim", self.word_dim),
            ("keyword_dim", self.keyword_dim),
            ("template_hidden", self.template_hidden),
            ("decoder_dim", self.decoder_dim),
            ("attention_dim", self.attention_dim),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(ModelError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.vocab_size <= crate::corpus::EOS {
            return Err(ModelError::Invalid("vocabulary is smaller than the reserved ids".into()));
        }
        if self.tag_vocab_size < 2 {
            return Err(ModelError::Invalid("tag vocabulary needs at least two tags".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.init_scale > 0.0) {
            return Err(ModelError::Invalid("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// What generation needs from an example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationInput {
    pub keywords: Vec<usize>,
    pub keyword_tags: Vec<usize>,
    pub template: Vec<usize>,
}

impl From<&TrainingExample> for GenerationInput {
    fn from(ex: &TrainingExample) -> Self {
        GenerationInput {
            keywords: ex.keywords.clone(),
            keyword_tags: ex.keyword_tags.clone(),
            template: ex.template.clone(),
        }
    }
}

/// Decoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeMode::Greedy => write!(f, "greedy"),
            DecodeMode::Beam(w) => write!(f, "beam-{w}"),
        }
    }
}

/// Sorts ids ascending, ties by original position. Returns the sorted ids and,
/// for each sorted slot, the input position it came from.
pub fn canonical_order(ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (ids[i], i));
    (order.iter().map(|&i| ids[i]).collect(), order)
}
