//! Data pipeline: tagging, lemmatization, keyword extraction, vocabularies
//! and the JSON-lines dataset format.

mod dataset;
mod lemma;
mod tagger;
mod tags;
pub mod toy;
mod vocab;

use std::path::Path;

use thiserror::Error;

pub use dataset::{
    corpus_stats, extract_example, extract_record, keyword_tags_for, keyword_universal_tag, load_dataset,
    load_pretagged, read_dataset, save_dataset, tokenize, write_dataset, CorpusStats, DatasetRecord,
    TaggedSentence, TrainingExample, Vocabularies,
};
pub use lemma::lemmatize;
pub use tagger::{train_perceptron_tagger, PerceptronTagger, PosTagger};
pub use tags::{TagVocabulary, CONTENT_UNIVERSAL};
pub use vocab::{WordVocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// Default cap on sentence length when building datasets.
pub const MAX_SENTENCE_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{0}")]
    Vocabulary(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("sentence has no content words")]
    NoContentWords,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Tags `tokens` with `tagger`; errors on empty input.
pub fn tag_sentence(tokens: &[String], tagger: &dyn PosTagger) -> Result<TaggedSentence, CorpusError> {
    if tokens.is_empty() {
        return Err(CorpusError::EmptyInput("cannot tag an empty sentence".into()));
    }
    Ok(TaggedSentence {
        tokens: tokens.to_vec(),
        tags: tagger.tag_tokens(tokens),
    })
}
