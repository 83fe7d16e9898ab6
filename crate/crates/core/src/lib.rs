//! Keyword-to-sentence generation controlled by part-of-speech templates.
//!
//! The crate is split along the pipeline: [`numerics`] (tensors, autodiff,
//! Adam), [`corpus`] (tagging, lemmatization, dataset files), [`model`]
//! (the encoder/decoder generator), [`training`] and [`evalsuite`].

pub mod corpus;
pub mod evalsuite;
pub mod model;
pub mod numerics;
pub mod training;
