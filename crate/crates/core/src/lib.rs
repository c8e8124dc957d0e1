//! Factored neural machine translation at desk scale.
//!
//! The target side of a factored model is split into two synchronized
//! streams, lemmas and morphological factor tags, predicted by two softmax
//! heads over one shared conditional-GRU decoder. Word-level and BPE
//! single-head baselines share the same encoder, attention and decoder.
//!
//! - [`tensor`]: dense tensors, a tape for reverse-mode gradients, Xavier
//!   initialization, global-norm clipping and Adadelta.
//! - [`text`]: corpus filtering, shortlist vocabularies, batching, BPE.
//! - [`morphology`]: factor tags and a lexicon for analysis and generation.
//! - [`model`]: encoder, attention, decoder, output heads, training.
//! - [`decoding`]: greedy and beam search, alignments, UNK replacement and
//!   the end-to-end translation pipeline.
//! - [`evaluation`]: corpus BLEU, UNK counts, per-stream scores.
//! - [`experiment`]: corpus to training examples plus matching resources.

pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod morphology;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
