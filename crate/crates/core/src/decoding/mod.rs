//! Greedy and beam-search decoding, attention alignments, UNK replacement
//! and the end-to-end translation pipeline.

mod pipeline;
mod search;
mod unk;

pub use pipeline::{dev_bleu, translate_pipeline, NbestEntry, TranslateOptions, Translation, Translator};
pub use search::{beam_decode, beam_search, greedy_decode, BeamConfig, Hypothesis};
pub use unk::{extract_alignment, unk_replace, Origin, TranslationResult, UnigramDictionary};
