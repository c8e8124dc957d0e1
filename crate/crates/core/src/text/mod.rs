//! Corpus reading and filtering, shortlist vocabularies, batching and
//! joint-vocabulary BPE.

mod batch;
mod bpe;
mod corpus;
mod vocab;

pub use batch::{make_batches, Batch, BatchTarget, Example, Padded, TargetSeq};
pub use bpe::{bpe_learn, bpe_undo, word_frequencies, MergeTable, CONTINUATION, END_OF_WORD};
pub use corpus::{decode_entities, filter_corpus, read_lines, read_parallel, tokenize, SentencePair};
pub use vocab::{build_vocab, Vocabulary, EOS, EOS_TOKEN, PAD, PAD_TOKEN, RESERVED, UNK, UNK_TOKEN};
