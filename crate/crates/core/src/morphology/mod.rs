//! Lemma plus morphological-factor representation of target words, backed
//! by a surface ↔ analysis lexicon.

mod lexicon;
mod tag;

pub use lexicon::{
    count_generable, factorize_corpus, factorize_sentence, recombine, Analysis, FactoredSentence, Lexicon, LexiconEntry,
};
pub use tag::{Case, FactorTag, NONE_MARK};
