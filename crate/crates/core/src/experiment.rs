//! Turns a tokenized parallel corpus into training examples plus the
//! translator resources (vocabularies, merges, lexicon) that match them.

use crate::decoding::Translator;
use crate::error::{invalid, Result};
use crate::model::Variant;
use crate::morphology::{factorize_sentence, Lexicon};
use crate::text::{bpe_learn, build_vocab, word_frequencies, Example, SentencePair, TargetSeq};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub variant: Variant,
    pub src_shortlist: usize,
    /// Target words, BPE pieces or lemmas.
    pub tgt_shortlist: usize,
    pub factor_shortlist: usize,
    /// BPE models only; learned jointly on both sides.
    pub bpe_merges: usize,
}

impl DataConfig {
    pub fn new(variant: Variant) -> Self {
        DataConfig {
            variant,
            src_shortlist: 30_000,
            tgt_shortlist: 30_000,
            factor_shortlist: 1_000,
            bpe_merges: 29_388,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub translator: Translator,
    pub examples: Vec<Example>,
    /// Source words per sentence.
    pub sources: Vec<Vec<String>>,
    /// Target words per sentence, the reference for scoring.
    pub references: Vec<Vec<String>>,
}

/// Builds vocabularies (and merges) from `pairs` and encodes them.
pub fn prepare_corpus(pairs: &[SentencePair], cfg: &DataConfig, lexicon: Option<Lexicon>) -> Result<PreparedCorpus> {
    if pairs.is_empty() {
        return Err(invalid("corpus is empty"));
    }
    let sources: Vec<Vec<String>> = pairs.iter().map(|p| p.source.clone()).collect();
    let references: Vec<Vec<String>> = pairs.iter().map(|p| p.target.clone()).collect();
    let translator = match cfg.variant {
        Variant::Word => Translator::new(
            build_vocab(&sources, cfg.src_shortlist),
            build_vocab(&references, cfg.tgt_shortlist),
        ),
        Variant::Bpe => {
            let freqs = word_frequencies(&[sources.concat(), references.concat()]);
            let merges = bpe_learn(&freqs, cfg.bpe_merges);
            let src: Vec<Vec<String>> = sources.iter().map(|s| merges.apply(s)).collect();
            let tgt: Vec<Vec<String>> = references.iter().map(|s| merges.apply(s)).collect();
            let mut t = Translator::new(
                build_vocab(&src, cfg.src_shortlist),
                build_vocab(&tgt, cfg.tgt_shortlist),
            );
            t.merges = Some(merges);
            t
        }
        Variant::Factored => {
            let lexicon = lexicon
                .as_ref()
                .ok_or_else(|| invalid("factored corpus needs a lexicon"))?;
            let factored: Vec<_> = references.iter().map(|s| factorize_sentence(s, lexicon)).collect();
            let lemmas: Vec<Vec<String>> = factored.iter().map(|f| f.lemmas.clone()).collect();
            let tags: Vec<Vec<String>> = factored.iter().map(|f| f.factor_strings()).collect();
            let mut t = Translator::new(
                build_vocab(&sources, cfg.src_shortlist),
                build_vocab(&lemmas, cfg.tgt_shortlist),
            );
            t.factor_vocab = Some(build_vocab(&tags, cfg.factor_shortlist));
            t
        }
    };
    let mut translator = translator;
    translator.lexicon = lexicon;
    let examples = encode_pairs(&translator, cfg.variant, pairs)?;
    Ok(PreparedCorpus {
        translator,
        examples,
        sources,
        references,
    })
}

/// Encodes pairs with existing resources, e.g. a dev set.
pub fn encode_pairs(translator: &Translator, variant: Variant, pairs: &[SentencePair]) -> Result<Vec<Example>> {
    pairs
        .iter()
        .map(|p| {
            let target = match variant {
                Variant::Word => TargetSeq::Word(translator.tgt_vocab.encode(&p.target)),
                Variant::Bpe => {
                    let merges = translator
                        .merges
                        .as_ref()
                        .ok_or_else(|| invalid("bpe corpus needs merges"))?;
                    TargetSeq::Word(translator.tgt_vocab.encode(&merges.apply(&p.target)))
                }
                Variant::Factored => {
                    let lexicon = translator
                        .lexicon
                        .as_ref()
                        .ok_or_else(|| invalid("factored corpus needs a lexicon"))?;
                    let fv = translator
                        .factor_vocab
                        .as_ref()
                        .ok_or_else(|| invalid("factored corpus needs a factor vocabulary"))?;
                    let f = factorize_sentence(&p.target, lexicon);
                    TargetSeq::Factored {
                        lemmas: translator.tgt_vocab.encode(&f.lemmas),
                        factors: fv.encode(&f.factor_strings()),
                    }
                }
            };
            let source_tokens = match (variant, &translator.merges) {
                (Variant::Bpe, Some(m)) => m.apply(&p.source),
                _ => p.source.clone(),
            };
            Ok(Example {
                source: translator.src_vocab.encode(&source_tokens),
                target,
            })
        })
        .collect()
}
