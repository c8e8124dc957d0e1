use serde::Serialize;

use super::search::{beam_search, greedy_decode, BeamConfig, Hypothesis};
use super::unk::{unk_replace, Origin, TranslationResult, UnigramDictionary};
use crate::error::{invalid, Result};
use crate::evaluation::bleu_corpus;
use crate::model::{Model, Variant};
use crate::morphology::{recombine, Case, FactorTag, Lexicon};
use crate::text::{bpe_undo, tokenize, MergeTable, Vocabulary};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranslateOptions {
    pub beam: BeamConfig,
    /// Argmax decoding instead of beam search.
    pub greedy: bool,
    /// Replace UNK outputs through attention (word and factored models).
    pub unk_replace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbestEntry {
    pub words: Vec<String>,
    pub score: f64,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Translation {
    /// Final output words.
    pub words: Vec<String>,
    /// Source as the model saw it (BPE pieces for BPE models), EOS excluded.
    pub source_tokens: Vec<String>,
    pub result: TranslationResult,
    /// Ranked alternatives, best first; the best equals `words`.
    pub nbest: Vec<NbestEntry>,
}

impl Translation {
    /// `id ||| tokens ||| normalized_score ||| raw_logprob`, one line per
    /// n-best entry.
    pub fn nbest_lines(&self, id: usize) -> Vec<String> {
        self.nbest
            .iter()
            .map(|e| {
                format!(
                    "{id} ||| {} ||| {:.6} ||| {:.6}",
                    e.words.join(" "),
                    e.score,
                    e.log_prob
                )
            })
            .collect()
    }
}

/// Vocabularies and resources needed to run a model end to end.
#[derive(Debug, Clone)]
pub struct Translator {
    pub src_vocab: Vocabulary,
    /// Target words, BPE pieces, or lemmas.
    pub tgt_vocab: Vocabulary,
    pub factor_vocab: Option<Vocabulary>,
    pub merges: Option<MergeTable>,
    pub lexicon: Option<Lexicon>,
    pub dictionary: Option<UnigramDictionary>,
}

impl Translator {
    pub fn new(src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Self {
        Translator {
            src_vocab,
            tgt_vocab,
            factor_vocab: None,
            merges: None,
            lexicon: None,
            dictionary: None,
        }
    }

    /// Fails when the resources do not fit the model.
    pub fn check(&self, model: &Model) -> Result<()> {
        let cfg = model.config();
        let sizes = [
            ("source vocabulary", self.src_vocab.len(), cfg.src_vocab_size),
            ("target vocabulary", self.tgt_vocab.len(), cfg.tgt_vocab_size),
        ];
        for (what, have, want) in sizes {
            if have != want {
                return Err(invalid(format!("{what} has {have} entries, model expects {want}")));
            }
        }
        match cfg.variant {
            Variant::Factored => {
                let fv = self
                    .factor_vocab
                    .as_ref()
                    .ok_or_else(|| invalid("factored model needs a factor vocabulary"))?;
                if Some(fv.len()) != cfg.factor_vocab_size {
                    return Err(invalid(format!(
                        "factor vocabulary has {} entries, model expects {:?}",
                        fv.len(),
                        cfg.factor_vocab_size
                    )));
                }
                if self.lexicon.is_none() {
                    return Err(invalid("factored model needs a lexicon for recombination"));
                }
            }
            Variant::Bpe if self.merges.is_none() => return Err(invalid("bpe model needs a merge table")),
            _ => {}
        }
        Ok(())
    }

    /// Token sequence the model encodes.
    pub fn source_tokens(&self, model: &Model, words: &[String]) -> Vec<String> {
        match (model.variant(), &self.merges) {
            (Variant::Bpe, Some(m)) => m.apply(words),
            _ => words.to_vec(),
        }
    }

    fn render(
        &self,
        model: &Model,
        hyp: &Hypothesis,
        source_tokens: &[String],
        opts: &TranslateOptions,
    ) -> Result<(TranslationResult, Vec<String>)> {
        let tokens = hyp
            .tokens
            .iter()
            .map(|&id| self.tgt_vocab.token(id).map(String::from))
            .collect::<Result<Vec<_>>>()?;
        let factors = match (&hyp.factors, &self.factor_vocab) {
            (Some(ids), Some(fv)) => Some(
                ids.iter()
                    .map(|&id| fv.token(id).map(String::from))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (Some(_), None) => return Err(invalid("factored output without a factor vocabulary")),
            _ => None,
        };
        let mut result = TranslationResult {
            origins: vec![Origin::Model; tokens.len()],
            tokens,
            factors,
            attention: hyp.attention.clone(),
            log_prob: hyp.log_prob,
            score: hyp.normalized_score(opts.beam.alpha),
        };
        if opts.unk_replace && model.variant() != Variant::Bpe {
            result = unk_replace(&result, source_tokens, self.dictionary.as_ref());
        }
        let words = match model.variant() {
            Variant::Word => result.tokens.clone(),
            Variant::Bpe => bpe_undo(&result.tokens),
            Variant::Factored => {
                let lexicon = self
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| invalid("factored model needs a lexicon"))?;
                let tags: Vec<FactorTag> = result
                    .factors
                    .as_deref()
                    .unwrap_or(&[])
                    .iter()
                    .map(|f| FactorTag::parse(f).unwrap_or_else(|_| FactorTag::unknown(Case::Lower)))
                    .collect();
                recombine(&result.tokens, &tags, lexicon)?
            }
        };
        Ok((result, words))
    }

    /// Runs one tokenized sentence through the full pipeline.
    pub fn translate(&self, model: &Model, words: &[String], opts: &TranslateOptions) -> Result<Translation> {
        let source_tokens = self.source_tokens(model, words);
        let ids = self.src_vocab.encode(&source_tokens);
        let hyps = if opts.greedy {
            vec![greedy_decode(model, &ids, opts.beam.max_len)?]
        } else {
            beam_search(model, &ids, &opts.beam, |_| {})?
        };
        let mut best = None;
        let mut nbest = Vec::with_capacity(hyps.len());
        for hyp in &hyps {
            let (result, words) = self.render(model, hyp, &source_tokens, opts)?;
            nbest.push(NbestEntry {
                words: words.clone(),
                score: result.score,
                log_prob: result.log_prob,
            });
            if best.is_none() {
                best = Some((result, words));
            }
        }
        let (result, words) = best.expect("search returns at least one hypothesis");
        Ok(Translation {
            words,
            source_tokens,
            result,
            nbest,
        })
    }
}

/// Whitespace-tokenizes `sentence` and translates it.
pub fn translate_pipeline(
    model: &Model,
    translator: &Translator,
    sentence: &str,
    opts: &TranslateOptions,
) -> Result<Vec<String>> {
    Ok(translator.translate(model, &tokenize(sentence), opts)?.words)
}

/// Greedy-decoded, add-one smoothed corpus BLEU used for early stopping.
pub fn dev_bleu(
    model: &Model,
    translator: &Translator,
    sources: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<f64> {
    if sources.is_empty() {
        return Err(invalid("dev set is empty"));
    }
    let opts = TranslateOptions {
        greedy: true,
        ..TranslateOptions::default()
    };
    let hyps = sources
        .iter()
        .map(|s| translator.translate(model, s, &opts).map(|t| t.words))
        .collect::<Result<Vec<_>>>()?;
    Ok(bleu_corpus(&hyps, references, true)?.bleu)
}
