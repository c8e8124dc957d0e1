//! Corpus BLEU, UNK counting, and word/lemma/factor stream scores.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::morphology::{factorize_sentence, Lexicon};
use crate::text::UNK_TOKEN;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    /// Percentage in `[0, 100]`.
    pub bleu: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub bp: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub smoothed: bool,
}

impl BleuReport {
    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        [self.p1, self.p2, self.p3, self.p4]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, hyp_len={}, ref_len={}{})",
            self.bleu,
            100.0 * self.p1,
            100.0 * self.p2,
            100.0 * self.p3,
            100.0 * self.p4,
            self.bp,
            self.hyp_len,
            self.ref_len,
            if self.smoothed { ", smoothed" } else { "" }
        )
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(|t| t.as_ref()).collect();
            *counts.entry(key).or_default() += 1;
        }
    }
    counts
}

/// Corpus BLEU against one reference per hypothesis.
///
/// Clipped n-gram matches and totals are summed over the corpus for
/// n = 1..4. With `smooth`, orders n ≥ 2 use `(matches + 1) / (total + 1)`.
/// Orders for which the hypotheses contain no n-grams at all (every
/// hypothesis shorter than n) are left out of the geometric mean.
pub fn bleu_corpus<H, R>(hypotheses: &[H], references: &[R], smooth: bool) -> Result<BleuReport>
where
    H: AsRef<[String]>,
    R: AsRef<[String]>,
{
    if hypotheses.len() != references.len() {
        return Err(invalid(format!(
            "bleu: {} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (gram, c) in &hc {
                matches[n - 1] += (*c).min(rc.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }

    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut orders = 0;
    let mut zero = false;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        let p = if smooth && n > 0 {
            (matches[n] + 1) as f64 / (totals[n] + 1) as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        precisions[n] = p;
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        orders += 1;
    }
    let bp = (1.0 - ref_len as f64 / hyp_len.max(1) as f64).min(0.0).exp();
    let bleu = if zero || orders == 0 {
        0.0
    } else {
        100.0 * bp * (log_sum / orders as f64).exp()
    };
    Ok(BleuReport {
        bleu: bleu.min(100.0),
        p1: precisions[0],
        p2: precisions[1],
        p3: precisions[2],
        p4: precisions[3],
        bp,
        hyp_len,
        ref_len,
        smoothed: smooth,
    })
}

/// Number of literal `UNK` tokens.
pub fn count_unk<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens.iter().filter(|t| t.as_ref() == UNK_TOKEN).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamScores {
    pub word: BleuReport,
    pub lemma: BleuReport,
    pub factors: BleuReport,
}

/// Scores both sides after decomposing every word into its lemma and
/// factor tag with the lexicon.
pub fn factored_stream_scores<H, R>(hypotheses: &[H], references: &[R], lexicon: &Lexicon) -> Result<StreamScores>
where
    H: AsRef<[String]>,
    R: AsRef<[String]>,
{
    let decompose = |sents: Vec<&[String]>| {
        let factored: Vec<_> = sents.into_iter().map(|s| factorize_sentence(s, lexicon)).collect();
        let lemmas: Vec<Vec<String>> = factored.iter().map(|f| f.lemmas.clone()).collect();
        let tags: Vec<Vec<String>> = factored.iter().map(|f| f.factor_strings()).collect();
        (lemmas, tags)
    };
    let (hl, ht) = decompose(hypotheses.iter().map(|h| h.as_ref()).collect());
    let (rl, rt) = decompose(references.iter().map(|r| r.as_ref()).collect());
    Ok(StreamScores {
        word: bleu_corpus(hypotheses, references, false)?,
        lemma: bleu_corpus(&hl, &rl, false)?,
        factors: bleu_corpus(&ht, &rt, false)?,
    })
}
