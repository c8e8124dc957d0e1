use std::cmp::Ordering;

use crate::error::{invalid, Result};
use crate::model::{DecoderState, Encoded, Model};
use crate::tensor::{argmax, log_softmax};
use crate::text::EOS;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Output length cap; `None` means twice the source length plus 5.
    pub max_len: Option<usize>,
    /// Final scores are `log_prob / length^alpha`; 0 disables normalization.
    pub alpha: f64,
    /// Factored models only: expand every (lemma, factor) pair instead of
    /// pairing each lemma with the step's best factor.
    pub factor_cross_product: bool,
    /// Finished hypotheses returned, best first.
    pub nbest: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 12,
            max_len: None,
            alpha: 1.0,
            factor_cross_product: false,
            nbest: 1,
        }
    }
}

impl BeamConfig {
    pub fn with_beam(beam_size: usize) -> Self {
        BeamConfig {
            beam_size,
            ..BeamConfig::default()
        }
    }

    /// Effective cap for a source of `source_ids` ids (EOS included).
    pub fn max_len_for(&self, model: &Model, source_ids: usize) -> usize {
        let words = source_ids.saturating_sub(1);
        self.max_len.unwrap_or(2 * words + 5).min(model.config().max_target_len)
    }
}

/// A partial or finished output. For factored models `factors` always has
/// the same length as `tokens`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, EOS excluded.
    pub tokens: Vec<usize>,
    pub factors: Option<Vec<usize>>,
    /// Cumulative log-probability, EOS step included.
    pub log_prob: f64,
    /// One attention row per emitted token.
    pub attention: Vec<Vec<f64>>,
    pub finished: bool,
    /// True when the hypothesis ended with EOS rather than at the cap.
    pub ended_with_eos: bool,
    state: Option<DecoderState>,
}

impl Hypothesis {
    fn root(state: DecoderState, factored: bool) -> Self {
        Hypothesis {
            tokens: Vec::new(),
            factors: factored.then(Vec::new),
            log_prob: 0.0,
            attention: Vec::new(),
            finished: false,
            ended_with_eos: false,
            state: Some(state),
        }
    }

    /// Scored steps: emitted tokens plus the EOS step if there was one.
    pub fn scored_len(&self) -> usize {
        self.tokens.len() + usize::from(self.ended_with_eos)
    }

    pub fn normalized_score(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            self.log_prob
        } else {
            self.log_prob / (self.scored_len().max(1) as f64).powf(alpha)
        }
    }
}

/// Argmax decoding; factored models take the lemma and factor argmax
/// independently at each step.
pub fn greedy_decode(model: &Model, source: &[usize], max_len: Option<usize>) -> Result<Hypothesis> {
    let cfg = BeamConfig {
        max_len,
        ..BeamConfig::default()
    };
    let limit = cfg.max_len_for(model, source.len());
    let enc = model.encode(source)?;
    let factored = model.variant().is_factored();
    let mut hyp = Hypothesis::root(model.initial_state(&enc)?, factored);
    while hyp.tokens.len() < limit {
        let state = hyp.state.take().expect("live hypothesis has a state");
        let out = model.step(&state, &enc)?;
        let word = argmax(&out.logits);
        hyp.log_prob += log_softmax(&out.logits)[word];
        let factor = match &out.factor_logits {
            Some(fl) => {
                let f = argmax(fl);
                hyp.log_prob += log_softmax(fl)[f];
                Some(f)
            }
            None => None,
        };
        if word == EOS {
            hyp.ended_with_eos = true;
            break;
        }
        hyp.tokens.push(word);
        if let (Some(fs), Some(f)) = (hyp.factors.as_mut(), factor) {
            fs.push(f);
        }
        hyp.attention.push(out.attention);
        hyp.state = Some(model.advance(out.hidden, state.step, word, factor)?);
    }
    hyp.finished = true;
    hyp.state = None;
    Ok(hyp)
}

struct Candidate {
    parent: usize,
    word: usize,
    factor: Option<usize>,
    log_prob: f64,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.parent.cmp(&b.parent))
        .then(a.word.cmp(&b.word))
        .then(a.factor.cmp(&b.factor))
}

/// Beam search. Each step keeps the `beam - finished` best extensions by
/// cumulative log-probability, so the live beam shrinks as hypotheses end.
/// Hypotheses still live at the length cap count as finished. The result
/// is every finished hypothesis ranked by normalized score (ties keep the
/// earlier one), cut to `nbest`.
///
/// `observer` sees every hypothesis the search creates, partial or
/// finished.
pub fn beam_search(
    model: &Model,
    source: &[usize],
    config: &BeamConfig,
    mut observer: impl FnMut(&Hypothesis),
) -> Result<Vec<Hypothesis>> {
    if config.beam_size == 0 {
        return Err(invalid("beam size must be at least 1"));
    }
    let limit = config.max_len_for(model, source.len());
    let enc: Encoded = model.encode(source)?;
    let factored = model.variant().is_factored();
    let root = Hypothesis::root(model.initial_state(&enc)?, factored);
    observer(&root);
    let mut live = vec![root];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..limit {
        let room = config.beam_size.saturating_sub(finished.len());
        if room == 0 || live.is_empty() {
            break;
        }
        let mut outputs = Vec::with_capacity(live.len());
        let mut candidates = Vec::new();
        for (i, hyp) in live.iter().enumerate() {
            let state = hyp.state.as_ref().expect("live hypothesis has a state");
            let out = model.step(state, &enc)?;
            let lp = log_softmax(&out.logits);
            match &out.factor_logits {
                None => {
                    for (w, &l) in lp.iter().enumerate() {
                        candidates.push(Candidate {
                            parent: i,
                            word: w,
                            factor: None,
                            log_prob: hyp.log_prob + l,
                        });
                    }
                }
                Some(fl) => {
                    let flp = log_softmax(fl);
                    let factors: Vec<usize> = if config.factor_cross_product {
                        (0..flp.len()).collect()
                    } else {
                        vec![argmax(fl)]
                    };
                    for (w, &l) in lp.iter().enumerate() {
                        for &f in &factors {
                            candidates.push(Candidate {
                                parent: i,
                                word: w,
                                factor: Some(f),
                                log_prob: hyp.log_prob + l + flp[f],
                            });
                        }
                    }
                }
            }
            outputs.push(out);
        }
        if candidates.len() > room {
            candidates.select_nth_unstable_by(room - 1, candidate_order);
            candidates.truncate(room);
        }
        candidates.sort_by(candidate_order);

        let mut next = Vec::with_capacity(candidates.len());
        for c in candidates {
            let parent = &live[c.parent];
            let out = &outputs[c.parent];
            let mut hyp = Hypothesis {
                tokens: parent.tokens.clone(),
                factors: parent.factors.clone(),
                log_prob: c.log_prob,
                attention: parent.attention.clone(),
                finished: false,
                ended_with_eos: false,
                state: None,
            };
            if c.word == EOS {
                hyp.finished = true;
                hyp.ended_with_eos = true;
                observer(&hyp);
                finished.push(hyp);
                continue;
            }
            hyp.tokens.push(c.word);
            if let (Some(fs), Some(f)) = (hyp.factors.as_mut(), c.factor) {
                fs.push(f);
            }
            hyp.attention.push(out.attention.clone());
            let step = parent.state.as_ref().map_or(0, |s| s.step);
            hyp.state = Some(model.advance(out.hidden.clone(), step, c.word, c.factor)?);
            observer(&hyp);
            next.push(hyp);
        }
        live = next;
    }
    for mut hyp in live {
        hyp.finished = true;
        hyp.state = None;
        observer(&hyp);
        finished.push(hyp);
    }
    // stable sort keeps discovery order among equal scores
    finished.sort_by(|a, b| {
        b.normalized_score(config.alpha)
            .total_cmp(&a.normalized_score(config.alpha))
    });
    finished.truncate(config.nbest.max(1));
    Ok(finished)
}

/// Best hypothesis of [`beam_search`].
pub fn beam_decode(model: &Model, source: &[usize], config: &BeamConfig) -> Result<Hypothesis> {
    let mut out = beam_search(model, source, config, |_| {})?;
    Ok(out.remove(0))
}
