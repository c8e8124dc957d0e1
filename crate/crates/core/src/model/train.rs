use serde::Serialize;

use super::{network, Layout, Model, ModelConfig};
use crate::error::{invalid, Error, Result};
use crate::tensor::{clip_global_norm, Adadelta, AdadeltaConfig, Gradients, Graph, Var};
use crate::text::{make_batches, Batch, Example, TargetSeq};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without dev improvement tolerated before stopping.
    pub patience: usize,
    /// Evaluate every this many epochs.
    pub eval_interval: usize,
    pub clip_norm: f64,
    pub adadelta: AdadeltaConfig,
    pub lemma_weight: f64,
    pub factor_weight: f64,
    /// Stop as soon as the dev score reaches this value.
    pub target_bleu: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 80,
            max_epochs: 100,
            patience: 10,
            eval_interval: 1,
            clip_norm: 1.0,
            adadelta: AdadeltaConfig::default(),
            lemma_weight: 1.0,
            factor_weight: 1.0,
            target_bleu: None,
            seed: 1234,
        }
    }
}

/// Losses are means over target tokens (EOS included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    pub loss: f64,
    /// Word or lemma stream.
    pub primary_loss: f64,
    pub factor_loss: Option<f64>,
    pub tokens: usize,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

fn build_loss(
    g: &mut Graph<'_>,
    layout: &Layout,
    cfg: &ModelConfig,
    source: &[usize],
    target: &TargetSeq,
) -> Result<(Var, Option<Var>)> {
    let (words, factors) = match target {
        TargetSeq::Word(ids) => (ids.as_slice(), None),
        TargetSeq::Factored { lemmas, factors } => (lemmas.as_slice(), Some(factors.as_slice())),
    };
    if factors.is_some() != cfg.variant.is_factored() {
        return Err(invalid(format!("{} model given the wrong target kind", cfg.variant)));
    }
    if let Some(f) = factors {
        if f.len() != words.len() {
            return Err(invalid("lemma and factor streams differ in length"));
        }
    }
    let enc = network::encode(g, layout, cfg, source)?;
    let mut state = network::initial_state(g, layout, enc)?;
    let mut fb = network::zero_feedback(g, cfg);
    let mut primary: Option<Var> = None;
    let mut secondary: Option<Var> = None;
    for t in 0..words.len() {
        let out = network::cgru_step(g, layout, state, fb, enc)?;
        let (logits, factor_logits) = network::output_heads(g, layout, out.state, fb, out.context)?;
        let ce = g.cross_entropy(logits, words[t])?;
        primary = Some(match primary {
            Some(p) => g.add(p, ce)?,
            None => ce,
        });
        let factor = match (factors, factor_logits) {
            (Some(f), Some(fl)) => {
                let ce = g.cross_entropy(fl, f[t])?;
                secondary = Some(match secondary {
                    Some(p) => g.add(p, ce)?,
                    None => ce,
                });
                Some(f[t])
            }
            _ => None,
        };
        state = out.state;
        fb = network::feedback(g, layout, words[t], factor)?;
    }
    let primary = primary.ok_or_else(|| invalid("empty target sequence"))?;
    Ok((primary, secondary))
}

/// Summed (not averaged) teacher-forced cross-entropy of one example:
/// (word or lemma stream, factor stream).
pub fn sentence_loss(model: &Model, example: &Example) -> Result<(f64, Option<f64>)> {
    let mut g = Graph::new(model.params());
    let (p, f) = build_loss(&mut g, model.layout(), model.config(), &example.source, &example.target)?;
    Ok((g.value(p).item(), f.map(|f| g.value(f).item())))
}

/// Weighted summed loss of one example and its exact gradient with
/// respect to every parameter.
pub fn sentence_gradients(
    model: &Model,
    example: &Example,
    lemma_weight: f64,
    factor_weight: f64,
) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(model.params());
    let (p, f) = build_loss(&mut g, model.layout(), model.config(), &example.source, &example.target)?;
    let total = match f {
        Some(f) => {
            let a = g.scale(p, lemma_weight);
            let b = g.scale(f, factor_weight);
            g.add(a, b)?
        }
        None => p,
    };
    let loss = g.value(total).item();
    let mut grads = model.params().zero_grads();
    g.backward(total, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// Holds the model and optimizer state across updates.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    optimizer: Adadelta,
    config: TrainConfig,
    epoch: usize,
    updates: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Trainer> {
        if config.batch_size == 0 || config.eval_interval == 0 {
            return Err(invalid("batch size and evaluation interval must be at least 1"));
        }
        let optimizer = Adadelta::new(model.params(), config.adadelta)?;
        Ok(Trainer {
            model,
            optimizer,
            config,
            epoch: 0,
            updates: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn optimizer(&self) -> &Adadelta {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// One teacher-forced update on `batch`: per-sentence graphs whose
    /// gradients are summed with weight `1 / tokens`, global-norm
    /// clipping, then Adadelta. A batch without target tokens changes
    /// nothing.
    pub fn step(&mut self, batch: &Batch) -> Result<StepStats> {
        let tokens = batch.target.token_count();
        let factored = self.model.variant().is_factored();
        if tokens == 0 {
            return Ok(StepStats {
                loss: 0.0,
                primary_loss: 0.0,
                factor_loss: factored.then_some(0.0),
                tokens: 0,
                grad_norm: 0.0,
            });
        }
        let scale = 1.0 / tokens as f64;
        let (lw, fw) = (self.config.lemma_weight, self.config.factor_weight);
        let mut grads = self.model.params().zero_grads();
        let (mut primary_sum, mut factor_sum) = (0.0, 0.0);
        for i in 0..batch.size() {
            let ex = batch.example(i);
            if ex.target.is_empty() {
                continue;
            }
            let mut g = Graph::new(self.model.params());
            let (p, f) = build_loss(&mut g, self.model.layout(), self.model.config(), &ex.source, &ex.target)?;
            primary_sum += g.value(p).item();
            let total = match f {
                Some(f) => {
                    factor_sum += g.value(f).item();
                    let a = g.scale(p, lw);
                    let b = g.scale(f, fw);
                    g.add(a, b)?
                }
                None => p,
            };
            g.backward(total, scale, &mut grads)?;
        }
        let primary_loss = primary_sum * scale;
        let factor_loss = factored.then_some(factor_sum * scale);
        let loss = match factor_loss {
            Some(f) => lw * primary_loss + fw * f,
            None => primary_loss,
        };
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::TrainingDiverged {
                epoch: self.epoch,
                update: self.updates + 1,
                detail: format!("loss {loss}, finite gradients: {}", grads.all_finite()),
            });
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.clip_norm)?;
        self.optimizer.step(self.model.params_mut(), &grads)?;
        self.updates += 1;
        if !self.model.params().iter().all(|(_, t)| t.all_finite()) {
            return Err(Error::TrainingDiverged {
                epoch: self.epoch,
                update: self.updates,
                detail: "non-finite parameters after update".into(),
            });
        }
        Ok(StepStats {
            loss,
            primary_loss,
            factor_loss,
            tokens,
            grad_norm,
        })
    }
}

/// Convenience wrapper around [`Trainer::step`].
pub fn train_step(trainer: &mut Trainer, batch: &Batch) -> Result<StepStats> {
    trainer.step(batch)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub updates: usize,
    pub loss: f64,
    pub primary_loss: f64,
    pub factor_loss: Option<f64>,
    pub dev_bleu: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TargetReached,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the best dev score.
    pub best: Model,
    pub best_bleu: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Epoch loop with dev evaluation and early stopping.
///
/// `evaluate` scores the current model on the dev set (higher is better).
/// `on_eval` runs after every evaluation with the best model so far, so
/// the caller can persist checkpoints and history as training proceeds.
pub fn train_loop<E, C>(
    mut trainer: Trainer,
    examples: &[Example],
    mut evaluate: E,
    mut on_eval: C,
) -> Result<TrainOutcome>
where
    E: FnMut(&Model) -> Result<f64>,
    C: FnMut(&Model, &[EpochRecord]) -> Result<()>,
{
    let cfg = trainer.config.clone();
    let mut history = Vec::new();
    let mut best: Option<(Model, f64, usize)> = None;
    let mut stale = 0;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        trainer.epoch = epoch;
        let batches = make_batches(examples, cfg.batch_size, cfg.seed.wrapping_add(epoch as u64))?;
        let (mut weighted, mut primary, mut factor, mut tokens) = (0.0, 0.0, 0.0, 0usize);
        for b in &batches {
            let s = trainer.step(b)?;
            weighted += s.loss * s.tokens as f64;
            primary += s.primary_loss * s.tokens as f64;
            factor += s.factor_loss.unwrap_or(0.0) * s.tokens as f64;
            tokens += s.tokens;
        }
        let denom = tokens.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            updates: trainer.updates,
            loss: weighted / denom,
            primary_loss: primary / denom,
            factor_loss: trainer.model.variant().is_factored().then_some(factor / denom),
            dev_bleu: None,
            improved: false,
        };
        if epoch % cfg.eval_interval != 0 {
            history.push(record);
            continue;
        }
        let bleu = evaluate(&trainer.model)?;
        record.dev_bleu = Some(bleu);
        let improved = best.as_ref().is_none_or(|(_, b, _)| bleu > *b);
        record.improved = improved;
        log::info!(
            "epoch {epoch}: loss {:.4}, dev BLEU {bleu:.2}{}",
            record.loss,
            if improved { " (best)" } else { "" }
        );
        history.push(record);
        if improved {
            best = Some((trainer.model.clone(), bleu, epoch));
            stale = 0;
        } else {
            stale += 1;
        }
        let (best_model, best_bleu, _) = best.as_ref().expect("set on first evaluation");
        on_eval(best_model, &history)?;
        if cfg.target_bleu.is_some_and(|t| *best_bleu >= t) {
            stop = StopReason::TargetReached;
            break;
        }
        if stale > cfg.patience {
            stop = StopReason::Patience;
            break;
        }
    }
    let (best, best_bleu, best_epoch) = match best {
        Some(b) => b,
        None => {
            let bleu = evaluate(&trainer.model)?;
            let epoch = history.len();
            let model = trainer.into_model();
            on_eval(&model, &history)?;
            (model, bleu, epoch)
        }
    };
    Ok(TrainOutcome {
        best,
        best_bleu,
        best_epoch,
        history,
        stop,
    })
}
