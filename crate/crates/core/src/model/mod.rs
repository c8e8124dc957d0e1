//! Attention encoder-decoder with a conditional-GRU decoder.
//!
//! Word and BPE models have one softmax head over target tokens. Factored
//! models share the decoder and the deep-output layer between two heads,
//! one over lemmas and one over factor tags, and feed back the
//! concatenation of both embeddings.

pub(crate) mod network;
mod train;

use std::fs;
use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{file_error, invalid, Error, Result};
use crate::tensor::{xavier_init, Graph, ParamId, ParamStore, Tensor};
use network::{EncodedVars, GruIds};

pub use train::{
    sentence_gradients, sentence_loss, train_loop, train_step, EpochRecord, StepStats, StopReason, TrainConfig,
    TrainOutcome, Trainer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Word,
    Bpe,
    Factored,
}

impl Variant {
    pub fn is_factored(self) -> bool {
        self == Variant::Factored
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Variant::Word),
            "bpe" => Ok(Variant::Bpe),
            "factored" => Ok(Variant::Factored),
            other => Err(invalid(format!("unknown variant {other:?} (word, bpe, factored)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Word => "word",
            Variant::Bpe => "bpe",
            Variant::Factored => "factored",
        })
    }
}

/// Paths of the artifacts a model was trained with, as given at training
/// time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub src_vocab: Option<String>,
    pub tgt_vocab: Option<String>,
    pub factor_vocab: Option<String>,
    pub merges: Option<String>,
    pub lexicon: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub emb_dim: usize,
    pub rnn_dim: usize,
    /// Factored models only.
    pub factor_emb_dim: usize,
    pub src_vocab_size: usize,
    /// Target tokens, or lemmas for factored models.
    pub tgt_vocab_size: usize,
    pub factor_vocab_size: Option<usize>,
    /// Hard cap on decoded length.
    pub max_target_len: usize,
    #[serde(default)]
    pub resources: Resources,
}

impl ModelConfig {
    pub fn new(
        variant: Variant,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
        factor_vocab_size: Option<usize>,
    ) -> Self {
        ModelConfig {
            variant,
            emb_dim: 620,
            rnn_dim: 1000,
            factor_emb_dim: 64,
            src_vocab_size,
            tgt_vocab_size,
            factor_vocab_size,
            max_target_len: 100,
            resources: Resources::default(),
        }
    }

    pub fn with_dims(mut self, emb_dim: usize, rnn_dim: usize, factor_emb_dim: usize) -> Self {
        self.emb_dim = emb_dim;
        self.rnn_dim = rnn_dim;
        self.factor_emb_dim = factor_emb_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("emb_dim", self.emb_dim),
            ("rnn_dim", self.rnn_dim),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(invalid(format!("model config: {name} must be at least 1")));
            }
        }
        match (self.variant, self.factor_vocab_size) {
            (Variant::Factored, None | Some(0)) => Err(invalid("factored model needs a factor vocabulary size")),
            (Variant::Factored, _) if self.factor_emb_dim == 0 => {
                Err(invalid("model config: factor_emb_dim must be at least 1"))
            }
            (Variant::Word | Variant::Bpe, Some(_)) => Err(invalid(format!(
                "{} model must not have a factor vocabulary",
                self.variant
            ))),
            _ => Ok(()),
        }
    }

    /// Width of the decoder input at each step.
    pub fn feedback_dim(&self) -> usize {
        match self.variant {
            Variant::Factored => self.emb_dim + self.factor_emb_dim,
            _ => self.emb_dim,
        }
    }

    /// Attention MLP width.
    pub fn att_dim(&self) -> usize {
        self.rnn_dim
    }

    /// Parameter names and shapes in creation order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (e, h, a, fb) = (self.emb_dim, self.rnn_dim, self.att_dim(), self.feedback_dim());
        let mut out = vec![("src_emb".to_string(), vec![self.src_vocab_size, e])];
        let gru = |out: &mut Vec<(String, Vec<usize>)>, name: &str, input: usize| {
            for gate in ["z", "r", "h"] {
                out.push((format!("{name}.w{gate}"), vec![h, input]));
                out.push((format!("{name}.u{gate}"), vec![h, h]));
                out.push((format!("{name}.b{gate}"), vec![h]));
            }
        };
        gru(&mut out, "enc_fwd", e);
        gru(&mut out, "enc_bwd", e);
        out.push(("init.w".into(), vec![h, 2 * h]));
        out.push(("init.b".into(), vec![h]));
        out.push(("tgt_emb".into(), vec![self.tgt_vocab_size, e]));
        if let (Variant::Factored, Some(nf)) = (self.variant, self.factor_vocab_size) {
            out.push(("factor_emb".into(), vec![nf, self.factor_emb_dim]));
        }
        gru(&mut out, "dec1", fb);
        gru(&mut out, "dec2", 2 * h);
        out.push(("att.w".into(), vec![a, h]));
        out.push(("att.u".into(), vec![2 * h, a]));
        out.push(("att.b".into(), vec![a]));
        out.push(("att.v".into(), vec![a]));
        out.push(("out.w_state".into(), vec![e, h]));
        out.push(("out.w_feedback".into(), vec![e, fb]));
        out.push(("out.w_context".into(), vec![e, 2 * h]));
        out.push(("out.b".into(), vec![e]));
        out.push(("out.w".into(), vec![self.tgt_vocab_size, e]));
        out.push(("out.bias".into(), vec![self.tgt_vocab_size]));
        if let (Variant::Factored, Some(nf)) = (self.variant, self.factor_vocab_size) {
            out.push(("factor_out.w".into(), vec![nf, e]));
            out.push(("factor_out.bias".into(), vec![nf]));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FactorIds {
    pub emb: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Parameter handles resolved by name.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub src_emb: ParamId,
    pub enc_fwd: GruIds,
    pub enc_bwd: GruIds,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub tgt_emb: ParamId,
    pub dec1: GruIds,
    pub dec2: GruIds,
    pub att_w: ParamId,
    pub att_u: ParamId,
    pub att_b: ParamId,
    pub att_v: ParamId,
    pub lo_state: ParamId,
    pub lo_feedback: ParamId,
    pub lo_context: ParamId,
    pub lo_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub factor: Option<FactorIds>,
}

impl Layout {
    fn bind(store: &ParamStore, cfg: &ModelConfig) -> Result<Layout> {
        let expected = cfg.param_shapes();
        if expected.len() != store.len() {
            return Err(Error::CorruptModel(format!(
                "expected {} parameters for a {} model, found {}",
                expected.len(),
                cfg.variant,
                store.len()
            )));
        }
        for (name, shape) in &expected {
            match store.by_name(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::CorruptModel(format!(
                        "parameter {name}: shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::CorruptModel(format!("missing parameter {name}"))),
            }
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let gru = |p: &str| GruIds {
            wz: id(&format!("{p}.wz")),
            uz: id(&format!("{p}.uz")),
            bz: id(&format!("{p}.bz")),
            wr: id(&format!("{p}.wr")),
            ur: id(&format!("{p}.ur")),
            br: id(&format!("{p}.br")),
            wh: id(&format!("{p}.wh")),
            uh: id(&format!("{p}.uh")),
            bh: id(&format!("{p}.bh")),
        };
        Ok(Layout {
            src_emb: id("src_emb"),
            enc_fwd: gru("enc_fwd"),
            enc_bwd: gru("enc_bwd"),
            init_w: id("init.w"),
            init_b: id("init.b"),
            tgt_emb: id("tgt_emb"),
            dec1: gru("dec1"),
            dec2: gru("dec2"),
            att_w: id("att.w"),
            att_u: id("att.u"),
            att_b: id("att.b"),
            att_v: id("att.v"),
            lo_state: id("out.w_state"),
            lo_feedback: id("out.w_feedback"),
            lo_context: id("out.w_context"),
            lo_b: id("out.b"),
            out_w: id("out.w"),
            out_b: id("out.bias"),
            factor: cfg.variant.is_factored().then(|| FactorIds {
                emb: id("factor_emb"),
                out_w: id("factor_out.w"),
                out_b: id("factor_out.bias"),
            }),
        })
    }
}

/// Encoder annotations of one source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// One row per source position: forward state then backward state.
    pub annotations: Tensor,
    projected: Tensor,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.annotations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub hidden: Tensor,
    /// Embedding(s) of the previous output; zeros before the first step.
    pub feedback: Tensor,
    pub step: usize,
}

/// Scores of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub hidden: Tensor,
    pub logits: Vec<f64>,
    /// Factored models only.
    pub factor_logits: Option<Vec<f64>>,
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params.iter().eq(other.params.iter())
    }
}

impl Model {
    /// Xavier-initialized matrices and embeddings, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (i, (name, shape)) in config.param_shapes().into_iter().enumerate() {
            let value = if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                xavier_init(&shape, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64))?
            };
            params.insert(&name, value)?;
        }
        Model::from_parts(config, params)
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Model> {
        config.validate()?;
        let layout = Layout::bind(&params, &config)?;
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn resources_mut(&mut self) -> &mut Resources {
        &mut self.config.resources
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let meta = serde_json::json!({ "config": self.config });
        self.params.write_to(&mut out, meta)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let (params, meta) = ParamStore::read_from(&mut Cursor::new(bytes))?;
        let config: ModelConfig = meta
            .get("config")
            .cloned()
            .ok_or_else(|| Error::CorruptModel("metadata has no model config".into()))
            .and_then(|c| serde_json::from_value(c).map_err(|e| Error::CorruptModel(format!("model config: {e}"))))?;
        config.validate().map_err(|e| Error::CorruptModel(e.to_string()))?;
        Model::from_parts(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| file_error(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| file_error(path, e))?;
        Model::from_bytes(&bytes)
    }

    fn check_ids(&self, ids: &[usize], limit: usize, what: &str) -> Result<()> {
        match ids.iter().find(|&&i| i >= limit) {
            Some(bad) => Err(invalid(format!("{what} id {bad} outside vocabulary of {limit}"))),
            None => Ok(()),
        }
    }

    pub fn encode(&self, source: &[usize]) -> Result<Encoded> {
        self.check_ids(source, self.config.src_vocab_size, "source")?;
        let mut g = Graph::new(&self.params);
        let enc = network::encode(&mut g, &self.layout, &self.config, source)?;
        Ok(Encoded {
            annotations: g.value(enc.annotations).clone(),
            projected: g.value(enc.projected).clone(),
        })
    }

    pub fn initial_state(&self, enc: &Encoded) -> Result<DecoderState> {
        let mut g = Graph::new(&self.params);
        let vars = bind_encoded(&mut g, enc);
        let s = network::initial_state(&mut g, &self.layout, vars)?;
        Ok(DecoderState {
            hidden: g.value(s).clone(),
            feedback: Tensor::zeros(&[self.config.feedback_dim()]),
            step: 0,
        })
    }

    /// Attention of `state` over the encoder annotations: (context, weights).
    pub fn attend(&self, state: &Tensor, enc: &Encoded) -> Result<(Tensor, Vec<f64>)> {
        let mut g = Graph::new(&self.params);
        let vars = bind_encoded(&mut g, enc);
        let s = g.constant_ref(state);
        let (ctx, alpha) = network::attend(&mut g, &self.layout, s, vars)?;
        Ok((g.value(ctx).clone(), g.value(alpha).data().to_vec()))
    }

    /// Output-layer logits for a (state, feedback, context) triple.
    pub fn output(&self, state: &Tensor, feedback: &Tensor, context: &Tensor) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let mut g = Graph::new(&self.params);
        let (s, f, c) = (g.constant_ref(state), g.constant_ref(feedback), g.constant_ref(context));
        let (l, fl) = network::output_heads(&mut g, &self.layout, s, f, c)?;
        Ok((g.value(l).data().to_vec(), fl.map(|v| g.value(v).data().to_vec())))
    }

    /// One cGRU step followed by the output heads.
    pub fn step(&self, state: &DecoderState, enc: &Encoded) -> Result<StepOutput> {
        let mut g = Graph::new(&self.params);
        let vars = bind_encoded(&mut g, enc);
        let h = g.constant_ref(&state.hidden);
        let fb = g.constant_ref(&state.feedback);
        let out = network::cgru_step(&mut g, &self.layout, h, fb, vars)?;
        let (logits, factor_logits) = network::output_heads(&mut g, &self.layout, out.state, fb, out.context)?;
        Ok(StepOutput {
            hidden: g.value(out.state).clone(),
            logits: g.value(logits).data().to_vec(),
            factor_logits: factor_logits.map(|v| g.value(v).data().to_vec()),
            attention: g.value(out.attention).data().to_vec(),
        })
    }

    /// State for the next step after emitting `word` (and `factor`).
    pub fn advance(&self, hidden: Tensor, step: usize, word: usize, factor: Option<usize>) -> Result<DecoderState> {
        let feedback = self.feedback(word, factor)?;
        Ok(DecoderState {
            hidden,
            feedback,
            step: step + 1,
        })
    }

    pub fn feedback(&self, word: usize, factor: Option<usize>) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let v = network::feedback(&mut g, &self.layout, word, factor)?;
        Ok(g.value(v).clone())
    }
}

fn bind_encoded<'a>(g: &mut Graph<'a>, enc: &'a Encoded) -> EncodedVars {
    EncodedVars {
        annotations: g.constant_ref(&enc.annotations),
        projected: g.constant_ref(&enc.projected),
    }
}
