//! Graph-level building blocks shared by training and decoding, so both
//! run exactly the same arithmetic.

use super::{Layout, ModelConfig};
use crate::error::{invalid, Result};
use crate::tensor::{Graph, ParamId, Tensor, Var};

#[derive(Debug, Clone)]
pub(crate) struct GruIds {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GruIds {
    /// `h' = h + z ⊙ (tanh(Wh·x + Uh·(r ⊙ h) + bh) − h)`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let gate = |g: &mut Graph<'_>, w: ParamId, u: ParamId, b: ParamId| -> Result<Var> {
            let (w, u, b) = (g.param(w), g.param(u), g.param(b));
            let wx = g.matmul(w, x)?;
            let uh = g.matmul(u, h)?;
            let s = g.add(wx, uh)?;
            let s = g.add(s, b)?;
            Ok(g.sigmoid(s))
        };
        let z = gate(g, self.wz, self.uz, self.bz)?;
        let r = gate(g, self.wr, self.ur, self.br)?;
        let (wh, uh, bh) = (g.param(self.wh), g.param(self.uh), g.param(self.bh));
        let rh = g.mul(r, h)?;
        let a = g.matmul(wh, x)?;
        let b = g.matmul(uh, rh)?;
        let pre = g.add(a, b)?;
        let pre = g.add(pre, bh)?;
        let cand = g.tanh(pre);
        let diff = g.sub(cand, h)?;
        let upd = g.mul(z, diff)?;
        g.add(h, upd)
    }
}

/// Encoder output on a graph: annotations (T × 2H) and their attention
/// projection (T × A).
#[derive(Debug, Clone, Copy)]
pub(crate) struct EncodedVars {
    pub annotations: Var,
    pub projected: Var,
}

pub(crate) fn encode(g: &mut Graph<'_>, layout: &Layout, cfg: &ModelConfig, source: &[usize]) -> Result<EncodedVars> {
    if source.is_empty() {
        return Err(invalid("encode: empty source sequence"));
    }
    let table = g.param(layout.src_emb);
    let mut emb = Vec::with_capacity(source.len());
    for &id in source {
        emb.push(g.lookup(table, id)?);
    }
    let zero = g.constant(Tensor::zeros(&[cfg.rnn_dim]));
    let mut fwd = Vec::with_capacity(source.len());
    let mut h = zero;
    for &x in &emb {
        h = layout.enc_fwd.step(g, x, h)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; source.len()];
    let mut h = zero;
    for j in (0..source.len()).rev() {
        h = layout.enc_bwd.step(g, emb[j], h)?;
        bwd[j] = h;
    }
    let mut rows = Vec::with_capacity(source.len());
    for j in 0..source.len() {
        rows.push(g.concat(&[fwd[j], bwd[j]])?);
    }
    let annotations = g.stack(&rows)?;
    let u = g.param(layout.att_u);
    let projected = g.matmul(annotations, u)?;
    Ok(EncodedVars { annotations, projected })
}

/// `tanh(W_init · mean(annotations) + b_init)`.
pub(crate) fn initial_state(g: &mut Graph<'_>, layout: &Layout, enc: EncodedVars) -> Result<Var> {
    let mean = g.mean_rows(enc.annotations)?;
    let (w, b) = (g.param(layout.init_w), g.param(layout.init_b));
    let s = g.matmul(w, mean)?;
    let s = g.add(s, b)?;
    Ok(g.tanh(s))
}

/// Additive attention: `e_j = vᵀ tanh(W·s + U·h_j + b)`, softmax over
/// positions, context `Σ α_j h_j`. Returns (context, weights).
pub(crate) fn attend(g: &mut Graph<'_>, layout: &Layout, state: Var, enc: EncodedVars) -> Result<(Var, Var)> {
    let (w, b, v) = (g.param(layout.att_w), g.param(layout.att_b), g.param(layout.att_v));
    let ws = g.matmul(w, state)?;
    let ws = g.add(ws, b)?;
    let pre = g.add_row(enc.projected, ws)?;
    let act = g.tanh(pre);
    let scores = g.matmul(act, v)?;
    let alpha = g.softmax(scores)?;
    let ctx = g.matmul(alpha, enc.annotations)?;
    Ok((ctx, alpha))
}

pub(crate) struct CgruOut {
    pub state: Var,
    pub context: Var,
    pub attention: Var,
}

/// GRU-1 on the feedback, attention on the intermediate state, GRU-2 on
/// the context.
pub(crate) fn cgru_step(
    g: &mut Graph<'_>,
    layout: &Layout,
    state: Var,
    feedback: Var,
    enc: EncodedVars,
) -> Result<CgruOut> {
    let inter = layout.dec1.step(g, feedback, state)?;
    let (context, attention) = attend(g, layout, inter, enc)?;
    let state = layout.dec2.step(g, context, inter)?;
    Ok(CgruOut {
        state,
        context,
        attention,
    })
}

/// Shared deep-output layer `tanh(W1·s + W2·fb + W3·c + b)` followed by
/// one projection (word) or two (lemma, factor).
pub(crate) fn output_heads(
    g: &mut Graph<'_>,
    layout: &Layout,
    state: Var,
    feedback: Var,
    context: Var,
) -> Result<(Var, Option<Var>)> {
    let (w1, w2, w3, b) = (
        g.param(layout.lo_state),
        g.param(layout.lo_feedback),
        g.param(layout.lo_context),
        g.param(layout.lo_b),
    );
    let a = g.matmul(w1, state)?;
    let f = g.matmul(w2, feedback)?;
    let c = g.matmul(w3, context)?;
    let s = g.add(a, f)?;
    let s = g.add(s, c)?;
    let s = g.add(s, b)?;
    let hidden = g.tanh(s);
    let head = |g: &mut Graph<'_>, w: ParamId, b: ParamId| -> Result<Var> {
        let (w, b) = (g.param(w), g.param(b));
        let o = g.matmul(w, hidden)?;
        g.add(o, b)
    };
    let logits = head(g, layout.out_w, layout.out_b)?;
    let factor_logits = match &layout.factor {
        Some(f) => Some(head(g, f.out_w, f.out_b)?),
        None => None,
    };
    Ok((logits, factor_logits))
}

/// Decoder input for the symbol(s) emitted at the previous step; the
/// lemma and factor embeddings are concatenated for factored models.
pub(crate) fn feedback(g: &mut Graph<'_>, layout: &Layout, word: usize, factor: Option<usize>) -> Result<Var> {
    let table = g.param(layout.tgt_emb);
    let w = g.lookup(table, word)?;
    match (&layout.factor, factor) {
        (Some(f), Some(fid)) => {
            let table = g.param(f.emb);
            let e = g.lookup(table, fid)?;
            g.concat(&[w, e])
        }
        (None, None) => Ok(w),
        (Some(_), None) => Err(invalid("factored model needs a factor id for feedback")),
        (None, Some(_)) => Err(invalid("word model got a factor id for feedback")),
    }
}

pub(crate) fn zero_feedback(g: &mut Graph<'_>, cfg: &ModelConfig) -> Var {
    g.constant(Tensor::zeros(&[cfg.feedback_dim()]))
}
