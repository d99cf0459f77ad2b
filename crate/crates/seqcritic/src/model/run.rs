//! Graph-building forward pass shared by training and inference.
//!
//! A `SeqRun` owns one computation graph per conditioning sequence: `begin`
//! binds the parameters, encodes the conditioning tokens, and prepares the
//! initial decoder state; each `step` appends one decoder step. Training
//! code keeps the run alive and backpropagates through all steps; inference
//! reads the step values and drops the run.

use std::collections::BTreeMap;

use numcore::{Graph, NodeId, Tensor};

use crate::error::{Result, SeqError};
use crate::vocab::TokenId;

use super::{ModelConfig, SeqNet};

pub struct RunStep {
    /// Output head values: actor logits (softmax them) or critic values.
    pub logits: NodeId,
    pub state: NodeId,
    pub ctx: NodeId,
    pub alpha: NodeId,
}

pub struct SeqRun {
    pub g: Graph,
    ids: BTreeMap<String, NodeId>,
    cfg: ModelConfig,
    /// Annotation matrix [L, 2*enc].
    hmat: NodeId,
    /// Precomputed annotations * attn.u, reused by every step.
    uh: NodeId,
    start_state: NodeId,
    start_ctx: NodeId,
    pub state: NodeId,
    pub ctx: NodeId,
}

impl SeqRun {
    pub fn begin(net: &SeqNet, cond: &[TokenId], trainable: bool) -> Result<SeqRun> {
        if cond.is_empty() {
            return Err(SeqError::Data("empty conditioning sequence".into()));
        }
        let cfg = net.cfg;
        let mut g = Graph::with_capacity(64 + 40 * cond.len());
        let mut ids = BTreeMap::new();
        for (name, value) in &net.params {
            ids.insert(name.clone(), g.leaf(name.clone(), value.clone(), trainable));
        }
        for &t in cond {
            if t >= cfg.vocab_size {
                return Err(SeqError::UnknownTokenId {
                    id: t,
                    size: cfg.vocab_size,
                });
            }
        }

        // embeddings for the conditioning sequence
        let emb = ids["emb_enc"];
        let inputs: Vec<NodeId> = cond
            .iter()
            .map(|&t| g.row(emb, t))
            .collect::<numcore::Result<_>>()?;

        // bidirectional encoder
        let zero_enc = g.constant(Tensor::zeros(&[cfg.enc]));
        let mut fwd = Vec::with_capacity(cond.len());
        let mut s = zero_enc;
        for &x in &inputs {
            s = gru_step(&mut g, &ids, "enc_f", x, s)?;
            fwd.push(s);
        }
        let mut bwd = vec![zero_enc; cond.len()];
        let mut s = zero_enc;
        for (j, &x) in inputs.iter().enumerate().rev() {
            s = gru_step(&mut g, &ids, "enc_b", x, s)?;
            bwd[j] = s;
        }
        let rows: Vec<NodeId> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<numcore::Result<_>>()?;
        let hmat = g.stack(&rows)?;
        let uh = g.matmul(hmat, ids["attn.u"])?;

        // decoder start: projection of the final backward state
        let iw = g.matvec(ids["init.w"], bwd[0])?;
        let iwb = g.add(iw, ids["init.b"])?;
        let s0 = g.tanh(iwb)?;
        let (_, c0) = attend_nodes(&mut g, &ids, hmat, uh, s0)?;

        Ok(SeqRun {
            g,
            ids,
            cfg,
            hmat,
            uh,
            start_state: s0,
            start_ctx: c0,
            state: s0,
            ctx: c0,
        })
    }

    /// Append one decoder step consuming `prev` (the previously emitted
    /// token, or `cfg.bos()` for the first step).
    pub fn step(&mut self, prev: TokenId, extra: Option<&Tensor>) -> Result<RunStep> {
        let out = self.step_from(self.state, self.ctx, prev, extra)?;
        self.state = out.state;
        self.ctx = out.ctx;
        Ok(out)
    }

    /// Decoder step branching from an explicit (state, ctx) pair; does not
    /// move the run's own track. Used by beam search to fan out hypotheses
    /// within one graph.
    pub fn step_from(
        &mut self,
        state: NodeId,
        ctx: NodeId,
        prev: TokenId,
        extra: Option<&Tensor>,
    ) -> Result<RunStep> {
        if prev > self.cfg.vocab_size {
            return Err(SeqError::UnknownTokenId {
                id: prev,
                size: self.cfg.vocab_size,
            });
        }
        let g = &mut self.g;
        let e = g.row(self.ids["emb_dec"], prev)?;
        let x = match (extra, self.cfg.extra_input) {
            (None, 0) => g.concat(&[e, ctx])?,
            (Some(t), n) if t.len() == n => {
                let extra_node = g.constant(t.clone());
                g.concat(&[e, ctx, extra_node])?
            }
            (extra, n) => {
                return Err(SeqError::Data(format!(
                    "decoder expects extra input of size {n}, got {:?}",
                    extra.map(Tensor::len)
                )))
            }
        };
        let s = gru_step(g, &self.ids, "dec", x, state)?;
        let (alpha, c) = attend_nodes(g, &self.ids, self.hmat, self.uh, s)?;
        let sc = g.concat(&[s, c])?;
        let wo = g.matvec(self.ids["out.w"], sc)?;
        let logits = g.add(wo, self.ids["out.b"])?;
        Ok(RunStep {
            logits,
            state: s,
            ctx: c,
            alpha,
        })
    }

    /// Rewind the decoder track to the initial (state, ctx); the encoder and
    /// any nodes already built stay in place. Lets one graph hold several
    /// decoding branches (e.g. a sampled-prefix pass plus a teacher-forced
    /// pass over the same input).
    pub fn reset_decoder(&mut self) {
        self.state = self.start_state;
        self.ctx = self.start_ctx;
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.g.value(id)
    }

    pub fn annotation_vectors(&self) -> Vec<Tensor> {
        let h = self.g.value(self.hmat);
        let cols = h.cols();
        (0..h.rows())
            .map(|j| {
                Tensor::vector(h.data()[j * cols..(j + 1) * cols].to_vec()).expect("finite")
            })
            .collect()
    }
}

fn gru_step(
    g: &mut Graph,
    ids: &BTreeMap<String, NodeId>,
    prefix: &str,
    x: NodeId,
    s: NodeId,
) -> numcore::Result<NodeId> {
    let gate = |g: &mut Graph, tag: &str, hs: NodeId| -> numcore::Result<NodeId> {
        let wx = g.matvec(ids[&format!("{prefix}.w{tag}")], x)?;
        let us = g.matvec(ids[&format!("{prefix}.u{tag}")], hs)?;
        let sum = g.add(wx, us)?;
        g.add(sum, ids[&format!("{prefix}.b{tag}")])
    };
    let z = gate(g, "z", s)?;
    let z = g.sigmoid(z)?;
    let r = gate(g, "r", s)?;
    let r = g.sigmoid(r)?;
    let rs = g.mul(r, s)?;
    let h = gate(g, "h", rs)?;
    let h = g.tanh(h)?;
    // s' = (1 - z) * s + z * h
    let hms = g.sub(h, s)?;
    let delta = g.mul(z, hms)?;
    g.add(s, delta)
}

/// Attention over precomputed annotations: one hidden tanh layer scores each
/// annotation against the state; softmax weights form the context.
fn attend_nodes(
    g: &mut Graph,
    ids: &BTreeMap<String, NodeId>,
    hmat: NodeId,
    uh: NodeId,
    state: NodeId,
) -> numcore::Result<(NodeId, NodeId)> {
    let ws = g.matvec(ids["attn.w"], state)?;
    let wsb = g.add(ws, ids["attn.b"])?;
    let pre = g.add_row(uh, wsb)?;
    let act = g.tanh(pre)?;
    let scores = g.matvec(act, ids["attn.v"])?;
    let alpha = g.softmax(scores)?;
    let ctx = g.rows_weighted(hmat, alpha)?;
    Ok((alpha, ctx))
}

/// Tensor-level attention over explicit annotation vectors.
pub(super) fn attend_tensors(
    net: &SeqNet,
    state: &Tensor,
    annotations: &[Tensor],
) -> Result<(Tensor, Tensor)> {
    if annotations.is_empty() {
        return Err(SeqError::Data("attend over empty annotations".into()));
    }
    let mut g = Graph::new();
    let mut ids = BTreeMap::new();
    for name in ["attn.w", "attn.u", "attn.b", "attn.v"] {
        ids.insert(name.to_string(), g.leaf(name, net.params[name].clone(), false));
    }
    let rows: Vec<NodeId> = annotations.iter().map(|a| g.constant(a.clone())).collect();
    let hmat = g.stack(&rows)?;
    let uh = g.matmul(hmat, ids["attn.u"])?;
    let s = g.constant(state.clone());
    let (alpha, ctx) = attend_nodes(&mut g, &ids, hmat, uh, s)?;
    Ok((g.value(alpha).clone(), g.value(ctx).clone()))
}

/// Tensor-level decoder step used by the step-contract tests; rebuilds a
/// small graph around the given state, context, and annotation vectors.
pub(super) fn step_tensors(
    net: &SeqNet,
    annotations: &[Tensor],
    state: &Tensor,
    ctx: &Tensor,
    y_prev: TokenId,
) -> Result<(Vec<f64>, Tensor, Tensor)> {
    let mut g = Graph::new();
    let mut ids = BTreeMap::new();
    for (name, value) in &net.params {
        ids.insert(name.clone(), g.leaf(name.clone(), value.clone(), false));
    }
    let rows: Vec<NodeId> = annotations.iter().map(|a| g.constant(a.clone())).collect();
    let hmat = g.stack(&rows)?;
    let uh = g.matmul(hmat, ids["attn.u"])?;
    let s_prev = g.constant(state.clone());
    let c_prev = g.constant(ctx.clone());
    let e = g.row(ids["emb_dec"], y_prev)?;
    let x = g.concat(&[e, c_prev])?;
    let s = gru_step(&mut g, &ids, "dec", x, s_prev)?;
    let (_, c) = attend_nodes(&mut g, &ids, hmat, uh, s)?;
    let sc = g.concat(&[s, c])?;
    let wo = g.matvec(ids["out.w"], sc)?;
    let logits = g.add(wo, ids["out.b"])?;
    let dist = g.softmax(logits)?;
    Ok((
        g.value(dist).data().to_vec(),
        g.value(s).clone(),
        g.value(c).clone(),
    ))
}
