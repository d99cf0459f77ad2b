//! Greedy and beam-search decoding.
//!
//! Beam search prunes per step by accumulated log-probability; the length
//! penalty (rho per output token, end-of-sequence excluded) enters only in
//! the final ranking of finished hypotheses, where the lowest penalized
//! negative log-likelihood wins. Hypotheses that emit eos move to a done
//! pool and are never extended; the search stops once no live hypothesis
//! can still beat the best finished one.

use numcore::{log_softmax_stable, NodeId};

use crate::error::Result;
use crate::model::{ActorModel, SeqRun};
use crate::trajectory::default_max_len;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize, rho: f64 },
}

impl DecodeMode {
    pub fn describe(&self) -> String {
        match self {
            DecodeMode::Greedy => "greedy".into(),
            DecodeMode::Beam { width, rho } => format!("beam{{width={width},rho={rho}}}"),
        }
    }
}

pub fn decode(
    actor: &ActorModel,
    x: &[TokenId],
    eos: TokenId,
    mode: DecodeMode,
    max_len: Option<usize>,
) -> Result<Vec<TokenId>> {
    let max_len = max_len.unwrap_or_else(|| default_max_len(x.len()));
    match mode {
        DecodeMode::Greedy => greedy_decode(actor, x, eos, max_len),
        DecodeMode::Beam { width, rho } => beam_decode(actor, x, eos, width, max_len, rho),
    }
}

/// Emit argmax tokens until eos or `max_len`; ties break toward the lowest
/// token id. The result never contains eos.
pub fn greedy_decode(
    actor: &ActorModel,
    x: &[TokenId],
    eos: TokenId,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    let mut run = SeqRun::begin(&actor.net, x, false)?;
    let mut prev = actor.cfg().bos();
    let mut out = Vec::new();
    for _ in 0..max_len {
        let step = run.step(prev, None)?;
        let logits = run.value(step.logits).data();
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        if best == eos {
            break;
        }
        out.push(best);
        prev = best;
    }
    Ok(out)
}

struct Hypothesis {
    tokens: Vec<TokenId>,
    nll: f64,
    state: NodeId,
    ctx: NodeId,
    prev: TokenId,
}

/// Finished candidate: content tokens and total negative log-likelihood
/// (including the eos emission when one was produced).
#[derive(Debug, Clone)]
struct Finished {
    tokens: Vec<TokenId>,
    nll: f64,
}

impl Finished {
    fn penalized(&self, rho: f64) -> f64 {
        self.nll - rho * self.tokens.len() as f64
    }
}

pub fn beam_decode(
    actor: &ActorModel,
    x: &[TokenId],
    eos: TokenId,
    width: usize,
    max_len: usize,
    rho: f64,
) -> Result<Vec<TokenId>> {
    assert!(width >= 1, "beam width must be at least 1");
    let mut run = SeqRun::begin(&actor.net, x, false)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        nll: 0.0,
        state: run.state,
        ctx: run.ctx,
        prev: actor.cfg().bos(),
    }];
    let mut done: Vec<Finished> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // (total nll, parent index, token, state, ctx)
        let mut candidates: Vec<(f64, usize, TokenId, NodeId, NodeId)> = Vec::new();
        for (idx, h) in live.iter().enumerate() {
            let step = run.step_from(h.state, h.ctx, h.prev, None)?;
            let logp = log_softmax_stable(run.value(step.logits).data());
            for (tok, lp) in logp.iter().enumerate() {
                candidates.push((h.nll - lp, idx, tok, step.state, step.ctx));
            }
        }
        candidates.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.2.cmp(&b.2))
                .then(a.1.cmp(&b.1))
        });
        candidates.truncate(width);

        let mut next = Vec::with_capacity(width);
        for (nll, parent, tok, state, ctx) in candidates {
            let mut tokens = live[parent].tokens.clone();
            if tok == eos {
                done.push(Finished { tokens, nll });
            } else {
                tokens.push(tok);
                next.push(Hypothesis {
                    tokens,
                    nll,
                    state,
                    ctx,
                    prev: tok,
                });
            }
        }
        live = next;

        // A live hypothesis can reach at best nll - rho*max_len; drop the
        // search once even that cannot beat the best finished score.
        if let Some(best) = done
            .iter()
            .map(|f| f.penalized(rho))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            live.retain(|h| h.nll - rho * max_len as f64 <= best);
        }
    }

    // hypotheses cut at max_len compete as-is (no eos factor)
    for h in live {
        done.push(Finished {
            tokens: h.tokens,
            nll: h.nll,
        });
    }
    let best = done
        .into_iter()
        .min_by(|a, b| {
            a.penalized(rho)
                .partial_cmp(&b.penalized(rho))
                .unwrap()
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
        .expect("beam always produces at least one candidate");
    Ok(best.tokens)
}
