//! Sampling trajectories from a policy network.

use numcore::{log_softmax_stable, softmax_stable, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ActorModel, SeqRun};
use crate::rng::sample_index;
use crate::vocab::TokenId;

/// Default decode/sample length bound for an input of length `x_len`.
pub fn default_max_len(x_len: usize) -> usize {
    2 * x_len + 10
}

/// One sampled sequence with everything later stages need. Steps are
/// 1-based in the math; vectors here are 0-indexed, so index t-1 holds step
/// t. `tokens` includes the final end-of-sequence token when one was drawn;
/// that emission counts as a step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<TokenId>,
    pub y_ref: Vec<TokenId>,
    /// Emitted tokens, possibly ending with eos.
    pub tokens: Vec<TokenId>,
    pub ended_with_eos: bool,
    /// Sampling-policy distribution each token was drawn from.
    pub dists: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    /// Decoder state that produced each distribution.
    pub states: Vec<Vec<f64>>,
    /// Per-step rewards; filled by the reward stage.
    pub rewards: Vec<f64>,
    /// Live-critic value vectors; entry k holds Qhat(.; tokens[..k]).
    pub critic_values: Option<Vec<Vec<f64>>>,
    /// Target-critic value vectors, aligned like `critic_values`.
    pub target_values: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.tokens.len()
    }

    /// Content tokens: the prediction without the trailing eos.
    pub fn content(&self, eos: TokenId) -> Vec<TokenId> {
        self.tokens.iter().copied().filter(|&t| t != eos).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Draw a sequence from the policy, stopping at eos or after `max_len` steps.
pub fn sample_trajectory(
    policy: &ActorModel,
    x: &[TokenId],
    y_ref: &[TokenId],
    eos: TokenId,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let mut run = SeqRun::begin(&policy.net, x, false)?;
    let bos = policy.cfg().bos();
    let mut traj = Trajectory {
        x: x.to_vec(),
        y_ref: y_ref.to_vec(),
        tokens: Vec::new(),
        ended_with_eos: false,
        dists: Vec::new(),
        log_probs: Vec::new(),
        states: Vec::new(),
        rewards: Vec::new(),
        critic_values: None,
        target_values: None,
    };
    let mut prev = bos;
    for _ in 0..max_len {
        let step = run.step(prev, None)?;
        let logits = run.value(step.logits).data().to_vec();
        let dist = softmax_stable(&logits);
        let logp = log_softmax_stable(&logits);
        let tok = sample_index(&dist, rng.random::<f64>());
        traj.states.push(run.value(step.state).data().to_vec());
        traj.log_probs.push(logp[tok]);
        traj.dists.push(dist);
        traj.tokens.push(tok);
        if tok == eos {
            traj.ended_with_eos = true;
            break;
        }
        prev = tok;
    }
    Ok(traj)
}

/// Teacher-forced per-step log-probabilities of `y + eos` given `x`
/// (inference only; no gradients). The sum is log p(Y|X).
pub fn teacher_forced_log_probs(
    policy: &ActorModel,
    x: &[TokenId],
    y: &[TokenId],
    eos: TokenId,
) -> Result<Vec<f64>> {
    let mut run = SeqRun::begin(&policy.net, x, false)?;
    let bos = policy.cfg().bos();
    let mut prev = bos;
    let mut out = Vec::with_capacity(y.len() + 1);
    for t in 0..=y.len() {
        let step = run.step(prev, None)?;
        let logits = run.value(step.logits).data();
        let target = if t < y.len() { y[t] } else { eos };
        out.push(log_softmax_stable(logits)[target]);
        if t < y.len() {
            prev = y[t];
        }
    }
    Ok(out)
}

/// Snapshot of per-step states as tensors (used by baseline training).
pub fn state_tensors(traj: &Trajectory) -> Result<Vec<Tensor>> {
    traj.states
        .iter()
        .map(|s| Tensor::vector(s.clone()).map_err(Into::into))
        .collect()
}
