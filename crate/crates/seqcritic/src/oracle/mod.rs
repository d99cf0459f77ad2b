//! Brute-force verification engine: exact values, the policy-gradient
//! identity, and sampling statistics for every estimator, on tasks small
//! enough to enumerate completely.

mod suites;

pub use suites::{run_suites, CheckResult, OracleReport};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use numcore::softmax_stable;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SeqError};
use crate::model::{ActorModel, SeqRun};
use crate::rng::{sample_index, stream_rng};
use crate::vocab::TokenId;

const MAX_ENUM_STATES: usize = 1_000_000;

/// Anything that yields a next-token distribution for a content prefix.
pub trait PrefixPolicy {
    fn n_actions(&self) -> usize;
    fn dist(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Episode structure plus the prefix score function R(content).
///
/// Episodes end when the stop action is taken or `max_len` tokens have been
/// emitted. Shaped rewards are consecutive prefix-score differences with the
/// pre-emission prefix scoring 0; terminal-only rewards award the final
/// content score at the last step.
pub struct EnumSpec<'a> {
    pub max_len: usize,
    pub stop: Option<usize>,
    pub shaped: bool,
    pub score: &'a dyn Fn(&[usize]) -> f64,
}

impl EnumSpec<'_> {
    fn step_reward(&self, before: f64, content_after: &[usize], ends: bool) -> f64 {
        if self.shaped {
            (self.score)(content_after) - before
        } else if ends {
            (self.score)(content_after)
        } else {
            0.0
        }
    }
}

/// Exact V(prefix) and Q(a; prefix) for every reachable decision prefix.
#[derive(Debug, Clone, Default)]
pub struct ExactValues {
    pub v: BTreeMap<Vec<usize>, f64>,
    pub q: BTreeMap<Vec<usize>, Vec<f64>>,
}

impl ExactValues {
    pub fn v_empty(&self) -> f64 {
        self.v[&Vec::new()]
    }
}

/// Exact expectations by full enumeration, weighted by policy probabilities.
pub fn enumerate_values(policy: &dyn PrefixPolicy, spec: &EnumSpec) -> Result<ExactValues> {
    check_enumerable(policy.n_actions(), spec)?;
    let mut out = ExactValues::default();
    let mut prefix = Vec::new();
    fill_values(policy, spec, &mut prefix, &mut out)?;
    Ok(out)
}

fn check_enumerable(n_actions: usize, spec: &EnumSpec) -> Result<()> {
    let content_actions = n_actions - usize::from(spec.stop.is_some());
    let states = (content_actions.max(1) as f64).powi(spec.max_len as i32);
    if states > MAX_ENUM_STATES as f64 {
        return Err(SeqError::Oracle(format!(
            "{content_actions}^{} sequences exceed the enumeration bound of {MAX_ENUM_STATES}",
            spec.max_len
        )));
    }
    Ok(())
}

fn fill_values(
    policy: &dyn PrefixPolicy,
    spec: &EnumSpec,
    prefix: &mut Vec<usize>,
    out: &mut ExactValues,
) -> Result<f64> {
    let dist = policy.dist(prefix)?;
    let before = if prefix.is_empty() {
        0.0
    } else {
        (spec.score)(prefix)
    };
    let n = policy.n_actions();
    let mut q = vec![0.0; n];
    let mut v = 0.0;
    for a in 0..n {
        let qa = if Some(a) == spec.stop {
            spec.step_reward(before, prefix, true)
        } else {
            prefix.push(a);
            let ends = prefix.len() == spec.max_len;
            let r = spec.step_reward(before, prefix, ends);
            let qa = if ends {
                r
            } else {
                r + fill_values(policy, spec, prefix, out)?
            };
            prefix.pop();
            qa
        };
        q[a] = qa;
        v += dist[a] * qa;
    }
    out.q.insert(prefix.clone(), q);
    out.v.insert(prefix.clone(), v);
    Ok(v)
}

/// Expected return of the policy from scratch (V of the empty prefix).
pub fn enumerated_v(policy: &dyn PrefixPolicy, spec: &EnumSpec) -> Result<f64> {
    check_enumerable(policy.n_actions(), spec)?;
    v_only(policy, spec, &mut Vec::new())
}

fn v_only(policy: &dyn PrefixPolicy, spec: &EnumSpec, prefix: &mut Vec<usize>) -> Result<f64> {
    let dist = policy.dist(prefix)?;
    let before = if prefix.is_empty() {
        0.0
    } else {
        (spec.score)(prefix)
    };
    let mut v = 0.0;
    for (a, &pa) in dist.iter().enumerate() {
        if Some(a) == spec.stop {
            v += pa * spec.step_reward(before, prefix, true);
            continue;
        }
        prefix.push(a);
        let ends = prefix.len() == spec.max_len;
        let mut qa = spec.step_reward(before, prefix, ends);
        if !ends {
            qa += v_only(policy, spec, prefix)?;
        }
        prefix.pop();
        v += pa * qa;
    }
    Ok(v)
}

/// Softmax policy with one logit per (decision prefix, action).
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    pub n_actions: usize,
    pub max_len: usize,
    pub stop: Option<usize>,
    prefixes: Vec<Vec<usize>>,
    index: BTreeMap<Vec<usize>, usize>,
    pub logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_actions: usize, max_len: usize, stop: Option<usize>) -> TabularPolicy {
        let mut prefixes = vec![Vec::new()];
        let content: Vec<usize> = (0..n_actions).filter(|&a| Some(a) != stop).collect();
        let mut frontier = vec![Vec::new()];
        for _ in 1..max_len {
            let mut next = Vec::new();
            for p in &frontier {
                for &a in &content {
                    let mut q = p.clone();
                    q.push(a);
                    next.push(q);
                }
            }
            prefixes.extend(next.iter().cloned());
            frontier = next;
        }
        let index = prefixes
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let logits = vec![0.0; prefixes.len() * n_actions];
        TabularPolicy {
            n_actions,
            max_len,
            stop,
            prefixes,
            index,
            logits,
        }
    }

    pub fn random(
        n_actions: usize,
        max_len: usize,
        stop: Option<usize>,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> TabularPolicy {
        let mut p = TabularPolicy::new(n_actions, max_len, stop);
        for l in &mut p.logits {
            *l = rng.random_range(-scale..scale);
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    pub fn n_prefixes(&self) -> usize {
        self.prefixes.len()
    }

    pub fn prefix_index(&self, prefix: &[usize]) -> usize {
        self.index[prefix]
    }

    fn row(&self, prefix: &[usize]) -> &[f64] {
        let i = self.index[prefix];
        &self.logits[i * self.n_actions..(i + 1) * self.n_actions]
    }
}

impl PrefixPolicy for TabularPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn dist(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(softmax_stable(self.row(prefix)))
    }
}

/// A trained actor viewed as a prefix policy for a fixed input X.
pub struct NeuralPolicy<'a> {
    pub actor: &'a ActorModel,
    pub x: Vec<TokenId>,
}

impl PrefixPolicy for NeuralPolicy<'_> {
    fn n_actions(&self) -> usize {
        self.actor.cfg().vocab_size
    }

    fn dist(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut run = SeqRun::begin(&self.actor.net, &self.x, false)?;
        let mut prev = self.actor.cfg().bos();
        let mut logits = {
            let step = run.step(prev, None)?;
            run.value(step.logits).data().to_vec()
        };
        for &t in prefix {
            prev = t;
            let step = run.step(prev, None)?;
            logits = run.value(step.logits).data().to_vec();
        }
        Ok(softmax_stable(&logits))
    }
}

/// Right-hand side of the policy-gradient identity, evaluated exactly:
/// sum over reachable prefixes of p(prefix) sum_a dp(a|prefix)/dtheta Q(a; prefix).
pub fn exact_policy_gradient(policy: &TabularPolicy, spec: &EnumSpec) -> Result<Vec<f64>> {
    let exact = enumerate_values(policy, spec)?;
    let mut grad = vec![0.0; policy.n_params()];
    let mut stack = vec![(Vec::new(), 1.0f64)];
    while let Some((prefix, w)) = stack.pop() {
        let dist = policy.dist(&prefix)?;
        let q = &exact.q[&prefix];
        let vp = exact.v[&prefix];
        let base = policy.prefix_index(&prefix) * policy.n_actions;
        for b in 0..policy.n_actions {
            // sum_a dp(a)/dlogit_b * Q(a) = p_b (Q_b - V)
            grad[base + b] += w * dist[b] * (q[b] - vp);
        }
        if prefix.len() + 1 < policy.max_len {
            for a in 0..policy.n_actions {
                if Some(a) == policy.stop {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(a);
                stack.push((next, w * dist[a]));
            }
        }
    }
    Ok(grad)
}

/// Central finite differences of the enumerated expected return with respect
/// to every tabular logit.
pub fn finite_difference_gradient(
    policy: &TabularPolicy,
    spec: &EnumSpec,
    h: f64,
) -> Result<Vec<f64>> {
    let mut p = policy.clone();
    let mut grad = vec![0.0; p.n_params()];
    for i in 0..grad.len() {
        let orig = p.logits[i];
        p.logits[i] = orig + h;
        let up = enumerated_v(&p, spec)?;
        p.logits[i] = orig - h;
        let down = enumerated_v(&p, spec)?;
        p.logits[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Which gradient estimator to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Sum over all actions of dp * Qhat along the sampled trajectory.
    ActorCritic,
    /// dlogp of the taken action times return-to-go, zero baseline.
    Reinforce,
    /// As Reinforce, with the expected critic value as the baseline.
    ReinforceCritic,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::ActorCritic => "ac",
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::ReinforceCritic => "reinforce-critic",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BiasReport {
    pub estimator: String,
    pub samples: usize,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub exact: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    pub z_threshold: f64,
    pub pass: bool,
    /// Sum over coordinates of the per-coordinate sample variance.
    pub total_variance: f64,
}

/// Monte-Carlo mean and spread of one estimator against the exact gradient.
/// `q_table` supplies Qhat(a; prefix); pass the exact tables or a trained
/// critic's predictions.
pub fn estimator_bias_report(
    policy: &TabularPolicy,
    spec: &EnumSpec,
    kind: EstimatorKind,
    q_table: &BTreeMap<Vec<usize>, Vec<f64>>,
    samples: usize,
    seed: u64,
) -> Result<BiasReport> {
    let exact = exact_policy_gradient(policy, spec)?;
    let dims = exact.len();
    let mut rng = stream_rng(seed, &format!("oracle.estimator.{}", kind.name()));
    let mut mean = vec![0.0; dims];
    let mut m2 = vec![0.0; dims];
    let mut sample = vec![0.0; dims];

    for k in 1..=samples {
        sample.iter_mut().for_each(|v| *v = 0.0);
        accumulate_sample(policy, spec, kind, q_table, &mut rng, &mut sample)?;
        // Welford update
        for i in 0..dims {
            let delta = sample[i] - mean[i];
            mean[i] += delta / k as f64;
            m2[i] += delta * (sample[i] - mean[i]);
        }
    }
    let var: Vec<f64> = m2
        .iter()
        .map(|&m| m / (samples.saturating_sub(1).max(1)) as f64)
        .collect();
    let std_err: Vec<f64> = var.iter().map(|v| (v / samples as f64).sqrt()).collect();
    let z_scores: Vec<f64> = (0..dims)
        .map(|i| {
            let se = std_err[i].max(1e-300);
            (mean[i] - exact[i]) / se
        })
        .collect();
    let max_abs_z = z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let z_threshold = bonferroni_z(dims);
    Ok(BiasReport {
        estimator: kind.name().into(),
        samples,
        pass: max_abs_z < z_threshold,
        total_variance: var.iter().sum(),
        mean,
        std_err,
        exact,
        z_scores,
        max_abs_z,
        z_threshold,
    })
}

fn accumulate_sample(
    policy: &TabularPolicy,
    spec: &EnumSpec,
    kind: EstimatorKind,
    q_table: &BTreeMap<Vec<usize>, Vec<f64>>,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) -> Result<()> {
    // sample one episode, remembering each decision point
    let n = policy.n_actions;
    let mut prefix: Vec<usize> = Vec::new();
    let mut visited: Vec<(Vec<usize>, usize, f64)> = Vec::new(); // (prefix, action, reward)
    loop {
        let dist = policy.dist(&prefix)?;
        let a = sample_index(&dist, rng.random::<f64>());
        let before = if prefix.is_empty() {
            0.0
        } else {
            (spec.score)(&prefix)
        };
        let (reward, ends) = if Some(a) == spec.stop {
            (spec.step_reward(before, &prefix, true), true)
        } else {
            prefix.push(a);
            let ends = prefix.len() == spec.max_len;
            (spec.step_reward(before, &prefix, ends), ends)
        };
        let decision_prefix = if Some(a) == spec.stop {
            prefix.clone()
        } else {
            prefix[..prefix.len() - 1].to_vec()
        };
        visited.push((decision_prefix, a, reward));
        if ends {
            break;
        }
    }

    match kind {
        EstimatorKind::ActorCritic => {
            for (p, _, _) in &visited {
                let dist = policy.dist(p)?;
                let q = &q_table[p];
                let vhat: f64 = dist.iter().zip(q).map(|(d, q)| d * q).sum();
                let base = policy.prefix_index(p) * n;
                for b in 0..n {
                    out[base + b] += dist[b] * (q[b] - vhat);
                }
            }
        }
        EstimatorKind::Reinforce | EstimatorKind::ReinforceCritic => {
            let mut suffix = 0.0;
            let mut returns = vec![0.0; visited.len()];
            for (i, (_, _, r)) in visited.iter().enumerate().rev() {
                suffix += r;
                returns[i] = suffix;
            }
            for ((p, a, _), g) in visited.iter().zip(returns) {
                let dist = policy.dist(p)?;
                let baseline = match kind {
                    EstimatorKind::ReinforceCritic => {
                        let q = &q_table[p];
                        dist.iter().zip(q).map(|(d, q)| d * q).sum()
                    }
                    _ => 0.0,
                };
                let w = g - baseline;
                let base = policy.prefix_index(p) * n;
                for b in 0..n {
                    let dlogp = f64::from(b == *a) - dist[b];
                    out[base + b] += dlogp * w;
                }
            }
        }
    }
    Ok(())
}

/// Two-sided 3-sigma threshold, Bonferroni-corrected across `dims`
/// coordinates.
pub fn bonferroni_z(dims: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let base_alpha = 2.0 * (1.0 - normal.cdf(3.0));
    let alpha = base_alpha / dims.max(1) as f64;
    normal.inverse_cdf(1.0 - alpha / 2.0)
}
