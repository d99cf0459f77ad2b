//! Machine-checkable oracle suites behind the `oracle-check` command.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::rewards::{shape_rewards, ScoreFunction};
use crate::rng::{sample_index, stream_rng};
use crate::trainer::targets::{mc_targets, td_targets};

use super::{
    enumerate_values, estimator_bias_report, exact_policy_gradient, finite_difference_gradient,
    EnumSpec, EstimatorKind, ExactValues, PrefixPolicy, TabularPolicy,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub suite: String,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    fn new(suite: &str, checks: Vec<CheckResult>) -> OracleReport {
        OracleReport {
            suite: suite.into(),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }
}

fn check(name: &str, pass: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        pass,
        detail,
    }
}

/// Deterministic score table over content prefixes, bounded to [-1, 1].
fn hashed_score(salt: u64) -> impl Fn(&[usize]) -> f64 {
    move |content: &[usize]| {
        let mut h = salt ^ 0x9e37_79b9_7f4a_7c15;
        for &t in content {
            h ^= (t as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
            h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
            h ^= h >> 27;
        }
        ((h % 2001) as f64 - 1000.0) / 1000.0
    }
}

/// Ten random tabular tasks: the exactly-evaluated policy-gradient identity
/// against central finite differences of the enumerated expected return.
pub fn eq5_suite(seed: u64, tolerance: f64) -> Result<OracleReport> {
    let mut rng = stream_rng(seed, "oracle.eq5");
    let mut checks = Vec::new();
    for case in 0..10 {
        let n_actions = 2 + (case % 2); // 2 or 3
        let max_len = 2 + (case / 5); // 2 or 3
        let stop = (case % 3 == 0).then_some(0);
        let policy = TabularPolicy::random(n_actions, max_len, stop, 1.0, &mut rng);
        let target: Vec<usize> = (0..max_len)
            .map(|_| {
                let content: Vec<usize> = (0..n_actions).filter(|&a| Some(a) != stop).collect();
                content[rng.random_range(0..content.len())]
            })
            .collect();
        let neg_cer = ScoreFunction::neg_cer();
        let hash = hashed_score(seed ^ case as u64);
        let score: Box<dyn Fn(&[usize]) -> f64> = if case % 2 == 0 {
            Box::new(move |c: &[usize]| neg_cer.score(c, &target))
        } else {
            Box::new(hash)
        };
        let spec = EnumSpec {
            max_len,
            stop,
            shaped: true,
            score: score.as_ref(),
        };
        let analytic = exact_policy_gradient(&policy, &spec)?;
        let numeric = finite_difference_gradient(&policy, &spec, 1e-5)?;
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0f64, f64::max);
        checks.push(check(
            &format!("eq5 identity, task {case} (|A|={n_actions}, len {max_len})"),
            worst <= tolerance,
            format!("max abs diff {worst:.3e} (tolerance {tolerance:.1e})"),
        ));
    }
    Ok(OracleReport::new("eq5", checks))
}

/// Bellman consistency of the enumerated tables, V = sum p*Q, and
/// exact-Q temporal-difference targets reproducing Q along sampled paths.
pub fn bellman_suite(seed: u64) -> Result<OracleReport> {
    let mut rng = stream_rng(seed, "oracle.bellman");
    let mut checks = Vec::new();
    for case in 0..4u64 {
        let n_actions = 3;
        let max_len = 3;
        let stop = Some(2);
        let policy = TabularPolicy::random(n_actions, max_len, stop, 1.0, &mut rng);
        let target = vec![0usize, 1];
        let neg_cer = ScoreFunction::neg_cer();
        let score = move |c: &[usize]| neg_cer.score(c, &target);
        let spec = EnumSpec {
            max_len,
            stop,
            shaped: true,
            score: &score,
        };
        let exact = enumerate_values(&policy, &spec)?;

        // V(prefix) = sum_a p(a|prefix) Q(a; prefix)
        let mut worst_v: f64 = 0.0;
        for (prefix, q) in &exact.q {
            let dist = policy.dist(prefix)?;
            let v: f64 = dist.iter().zip(q).map(|(d, q)| d * q).sum();
            worst_v = worst_v.max((v - exact.v[prefix]).abs());
        }
        checks.push(check(
            &format!("V = sum p*Q, task {case}"),
            worst_v <= 1e-12,
            format!("max abs diff {worst_v:.3e}"),
        ));

        // Q(a; prefix) = r(a; prefix) + sum_b p(b|prefix.a) Q(b; prefix.a)
        let mut worst_q: f64 = 0.0;
        for (prefix, q) in &exact.q {
            let before = if prefix.is_empty() {
                0.0
            } else {
                score(prefix)
            };
            for a in 0..n_actions {
                if Some(a) == spec.stop {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(a);
                if next.len() == max_len {
                    continue;
                }
                let r = score(&next) - before;
                let dist = policy.dist(&next)?;
                let boot: f64 = dist.iter().zip(&exact.q[&next]).map(|(d, q)| d * q).sum();
                worst_q = worst_q.max((q[a] - (r + boot)).abs());
            }
        }
        checks.push(check(
            &format!("Bellman recursion, task {case}"),
            worst_q <= 1e-12,
            format!("max abs diff {worst_q:.3e}"),
        ));

        // exact-Q TD targets equal exact Q along sampled trajectories
        let mut worst_td: f64 = 0.0;
        for _ in 0..50 {
            let (tokens, dists, rewards, q_along) =
                sample_episode(&policy, &spec, &exact, &mut rng)?;
            let target_values: Vec<Vec<f64>> = tokens
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    let p: Vec<usize> =
                        tokens[..k].iter().copied().filter(|&t| Some(t) != stop).collect();
                    exact.q[&p].clone()
                })
                .collect();
            let targets = td_targets(&rewards, &dists, &target_values);
            for (t, q) in targets.iter().zip(&q_along) {
                worst_td = worst_td.max((t - q).abs());
            }
        }
        checks.push(check(
            &format!("exact-Q TD targets reproduce Q, task {case}"),
            worst_td <= 1e-10,
            format!("max abs diff {worst_td:.3e}"),
        ));

    }
    let got = mc_targets(&[0.2, 0.3, -0.1]);
    checks.push(check(
        "mc targets are suffix sums",
        got.iter()
            .zip([0.4, 0.2, -0.1])
            .all(|(a, b)| (a - b).abs() < 1e-15),
        format!("{got:?}"),
    ));
    Ok(OracleReport::new("bellman", checks))
}

/// Telescoping of shaped rewards for both score kinds, and invariance of
/// V(empty) and Q gaps under shaping.
pub fn shaping_suite(seed: u64) -> Result<OracleReport> {
    let mut rng = stream_rng(seed, "oracle.shaping");
    let mut checks = Vec::new();

    let eos = 3usize;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let score = if i % 2 == 0 {
            ScoreFunction::neg_cer()
        } else {
            ScoreFunction::smoothed_bleu()
        };
        let y: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..3)).collect();
        let len = rng.random_range(1..7);
        let mut emitted: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
        if rng.random::<f64>() < 0.5 {
            emitted.push(eos);
        }
        for shaped in [true, false] {
            let r = shape_rewards(&score, &emitted, &y, eos, shaped);
            let content: Vec<usize> = emitted.iter().copied().filter(|&t| t != eos).collect();
            let want = score.score(&content, &y);
            worst = worst.max((r.total() - want).abs());
        }
    }
    checks.push(check(
        "telescoping over 1000 random trajectories, both scores",
        worst <= 1e-12,
        format!("max abs diff {worst:.3e}"),
    ));

    let policy = TabularPolicy::random(3, 3, Some(2), 1.0, &mut rng);
    let target = vec![1usize, 0];
    let neg_cer = ScoreFunction::neg_cer();
    let score = move |c: &[usize]| neg_cer.score(c, &target);
    let shaped = enumerate_values(
        &policy,
        &EnumSpec {
            max_len: 3,
            stop: Some(2),
            shaped: true,
            score: &score,
        },
    )?;
    let terminal = enumerate_values(
        &policy,
        &EnumSpec {
            max_len: 3,
            stop: Some(2),
            shaped: false,
            score: &score,
        },
    )?;
    let dv = (shaped.v_empty() - terminal.v_empty()).abs();
    checks.push(check(
        "shaping preserves V(empty)",
        dv <= 1e-12,
        format!("abs diff {dv:.3e}"),
    ));
    let mut worst_gap: f64 = 0.0;
    for (prefix, qs) in &shaped.q {
        let qt = &terminal.q[prefix];
        for a in 0..qs.len() {
            for b in 0..qs.len() {
                let gap = (qs[a] - qs[b]) - (qt[a] - qt[b]);
                worst_gap = worst_gap.max(gap.abs());
            }
        }
    }
    checks.push(check(
        "shaping preserves Q gaps between actions",
        worst_gap <= 1e-12,
        format!("max abs diff {worst_gap:.3e}"),
    ));
    Ok(OracleReport::new("shaping", checks))
}

/// Unbiasedness of REINFORCE (zero and critic baselines) and of the
/// actor-critic estimator with exact Q, plus the variance comparison.
pub fn estimator_suite(seed: u64, samples: usize) -> Result<OracleReport> {
    let mut rng = stream_rng(seed, "oracle.estimators");
    let policy = TabularPolicy::random(3, 2, Some(2), 0.8, &mut rng);
    let target = vec![1usize];
    let neg_cer = ScoreFunction::neg_cer();
    let score = move |c: &[usize]| neg_cer.score(c, &target);
    let spec = EnumSpec {
        max_len: 2,
        stop: Some(2),
        shaped: true,
        score: &score,
    };
    let exact = enumerate_values(&policy, &spec)?;
    let mut checks = Vec::new();

    let rf = estimator_bias_report(
        &policy,
        &spec,
        EstimatorKind::Reinforce,
        &exact.q,
        samples,
        seed,
    )?;
    checks.push(check(
        "REINFORCE (b=0) unbiased",
        rf.pass,
        format!("max |z| {:.2} < {:.2}", rf.max_abs_z, rf.z_threshold),
    ));
    let rfc = estimator_bias_report(
        &policy,
        &spec,
        EstimatorKind::ReinforceCritic,
        &exact.q,
        samples,
        seed,
    )?;
    checks.push(check(
        "REINFORCE (b=critic) unbiased",
        rfc.pass,
        format!("max |z| {:.2} < {:.2}", rfc.max_abs_z, rfc.z_threshold),
    ));
    let ac = estimator_bias_report(
        &policy,
        &spec,
        EstimatorKind::ActorCritic,
        &exact.q,
        samples,
        seed,
    )?;
    checks.push(check(
        "actor-critic with exact Q unbiased",
        ac.pass,
        format!("max |z| {:.2} < {:.2}", ac.max_abs_z, ac.z_threshold),
    ));
    checks.push(check(
        "variance: AC with exact Q below REINFORCE (b=0)",
        ac.total_variance < rf.total_variance,
        format!("{:.4e} vs {:.4e}", ac.total_variance, rf.total_variance),
    ));
    Ok(OracleReport::new("estimators", checks))
}

fn sample_episode(
    policy: &TabularPolicy,
    spec: &EnumSpec,
    exact: &ExactValues,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let mut prefix: Vec<usize> = Vec::new();
    let (mut tokens, mut dists, mut rewards, mut q_along) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    loop {
        let dist = policy.dist(&prefix)?;
        let a = sample_index(&dist, rng.random::<f64>());
        q_along.push(exact.q[&prefix][a]);
        dists.push(dist);
        tokens.push(a);
        let before = if prefix.is_empty() {
            0.0
        } else {
            (spec.score)(&prefix)
        };
        if Some(a) == spec.stop {
            rewards.push(spec.step_reward(before, &prefix, true));
            break;
        }
        prefix.push(a);
        let ends = prefix.len() == spec.max_len;
        rewards.push(spec.step_reward(before, &prefix, ends));
        if ends {
            break;
        }
    }
    Ok((tokens, dists, rewards, q_along))
}

/// Run the named suite ("all" for everything); used by `oracle-check`.
pub fn run_suites(suite: &str, seed: u64, samples: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    if matches!(suite, "all" | "eq5") {
        out.push(eq5_suite(seed, 1e-6)?);
    }
    if matches!(suite, "all" | "bellman") {
        out.push(bellman_suite(seed)?);
    }
    if matches!(suite, "all" | "shaping") {
        out.push(shaping_suite(seed)?);
    }
    if matches!(suite, "all" | "estimators") {
        out.push(estimator_suite(seed, samples)?);
    }
    if out.is_empty() {
        return Err(crate::error::SeqError::Oracle(format!(
            "unknown suite `{suite}` (use all, eq5, bellman, shaping, estimators)"
        )));
    }
    Ok(out)
}
