//! Critic regression targets.

/// Temporal-difference targets: q_t = r_t + sum_a p'(a|prefix_t) Qhat'(a; prefix_t),
/// bootstrapping with the sampling policy's next-step distribution and the
/// target critic. The final step gets no bootstrap (the episode is over
/// after eos or the length cut), so q_T = r_T.
///
/// `dists[t]` is the distribution step t+1 was sampled from (so `dists[t+1]`
/// is p' after consuming t+1 tokens) and `target_values[k]` holds the target
/// critic's values after consuming k tokens.
pub fn td_targets(rewards: &[f64], dists: &[Vec<f64>], target_values: &[Vec<f64>]) -> Vec<f64> {
    let t_max = rewards.len();
    let mut q = vec![0.0; t_max];
    if t_max == 0 {
        return q;
    }
    q[t_max - 1] = rewards[t_max - 1];
    for t in 0..t_max - 1 {
        let boot: f64 = dists[t + 1]
            .iter()
            .zip(&target_values[t + 1])
            .map(|(p, v)| p * v)
            .sum();
        q[t] = rewards[t] + boot;
    }
    q
}

/// Monte-Carlo targets: q_t = sum_{tau >= t} r_tau.
pub fn mc_targets(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc += r;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_target_hand_case() {
        // r_t = 0.5, p' = (0.5, 0.5), Qhat' = (1.0, 3.0) -> 2.5
        let rewards = vec![0.5, 0.0];
        let dists = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let target_values = vec![vec![0.0, 0.0], vec![1.0, 3.0]];
        let q = td_targets(&rewards, &dists, &target_values);
        assert!((q[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn terminal_step_gets_no_bootstrap() {
        let rewards = vec![0.1, -0.7];
        let dists = vec![vec![1.0], vec![1.0]];
        let target_values = vec![vec![100.0], vec![100.0]];
        let q = td_targets(&rewards, &dists, &target_values);
        assert_eq!(q[1], -0.7);
    }

    #[test]
    fn mc_targets_are_suffix_sums() {
        let q = mc_targets(&[0.2, 0.3, -0.1]);
        for (a, b) in q.iter().zip([0.4, 0.2, -0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        // terminal-only reward: all targets equal the return
        let q = mc_targets(&[0.0, 0.0, 1.5]);
        assert!(q.iter().all(|v| (v - 1.5).abs() < 1e-15));
    }
}
