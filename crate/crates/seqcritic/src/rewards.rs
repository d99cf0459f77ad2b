//! Task scores and per-step reward decomposition.
//!
//! Two returns are supported: negated per-sentence character error rate and
//! a smoothed, reference-length-scaled sentence BLEU. Rewards for a sampled
//! sequence are the differences of consecutive prefix scores (potential-based
//! shaping); the pre-emission empty prefix scores 0 by convention, so the
//! rewards always telescope to the full-sequence return.

use std::collections::HashMap;

use crate::error::{Result, SeqError};
use crate::vocab::TokenId;

/// Minimal edit distance with unit insert/delete/substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Corpus-level character error rate: total edit distance over total
/// reference length. Not the mean of per-sentence rates.
pub fn corpus_cer(predictions: &[Vec<TokenId>], references: &[Vec<TokenId>]) -> Result<f64> {
    if predictions.len() != references.len() {
        return Err(SeqError::Eval(format!(
            "{} predictions vs {} references",
            predictions.len(),
            references.len()
        )));
    }
    let total_ref: usize = references.iter().map(Vec::len).sum();
    if total_ref == 0 {
        return Err(SeqError::Eval("total reference length is zero".into()));
    }
    let total_dist: usize = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| levenshtein(p, r))
        .sum();
    Ok(total_dist as f64 / total_ref as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    NegCer,
    SmoothedBleu,
}

impl ScoreKind {
    pub fn parse(s: &str) -> Option<ScoreKind> {
        match s {
            "neg-cer" => Some(ScoreKind::NegCer),
            "smoothed-bleu" => Some(ScoreKind::SmoothedBleu),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::NegCer => "neg-cer",
            ScoreKind::SmoothedBleu => "smoothed-bleu",
        }
    }
}

/// Deterministic per-sentence return R(prediction, reference).
#[derive(Debug, Clone)]
pub struct ScoreFunction {
    pub kind: ScoreKind,
    /// Maximum n-gram order for BLEU.
    pub max_order: usize,
    /// Apply the brevity penalty inside the smoothed BLEU.
    pub brevity_penalty: bool,
}

impl ScoreFunction {
    pub fn neg_cer() -> Self {
        ScoreFunction {
            kind: ScoreKind::NegCer,
            max_order: 4,
            brevity_penalty: true,
        }
    }

    pub fn smoothed_bleu() -> Self {
        ScoreFunction {
            kind: ScoreKind::SmoothedBleu,
            max_order: 4,
            brevity_penalty: true,
        }
    }

    pub fn of_kind(kind: ScoreKind) -> Self {
        match kind {
            ScoreKind::NegCer => ScoreFunction::neg_cer(),
            ScoreKind::SmoothedBleu => ScoreFunction::smoothed_bleu(),
        }
    }

    /// R(prediction, reference). The reference must be non-empty.
    pub fn score(&self, prediction: &[TokenId], reference: &[TokenId]) -> f64 {
        match self.kind {
            ScoreKind::NegCer => {
                -(levenshtein(prediction, reference) as f64) / reference.len() as f64
            }
            ScoreKind::SmoothedBleu => self.smoothed_bleu_score(prediction, reference),
        }
    }

    /// |Y| * BP * (prod_n (m_n+1)/(c_n+1))^(1/N) with clipped matches m_n,
    /// candidate counts c_n, BP = min(1, exp(1 - |Y|/|Yhat|)). Empty
    /// predictions score 0. Orders always run to `max_order`, also for
    /// references shorter than that.
    fn smoothed_bleu_score(&self, prediction: &[TokenId], reference: &[TokenId]) -> f64 {
        if prediction.is_empty() {
            return 0.0;
        }
        let mut log_prec = 0.0;
        for n in 1..=self.max_order {
            let c = prediction.len().saturating_sub(n - 1);
            let m = clipped_matches(prediction, reference, n);
            log_prec += (((m + 1) as f64) / ((c + 1) as f64)).ln();
        }
        let geo = (log_prec / self.max_order as f64).exp();
        let bp = if self.brevity_penalty {
            (1.0 - reference.len() as f64 / prediction.len() as f64)
                .exp()
                .min(1.0)
        } else {
            1.0
        };
        reference.len() as f64 * bp * geo
    }

    /// Loose upper bound on |R| for predictions up to `max_pred_len` against
    /// references up to `max_ref_len`; used by the divergence guard.
    pub fn max_abs_return(&self, max_pred_len: usize, max_ref_len: usize) -> f64 {
        match self.kind {
            // |R| = lev/|Y| <= max(|Yhat|, |Y|) for |Y| >= 1
            ScoreKind::NegCer => max_pred_len.max(max_ref_len) as f64,
            ScoreKind::SmoothedBleu => max_ref_len as f64,
        }
    }
}

fn clipped_matches(prediction: &[TokenId], reference: &[TokenId], n: usize) -> usize {
    if prediction.len() < n || reference.len() < n {
        return 0;
    }
    let mut ref_counts: HashMap<&[TokenId], usize> = HashMap::new();
    for w in reference.windows(n) {
        *ref_counts.entry(w).or_insert(0) += 1;
    }
    let mut matches = 0;
    for w in prediction.windows(n) {
        if let Some(c) = ref_counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                matches += 1;
            }
        }
    }
    matches
}

/// Per-step rewards r_1..r_T for an emitted sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSequence {
    pub rewards: Vec<f64>,
}

impl RewardSequence {
    pub fn total(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Decompose the return over the steps of `emitted` (which may end with the
/// end-of-sequence token; pass it as `eos` so prefix scoring ignores it).
///
/// Shaped: r_t = R(prefix_t) - R(prefix_{t-1}) with the pre-emission prefix
/// scoring 0 by convention. Terminal-only: all reward arrives at the last
/// step. Both decompositions sum to R(emitted content) exactly.
pub fn shape_rewards(
    score: &ScoreFunction,
    emitted: &[TokenId],
    reference: &[TokenId],
    eos: TokenId,
    shaped: bool,
) -> RewardSequence {
    let steps = emitted.len();
    if steps == 0 {
        return RewardSequence { rewards: vec![] };
    }
    let content: Vec<TokenId> = emitted.iter().copied().filter(|&t| t != eos).collect();
    if !shaped {
        let mut rewards = vec![0.0; steps];
        rewards[steps - 1] = score.score(&content, reference);
        return RewardSequence { rewards };
    }
    let mut rewards = Vec::with_capacity(steps);
    let mut prev = 0.0;
    let mut content_len = 0usize;
    for &tok in emitted {
        if tok != eos {
            content_len += 1;
        }
        let s = score.score(&content[..content_len], reference);
        rewards.push(s - prev);
        prev = s;
    }
    RewardSequence { rewards }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(s: &str) -> Vec<TokenId> {
        s.bytes().map(|b| b as usize).collect()
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein::<usize>(&[], &ids("abc")), 3);
        assert_eq!(levenshtein(&ids("abc"), &ids("abc")), 0);
        assert_eq!(levenshtein(&ids("kitten"), &ids("sitting")), 3);
    }

    #[test]
    fn corpus_cer_cases() {
        let refs = vec![ids("abc")];
        assert_eq!(corpus_cer(&refs, &refs).unwrap(), 0.0);
        let preds = vec![ids("abd")];
        assert!((corpus_cer(&preds, &refs).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(corpus_cer(&[vec![]], &[vec![]]).is_err());
    }

    #[test]
    fn corpus_cer_is_not_mean_of_sentence_cers() {
        // distances 1 and 2 against references of length 2 and 8
        let refs = vec![ids("ab"), ids("abcdefgh")];
        let preds = vec![ids("aa"), ids("abcdefxx")];
        let pooled = corpus_cer(&preds, &refs).unwrap();
        assert!((pooled - 3.0 / 10.0).abs() < 1e-15);
        let mean = (1.0 / 2.0 + 2.0 / 8.0) / 2.0;
        assert!((pooled - mean).abs() > 0.05);
    }

    #[test]
    fn neg_cer_return() {
        let f = ScoreFunction::neg_cer();
        assert!((f.score(&ids("abc"), &ids("abd")) + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.score(&ids("abc"), &ids("abc")), 0.0);
    }

    #[test]
    fn smoothed_bleu_perfect_match_scores_reference_length() {
        let f = ScoreFunction::smoothed_bleu();
        let y = ids("wxyz");
        assert!((f.score(&y, &y) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_bleu_hand_case() {
        // candidate a b c e vs reference a b c d:
        // precisions (3+1)/(4+1), (2+1)/(3+1), (1+1)/(2+1), (0+1)/(1+1)
        let f = ScoreFunction::smoothed_bleu();
        let got = f.score(&ids("abce"), &ids("abcd"));
        let expect = 4.0 * (4.0 / 5.0 * 3.0 / 4.0 * 2.0 / 3.0 * 1.0 / 2.0f64).powf(0.25);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!((got - 2.675).abs() < 1e-3);
    }

    #[test]
    fn smoothed_bleu_empty_prediction_is_zero() {
        let f = ScoreFunction::smoothed_bleu();
        assert_eq!(f.score(&[], &ids("abcd")), 0.0);
    }

    #[test]
    fn shaped_rewards_telescope() {
        // hand case from prefix scores (0.2, 0.5, 0.4)
        let rewards = [0.2, 0.5 - 0.2, 0.4 - 0.5];
        assert!((rewards.iter().sum::<f64>() - 0.4).abs() < 1e-15);

        let f = ScoreFunction::neg_cer();
        let (y, pred) = (ids("abc"), ids("axc"));
        let shaped = shape_rewards(&f, &pred, &y, usize::MAX, true);
        assert!((shaped.total() - f.score(&pred, &y)).abs() < 1e-12);
        let terminal = shape_rewards(&f, &pred, &y, usize::MAX, false);
        assert_eq!(terminal.rewards[0], 0.0);
        assert_eq!(terminal.rewards[1], 0.0);
        assert!((terminal.total() - shaped.total()).abs() < 1e-12);
    }

    #[test]
    fn eos_step_reward_handles_empty_content() {
        let f = ScoreFunction::neg_cer();
        let eos = 999;
        // emitting only eos scores the empty prediction: -|Y|/|Y| = -1
        let r = shape_rewards(&f, &[eos], &ids("ab"), eos, true);
        assert_eq!(r.rewards, vec![-1.0]);
        // trailing eos adds a zero-reward step after non-empty content
        let r = shape_rewards(&f, &[ids("ab")[0], ids("ab")[1], eos], &ids("ab"), eos, true);
        assert_eq!(*r.rewards.last().unwrap(), 0.0);
        assert!((r.total() - 0.0).abs() < 1e-15);
    }
}
