//! Held-out evaluation, critic inspection, and learning-curve extraction.

use serde::{Deserialize, Serialize};

use crate::data::Pair;
use crate::decode::{decode, DecodeMode};
use crate::error::{Result, SeqError};
use crate::metrics::MetricRecord;
use crate::model::{ActorModel, CriticModel, SeqRun};
use crate::rewards::{corpus_cer, ScoreFunction};
use crate::trajectory::default_max_len;
use crate::vocab::{TokenId, Vocab};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub split: String,
    pub decode: String,
    pub score_kind: String,
    pub examples: usize,
    pub cer: f64,
    pub mean_return: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

/// Decode every pair and aggregate corpus CER and the mean sentence return.
/// `predictions`, when given, receives one decoded sequence per input.
pub fn evaluate(
    actor: &ActorModel,
    pairs: &[Pair],
    mode: DecodeMode,
    score: &ScoreFunction,
    eos: TokenId,
    split: &str,
    mut predictions: Option<&mut Vec<Vec<TokenId>>>,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(SeqError::Eval(format!("split `{split}` is empty")));
    }
    let mut preds = Vec::with_capacity(pairs.len());
    let mut total_return = 0.0;
    for (x, y) in pairs {
        let p = decode(actor, x, eos, mode, None)?;
        total_return += score.score(&p, y);
        preds.push(p);
    }
    let refs: Vec<Vec<TokenId>> = pairs.iter().map(|(_, y)| y.clone()).collect();
    let cer = corpus_cer(&preds, &refs)?;
    let mean_return = total_return / pairs.len() as f64;
    if let Some(out) = predictions.as_deref_mut() {
        *out = preds;
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        split: split.into(),
        decode: mode.describe(),
        score_kind: score.kind.name().into(),
        examples: pairs.len(),
        cer,
        mean_return,
        checkpoint: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepInspection {
    pub step: usize,
    pub emitted: String,
    /// Top-k (token, value) by critic estimate, best first.
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticInspection {
    pub source: String,
    pub reference: String,
    pub prediction: String,
    pub steps: Vec<StepInspection>,
}

/// Greedy-decode the actor and list the critic's top-k actions at each step.
pub fn inspect_critic(
    actor: &ActorModel,
    critic: &CriticModel,
    vocab: &Vocab,
    x: &[TokenId],
    y: &[TokenId],
    top_k: usize,
) -> Result<CriticInspection> {
    let eos = vocab.eos();
    let max_len = default_max_len(x.len());

    // greedy decode, keeping the eos emission as a step
    let mut run = SeqRun::begin(&actor.net, x, false)?;
    let mut prev = actor.cfg().bos();
    let mut emitted: Vec<TokenId> = Vec::new();
    for _ in 0..max_len {
        let step = run.step(prev, None)?;
        let logits = run.value(step.logits).data();
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        emitted.push(best);
        if best == eos {
            break;
        }
        prev = best;
    }

    // critic needs aligned actor states when configured with extra inputs
    let actor_states = if critic.cfg().extra_input > 0 {
        let mut run = SeqRun::begin(&actor.net, x, false)?;
        let mut prev = actor.cfg().bos();
        let mut states = Vec::with_capacity(emitted.len());
        for &tok in &emitted {
            let step = run.step(prev, None)?;
            states.push(run.value(step.state).data().to_vec());
            prev = tok;
        }
        Some(states)
    } else {
        None
    };

    let values = critic.values(y, &emitted[..emitted.len() - 1], actor_states.as_deref())?;
    let mut steps = Vec::with_capacity(emitted.len());
    for (k, vals) in values.iter().enumerate() {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap().then(a.cmp(&b)));
        let top = order
            .into_iter()
            .take(top_k)
            .map(|a| Ok((vocab.token(a)?.to_string(), vals[a])))
            .collect::<Result<Vec<_>>>()?;
        steps.push(StepInspection {
            step: k + 1,
            emitted: vocab.token(emitted[k])?.to_string(),
            top,
        });
    }
    let content: Vec<TokenId> = emitted.iter().copied().filter(|&t| t != eos).collect();
    Ok(CriticInspection {
        source: vocab.decode(x)?,
        reference: vocab.decode(y)?,
        prediction: vocab.decode(&content)?,
        steps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSeries {
    pub split: String,
    pub points: Vec<(u64, f64)>,
}

/// Extract aligned (step, value) series for one metric, one series per split.
/// An empty split filter selects every split that logged the metric.
pub fn curves(
    records: &[MetricRecord],
    metric: &str,
    splits: &[String],
) -> Result<Vec<CurveSeries>> {
    let available: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.metric.as_str()).collect();
    if !available.contains(metric) {
        return Err(SeqError::Eval(format!(
            "unknown metric `{metric}`; available: {}",
            available.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let wanted: Vec<String> = if splits.is_empty() {
        records
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.split.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        splits.to_vec()
    };
    let mut out = Vec::new();
    for split in wanted {
        let mut points: Vec<(u64, f64)> = records
            .iter()
            .filter(|r| r.metric == metric && r.split == split)
            .map(|r| (r.step, r.value))
            .collect();
        points.sort_by_key(|p| p.0);
        out.push(CurveSeries { split, points });
    }
    Ok(out)
}

pub fn curves_csv(series: &[CurveSeries]) -> String {
    let mut out = String::from("split,step,value\n");
    for s in series {
        for (step, value) in &s.points {
            out.push_str(&format!("{},{},{}\n", s.split, step, value));
        }
    }
    out
}

/// Minimal line chart; one polyline per series.
pub fn curves_svg(series: &[CurveSeries], metric: &str) -> String {
    let (w, h, margin) = (800.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (x as f64, y)))
        .collect();
    let (x0, x1) = bounds(pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1));
    let sx = |x: f64| margin + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * margin);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{metric}</text>\n",
        w / 2.0
    );
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{m}\" y=\"{lb}\" font-size=\"10\">{x0:.0}</text>\n\
         <text x=\"{r}\" y=\"{lb}\" font-size=\"10\" text-anchor=\"end\">{x1:.0}</text>\n\
         <text x=\"5\" y=\"{b}\" font-size=\"10\">{y0:.4}</text>\n\
         <text x=\"5\" y=\"{t}\" font-size=\"10\">{y1:.4}</text>\n",
        m = margin,
        r = w - margin,
        t = margin,
        b = h - margin,
        lb = h - margin + 15.0,
    ));
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x as f64), sy(y)))
            .collect();
        let color = palette[i % palette.len()];
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            path.join(" "),
            w - margin + 5.0,
            margin + 15.0 * i as f64,
            s.split
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
