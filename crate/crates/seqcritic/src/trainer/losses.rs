//! Objective graphs for every training mode. Each builder runs the network
//! teacher-forced over the relevant tokens, assembles a scalar loss, and
//! returns its value together with the parameter gradients.

use numcore::{Gradients, NodeId, Tensor};

use crate::data::Batch;
use crate::error::Result;
use crate::model::{ActorModel, CriticModel, SeqRun};
use crate::trajectory::Trajectory;
use crate::vocab::TokenId;

/// Teacher-forced negative log-likelihood terms for y + eos; returns one
/// node per step holding -log p(target).
fn nll_terms(run: &mut SeqRun, bos: TokenId, y: &[TokenId], eos: TokenId) -> Result<Vec<NodeId>> {
    let mut prev = bos;
    let mut terms = Vec::with_capacity(y.len() + 1);
    for t in 0..=y.len() {
        let step = run.step(prev, None)?;
        let logp = run.g.log_softmax(step.logits)?;
        let target = if t < y.len() { y[t] } else { eos };
        let picked = run.g.pick(logp, target)?;
        terms.push(run.g.affine(picked, -1.0, 0.0)?);
        if t < y.len() {
            prev = y[t];
        }
    }
    Ok(terms)
}

fn sum_terms(run: &mut SeqRun, terms: &[NodeId]) -> Result<NodeId> {
    let cat = run.g.concat(terms)?;
    Ok(run.g.sum(cat)?)
}

/// Mean over the batch of per-sequence teacher-forcing losses
/// -log p(Y|X); masked (padded) positions contribute nothing.
pub fn ll_batch(actor: &ActorModel, batch: &Batch, eos: TokenId) -> Result<(f64, Gradients)> {
    let bos = actor.cfg().bos();
    let mut total_loss = 0.0;
    let mut grads = Gradients::new();
    let scale = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        let (x, y) = batch.unpadded(i);
        let mut run = SeqRun::begin(&actor.net, &x, true)?;
        let terms = nll_terms(&mut run, bos, &y, eos)?;
        let loss = sum_terms(&mut run, &terms)?;
        let g = run.g.backward(loss)?;
        total_loss += run.value(loss).as_scalar()? * scale;
        accumulate(&mut grads, &g, scale);
    }
    Ok((total_loss, grads))
}

pub struct CriticStep {
    pub loss: f64,
    pub grads: Gradients,
    /// Live-critic value vectors, one per consumed position 0..T-1.
    pub values: Vec<Vec<f64>>,
    /// Mean over steps of (Qhat(taken action) - target)^2.
    pub mean_sq_td_error: f64,
}

/// Critic regression loss: sum over steps of the squared target error plus
/// lambda times the squared deviation of all action values from their mean.
/// Targets are constants; no gradient flows through them.
pub fn critic_step(
    critic: &CriticModel,
    traj: &Trajectory,
    targets: &[f64],
    lambda: f64,
) -> Result<CriticStep> {
    let bos = critic.cfg().bos();
    let vocab = critic.cfg().vocab_size;
    let uses_states = critic.cfg().extra_input > 0;
    let mut run = SeqRun::begin(&critic.net, &traj.y_ref, true)?;
    let steps = traj.steps();
    let mut values = Vec::with_capacity(steps);
    let mut sq_terms = Vec::with_capacity(steps);
    let mut var_terms = Vec::with_capacity(steps);
    let mut mean_sq = 0.0;
    for k in 0..steps {
        let prev = if k == 0 { bos } else { traj.tokens[k - 1] };
        let extra = uses_states
            .then(|| Tensor::vector(traj.states[k].clone()))
            .transpose()?;
        let step = run.step(prev, extra.as_ref())?;
        values.push(run.value(step.logits).data().to_vec());

        let picked = run.g.pick(step.logits, traj.tokens[k])?;
        let err = run.g.affine(picked, 1.0, -targets[k])?;
        sq_terms.push(run.g.square(err)?);
        mean_sq += (values[k][traj.tokens[k]] - targets[k]).powi(2) / steps as f64;

        if lambda > 0.0 {
            let total = run.g.sum(step.logits)?;
            let mean = run.g.affine(total, 1.0 / vocab as f64, 0.0)?;
            let dev = run.g.sub_scalar(step.logits, mean)?;
            var_terms.push(run.g.dot(dev, dev)?);
        }
    }
    let mut loss = sum_terms(&mut run, &sq_terms)?;
    if lambda > 0.0 {
        let var = sum_terms(&mut run, &var_terms)?;
        let scaled = run.g.affine(var, lambda, 0.0)?;
        loss = run.g.add(loss, scaled)?;
    }
    let grads = run.g.backward(loss)?;
    Ok(CriticStep {
        loss: run.value(loss).as_scalar()?,
        grads,
        values,
        mean_sq_td_error: mean_sq,
    })
}

/// Actor-critic ascent direction, implemented as descent on its negation:
/// sum over steps and actions of p(a|prefix) Qhat(a; prefix) with Qhat
/// constant, optionally plus lambda_ll times the teacher-forced
/// log-likelihood of the ground truth.
///
/// Returns (estimated Vhat along the trajectory, gradients).
pub fn ac_actor_grads(
    actor: &ActorModel,
    traj: &Trajectory,
    critic_values: &[Vec<f64>],
    lambda_ll: f64,
    eos: TokenId,
) -> Result<(f64, Gradients)> {
    let bos = actor.cfg().bos();
    let mut run = SeqRun::begin(&actor.net, &traj.x, true)?;
    let mut terms = Vec::with_capacity(traj.steps());
    let mut prev = bos;
    for (k, &tok) in traj.tokens.iter().enumerate() {
        let step = run.step(prev, None)?;
        let dist = run.g.softmax(step.logits)?;
        let q = run.g.constant(Tensor::vector(critic_values[k].clone())?);
        terms.push(run.g.dot(dist, q)?);
        prev = tok;
    }
    let vhat = sum_terms(&mut run, &terms)?;
    let vhat_value = run.value(vhat).as_scalar()?;
    let mut loss = run.g.affine(vhat, -1.0, 0.0)?;
    if lambda_ll > 0.0 {
        run.reset_decoder();
        let nll = nll_terms(&mut run, bos, &traj.y_ref, eos)?;
        let nll_sum = sum_terms(&mut run, &nll)?;
        let scaled = run.g.affine(nll_sum, lambda_ll, 0.0)?;
        loss = run.g.add(loss, scaled)?;
    }
    let grads = run.g.backward(loss)?;
    Ok((vhat_value, grads))
}

/// REINFORCE: sum over steps of d log p(taken token) * weight, with the
/// per-step weight (return-to-go minus baseline) treated as a constant;
/// descent on the negation, optionally with the log-likelihood term.
pub fn reinforce_grads(
    actor: &ActorModel,
    traj: &Trajectory,
    weights: &[f64],
    lambda_ll: f64,
    eos: TokenId,
) -> Result<(f64, Gradients)> {
    let bos = actor.cfg().bos();
    let mut run = SeqRun::begin(&actor.net, &traj.x, true)?;
    let mut terms = Vec::with_capacity(traj.steps());
    let mut prev = bos;
    for (k, &tok) in traj.tokens.iter().enumerate() {
        let step = run.step(prev, None)?;
        let logp = run.g.log_softmax(step.logits)?;
        let picked = run.g.pick(logp, tok)?;
        terms.push(run.g.affine(picked, -weights[k], 0.0)?);
        prev = tok;
    }
    let mut loss = sum_terms(&mut run, &terms)?;
    let objective = -run.value(loss).as_scalar()?;
    if lambda_ll > 0.0 {
        run.reset_decoder();
        let nll = nll_terms(&mut run, bos, &traj.y_ref, eos)?;
        let nll_sum = sum_terms(&mut run, &nll)?;
        let scaled = run.g.affine(nll_sum, lambda_ll, 0.0)?;
        loss = run.g.add(loss, scaled)?;
    }
    let grads = run.g.backward(loss)?;
    Ok((objective, grads))
}

/// Teacher-forced log p(Y|X) with gradients (positive log-likelihood).
pub fn teacher_forced_ll_grads(
    actor: &ActorModel,
    x: &[TokenId],
    y: &[TokenId],
    eos: TokenId,
) -> Result<(f64, Gradients)> {
    let (mut run, nll) = ll_sequence_graph(actor, x, y, eos)?;
    let ll = run.g.affine(nll, -1.0, 0.0)?;
    let grads = run.g.backward(ll)?;
    Ok((run.value(ll).as_scalar()?, grads))
}

/// Teacher-forced negative log-likelihood graph for one (X, Y) pair;
/// returns the run (holding the graph) and the scalar loss node. Used
/// directly by gradient-integrity checks.
pub fn ll_sequence_graph(
    actor: &ActorModel,
    x: &[TokenId],
    y: &[TokenId],
    eos: TokenId,
) -> Result<(SeqRun, NodeId)> {
    let bos = actor.cfg().bos();
    let mut run = SeqRun::begin(&actor.net, x, true)?;
    let terms = nll_terms(&mut run, bos, y, eos)?;
    let nll = sum_terms(&mut run, &terms)?;
    Ok((run, nll))
}

/// Critic regression-loss graph (squared target error plus the variance
/// penalty); returns the run and the scalar loss node.
pub fn critic_loss_graph(
    critic: &CriticModel,
    traj: &Trajectory,
    targets: &[f64],
    lambda: f64,
) -> Result<(SeqRun, NodeId)> {
    let bos = critic.cfg().bos();
    let vocab = critic.cfg().vocab_size;
    let uses_states = critic.cfg().extra_input > 0;
    let mut run = SeqRun::begin(&critic.net, &traj.y_ref, true)?;
    let steps = traj.steps();
    let mut sq_terms = Vec::with_capacity(steps);
    let mut var_terms = Vec::with_capacity(steps);
    for k in 0..steps {
        let prev = if k == 0 { bos } else { traj.tokens[k - 1] };
        let extra = uses_states
            .then(|| Tensor::vector(traj.states[k].clone()))
            .transpose()?;
        let step = run.step(prev, extra.as_ref())?;
        let picked = run.g.pick(step.logits, traj.tokens[k])?;
        let err = run.g.affine(picked, 1.0, -targets[k])?;
        sq_terms.push(run.g.square(err)?);
        if lambda > 0.0 {
            let total = run.g.sum(step.logits)?;
            let mean = run.g.affine(total, 1.0 / vocab as f64, 0.0)?;
            let dev = run.g.sub_scalar(step.logits, mean)?;
            var_terms.push(run.g.dot(dev, dev)?);
        }
    }
    let mut loss = sum_terms(&mut run, &sq_terms)?;
    if lambda > 0.0 {
        let var = sum_terms(&mut run, &var_terms)?;
        let scaled = run.g.affine(var, lambda, 0.0)?;
        loss = run.g.add(loss, scaled)?;
    }
    Ok((run, loss))
}

/// acc += scale * g, creating entries as needed.
pub fn accumulate(acc: &mut Gradients, g: &Gradients, scale: f64) {
    for (name, grad) in g {
        match acc.get_mut(name) {
            Some(t) => *t = t.add_scaled(grad, scale).expect("matching shapes"),
            None => {
                let mut t = Tensor::zeros(grad.shape());
                t = t.add_scaled(grad, scale).expect("matching shapes");
                acc.insert(name.clone(), t);
            }
        }
    }
}
