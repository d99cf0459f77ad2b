//! Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8);
//! the scale alpha is owned by the caller's schedule and may change
//! between steps.

use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::tensor::Tensor;

/// Named parameter collection; iteration order is name order.
pub type ParamSet = BTreeMap<String, Tensor>;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: ParamSet,
    v: ParamSet,
}

impl AdamState {
    pub fn new(alpha: f64) -> Self {
        AdamState {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ParamSet::new(),
            v: ParamSet::new(),
        }
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn moments(&self) -> (&ParamSet, &ParamSet) {
        (&self.m, &self.v)
    }

    /// Restore a state from serialized pieces.
    pub fn from_parts(
        alpha: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: ParamSet,
        v: ParamSet,
    ) -> Self {
        AdamState {
            alpha,
            beta1,
            beta2,
            eps,
            step,
            m,
            v,
        }
    }
}

/// One Adam update for every gradient entry; parameters without a gradient
/// are untouched. The whole step aborts (no mutation) on a non-finite or
/// shape-mismatched gradient.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    for (name, g) in grads {
        if !g.is_all_finite() {
            return Err(NumError::NonFiniteGrad(name.clone()));
        }
        let p = params
            .get(name)
            .ok_or_else(|| NumError::NonFiniteGrad(format!("{name} (unknown parameter)")))?;
        if p.shape() != g.shape() {
            return Err(NumError::AdamShape {
                name: name.clone(),
                param: p.shape().to_vec(),
                other: g.shape().to_vec(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (name, g) in grads {
        let p = params.get_mut(name).unwrap();
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));

        let (b1, b2, eps, alpha) = (state.beta1, state.beta2, state.eps, state.alpha);
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        let pd = p.data_mut();
        for i in 0..gd.len() {
            md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
            vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
            let mh = md[i] / bc1;
            let vh = vd[i] / bc2;
            pd[i] -= alpha * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scale all gradients so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm. `max_norm <= 0` disables clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}
