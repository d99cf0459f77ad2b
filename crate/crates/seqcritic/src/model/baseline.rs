//! Linear baseline network: a scalar b_t from the actor decoder state,
//! trained by squared error against the observed return-to-go.

use numcore::{Gradients, Graph, ParamSet, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::INIT_WIDTH;

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub params: ParamSet,
    state_dim: usize,
}

impl BaselineModel {
    pub fn new(state_dim: usize, rng: &mut ChaCha8Rng) -> BaselineModel {
        let half = INIT_WIDTH / 2.0;
        let w: Vec<f64> = (0..state_dim).map(|_| rng.random_range(-half..half)).collect();
        let b = rng.random_range(-half..half);
        let mut params = ParamSet::new();
        params.insert("w".into(), Tensor::vector(w).expect("finite"));
        params.insert("b".into(), Tensor::vector(vec![b]).expect("finite"));
        BaselineModel { params, state_dim }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        let w = self.params["w"].data();
        let dot: f64 = w.iter().zip(state).map(|(a, b)| a * b).sum();
        dot + self.params["b"].at(0)
    }

    /// Mean squared error against `targets` plus its gradients.
    pub fn loss_and_grads(
        &self,
        states: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        let mut g = Graph::new();
        let w = g.leaf("w", self.params["w"].clone(), true);
        let b = g.leaf("b", self.params["b"].clone(), true);
        let mut terms = Vec::with_capacity(states.len());
        for (s, &t) in states.iter().zip(targets) {
            let sv = g.constant(Tensor::vector(s.clone())?);
            let ws = g.dot(w, sv)?;
            let pred = g.add(ws, b)?;
            let err = g.affine(pred, 1.0, -t)?;
            terms.push(g.square(err)?);
        }
        let cat = g.concat(&terms)?;
        let total = g.sum(cat)?;
        let loss = g.affine(total, 1.0 / states.len().max(1) as f64, 0.0)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).as_scalar()?, grads))
    }
}
