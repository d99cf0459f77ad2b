//! Central-difference verification of `backward`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Result;
use crate::graph::{Gradients, Graph, NodeId};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error floor: below this magnitude the comparison is absolute.
const DENOM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct LeafCheck {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub leaves: BTreeMap<String, LeafCheck>,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.leaves
            .values()
            .fold(0.0, |m, l| m.max(l.max_rel_err))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck: {} (tolerance {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.tolerance
        )?;
        for (name, leaf) in &self.leaves {
            writeln!(
                f,
                "  {:<40} max rel err {:.3e} at [{}] {}",
                name,
                leaf.max_rel_err,
                leaf.worst_index,
                if leaf.pass { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compare `backward` against central finite differences on every trainable
/// leaf of a scalar-output graph. Leaf values are restored afterwards.
pub fn gradcheck(g: &mut Graph, output: NodeId, tolerance: f64) -> Result<GradCheckReport> {
    let analytic = g.backward(output)?;
    let numeric = numeric_gradients(g, output, DEFAULT_STEP)?;
    Ok(compare_gradients(&analytic, &numeric, tolerance))
}

/// Central-difference gradients for every trainable leaf.
pub fn numeric_gradients(g: &mut Graph, output: NodeId, h: f64) -> Result<Gradients> {
    let leaves = g.trainable_leaf_ids();
    let mut out = Gradients::new();
    for (name, id) in leaves {
        let base = g.value(id).clone();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut plus = base.data().to_vec();
            plus[i] += h;
            g.rebind_leaf(id, Tensor::new(base.shape().to_vec(), plus)?)?;
            let f_plus = g.forward(output)?.as_scalar()?;

            let mut minus = base.data().to_vec();
            minus[i] -= h;
            g.rebind_leaf(id, Tensor::new(base.shape().to_vec(), minus)?)?;
            let f_minus = g.forward(output)?.as_scalar()?;

            grad[i] = (f_plus - f_minus) / (2.0 * h);
        }
        g.rebind_leaf(id, base.clone())?;
        g.forward(output)?;
        out.insert(name, Tensor::new(base.shape().to_vec(), grad)?);
    }
    Ok(out)
}

/// Per-leaf worst relative error between two gradient maps.
pub fn compare_gradients(
    analytic: &Gradients,
    reference: &Gradients,
    tolerance: f64,
) -> GradCheckReport {
    let mut leaves = BTreeMap::new();
    let mut all_pass = true;
    for (name, a) in analytic {
        let (mut worst, mut worst_index) = (0.0f64, 0usize);
        if let Some(r) = reference.get(name) {
            for i in 0..a.len() {
                let (av, rv) = (a.at(i), r.at(i));
                let denom = av.abs().max(rv.abs()).max(DENOM_FLOOR);
                let rel = (av - rv).abs() / denom;
                if rel > worst {
                    worst = rel;
                    worst_index = i;
                }
            }
        } else {
            worst = f64::INFINITY;
        }
        let pass = worst <= tolerance;
        all_pass &= pass;
        leaves.insert(
            name.clone(),
            LeafCheck {
                max_rel_err: worst,
                worst_index,
                pass,
            },
        );
    }
    GradCheckReport {
        tolerance,
        leaves,
        pass: all_pass,
    }
}
