//! Minimal dense numerics for recurrent sequence models: f64 tensors, a
//! reverse-mode differentiation graph covering GRU/attention/softmax needs,
//! finite-difference gradient checking, and Adam.
//!
//! Execution is single-threaded per graph with fixed-order reductions, so a
//! run is bitwise reproducible. Tensors are immutable once written by an op;
//! distinct graphs may be evaluated on distinct threads.

mod adam;
mod error;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamState, ParamSet};
pub use error::{NumError, Result};
pub use gradcheck::{
    compare_gradients, gradcheck, numeric_gradients, GradCheckReport, LeafCheck, DEFAULT_STEP,
};
pub use graph::{
    log_softmax_stable, log_sum_exp, sigmoid, softmax_stable, Gradients, Graph, NodeId,
};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn matmul_hand_case() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let mut g = Graph::new();
        let x = g.constant(t(vec![0.0, 0.0, 0.0]));
        let s = g.softmax(x).unwrap();
        for v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.constant(t(vec![0.0]));
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).data(), &[0.5]);
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf("x", t(vec![0.3, -1.2, 7.0]), true);
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads["x"].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_backward_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf("x", t(vec![0.0]), true);
        let s = g.sigmoid(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert!((grads["x"].at(0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn untouched_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf("x", t(vec![1.0, 2.0]), true);
        let _unused = g.leaf("unused", t(vec![5.0]), true);
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads["unused"].data(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = g.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(Tensor::vector(vec![f64::NAN]).is_err());
        let mut g = Graph::new();
        // exp overflow: affine to a huge value then softmax stays stable,
        // but mul of huge values overflows to inf.
        let x = g.constant(t(vec![1e308]));
        let y = g.constant(t(vec![1e308]));
        assert!(matches!(g.mul(x, y), Err(NumError::NonFinite { .. })));
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut g = Graph::new();
        let x = g.leaf("x", t(vec![1.0]), true);
        let s = g.sum(x).unwrap();
        g.rebind_leaf(x, t(vec![2.0])).unwrap();
        assert!(matches!(
            g.backward(s),
            Err(NumError::BackwardBeforeForward)
        ));
        g.forward(s).unwrap();
        assert!(g.backward(s).is_ok());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = ParamSet::new();
        params.insert("w".into(), t(vec![1.5, -0.5]));
        let grads = ParamSet::from([("w".to_string(), t(vec![0.0, 0.0]))]);
        let mut state = AdamState::new(1e-3);
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params["w"].data(), &[1.5, -0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_constant_gradient_approaches_alpha_sign() {
        let mut params = ParamSet::new();
        params.insert("w".into(), t(vec![0.0]));
        let grads = ParamSet::from([("w".to_string(), t(vec![-2.5]))]);
        let mut state = AdamState::new(1e-3);
        let mut prev = 0.0;
        let mut step_size = 0.0;
        for _ in 0..5000 {
            adam_step(&mut params, &grads, &mut state).unwrap();
            step_size = params["w"].at(0) - prev;
            prev = params["w"].at(0);
        }
        // update -> alpha * sign(g); gradient is negative so params move up
        assert!((step_size - 1e-3).abs() < 1e-5, "step {step_size}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = ParamSet::new();
        params.insert("w".into(), t(vec![1.0]));
        // sneak a non-finite value in through the unchecked mutable path
        let mut g = t(vec![1.0]);
        g.data_mut()[0] = f64::INFINITY;
        let bad = ParamSet::from([("w".to_string(), g)]);
        let mut state = AdamState::new(1e-3);
        let before = params["w"].clone();
        assert!(adam_step(&mut params, &bad, &mut state).is_err());
        assert_eq!(params["w"], before);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut grads = ParamSet::from([("w".to_string(), t(vec![3.0, 4.0]))]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped = grads["w"].sq_norm().sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);
        // disabled clipping leaves gradients alone
        let mut grads = ParamSet::from([("w".to_string(), t(vec![3.0, 4.0]))]);
        clip_global_norm(&mut grads, 0.0);
        assert_eq!(grads["w"].data(), &[3.0, 4.0]);
    }
}
