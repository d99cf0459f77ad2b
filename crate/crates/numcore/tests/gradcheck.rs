//! Finite-difference verification of the reverse pass, op by op and on a
//! hand-assembled GRU-attention step.

use numcore::{
    compare_gradients, gradcheck, AdamState, Graph, NodeId, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn leaf_vec(g: &mut Graph, rng: &mut ChaCha8Rng, name: &str, n: usize) -> NodeId {
    g.leaf(name, Tensor::vector(rand_vec(rng, n)).unwrap(), true)
}

fn leaf_mat(g: &mut Graph, rng: &mut ChaCha8Rng, name: &str, r: usize, c: usize) -> NodeId {
    g.leaf(name, Tensor::matrix(r, c, rand_vec(rng, r * c)).unwrap(), true)
}

#[test]
fn linear_layer_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let w = leaf_mat(&mut g, &mut rng, "w", 4, 3);
    let b = leaf_vec(&mut g, &mut rng, "b", 4);
    let x = g.constant(Tensor::vector(vec![0.7, -1.3, 0.4]).unwrap());
    let wx = g.matvec(w, x).unwrap();
    let y = g.add(wx, b).unwrap();
    let out = g.sum(y).unwrap();
    let report = gradcheck(&mut g, out, 1e-8).unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn softmax_cross_entropy_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::new();
    let w = leaf_mat(&mut g, &mut rng, "w", 5, 4);
    let b = leaf_vec(&mut g, &mut rng, "b", 5);
    let x = g.constant(Tensor::vector(rand_vec(&mut rng, 4)).unwrap());
    let wx = g.matvec(w, x).unwrap();
    let logits = g.add(wx, b).unwrap();
    let logp = g.log_softmax(logits).unwrap();
    let picked = g.pick(logp, 2).unwrap();
    let loss = g.affine(picked, -1.0, 0.0).unwrap();
    let report = gradcheck(&mut g, loss, 1e-6).unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn corrupted_gradient_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = Graph::new();
    let w = leaf_mat(&mut g, &mut rng, "w", 3, 3);
    let x = g.constant(Tensor::vector(rand_vec(&mut rng, 3)).unwrap());
    let wx = g.matvec(w, x).unwrap();
    let y = g.tanh(wx).unwrap();
    let out = g.sum(y).unwrap();

    let mut analytic = g.backward(out).unwrap();
    let numeric = numcore::numeric_gradients(&mut g, out, numcore::DEFAULT_STEP).unwrap();
    let ok = compare_gradients(&analytic, &numeric, 1e-6);
    assert!(ok.pass);

    // corrupt one entry as if an op had a wrong backward rule
    let grad = analytic.get_mut("w").unwrap();
    grad.data_mut()[4] += 0.5;
    let bad = compare_gradients(&analytic, &numeric, 1e-6);
    assert!(!bad.pass);
    assert!(!bad.leaves["w"].pass);
}

/// One GRU step with attention over four annotation vectors, assembled from
/// raw ops so it does not depend on any model-building code.
fn gru_attention_step(g: &mut Graph, rng: &mut ChaCha8Rng) -> NodeId {
    let (hid, emb, l, ann) = (5, 3, 4, 6);

    let annotations = leaf_mat(g, rng, "annotations", l, ann);
    let s_prev = leaf_vec(g, rng, "s_prev", hid);
    let e_y = leaf_vec(g, rng, "embedding", emb);

    // attention: score_j = v . tanh(W s_prev + U h_j + b)
    let wa = leaf_mat(g, rng, "attn.w", hid, hid);
    let ua = leaf_mat(g, rng, "attn.u", ann, hid); // applied as H * U
    let ba = leaf_vec(g, rng, "attn.b", hid);
    let va = leaf_vec(g, rng, "attn.v", hid);
    let ws = g.matvec(wa, s_prev).unwrap();
    let wsb = g.add(ws, ba).unwrap();
    let hu = g.matmul(annotations, ua).unwrap();
    let pre = g.add_row(hu, wsb).unwrap();
    let act = g.tanh(pre).unwrap();
    let scores = g.matvec(act, va).unwrap();
    let alpha = g.softmax(scores).unwrap();
    let ctx = g.rows_weighted(annotations, alpha).unwrap();

    // GRU over input [e_y, ctx]
    let x = g.concat(&[e_y, ctx]).unwrap();
    let xdim = emb + ann;
    let gru_gate = |g: &mut Graph, rng: &mut ChaCha8Rng, tag: &str, x: NodeId, s: NodeId| {
        let w = leaf_mat(g, rng, &format!("gru.w{tag}"), hid, xdim);
        let u = leaf_mat(g, rng, &format!("gru.u{tag}"), hid, hid);
        let b = leaf_vec(g, rng, &format!("gru.b{tag}"), hid);
        let wx = g.matvec(w, x).unwrap();
        let us = g.matvec(u, s).unwrap();
        let sum = g.add(wx, us).unwrap();
        g.add(sum, b).unwrap()
    };
    let z = gru_gate(g, rng, "z", x, s_prev);
    let z = g.sigmoid(z).unwrap();
    let r = gru_gate(g, rng, "r", x, s_prev);
    let r = g.sigmoid(r).unwrap();
    let rs = g.mul(r, s_prev).unwrap();
    let h = gru_gate(g, rng, "h", x, rs);
    let h = g.tanh(h).unwrap();
    // s = (1-z) s_prev + z h
    let h_minus_s = g.sub(h, s_prev).unwrap();
    let delta = g.mul(z, h_minus_s).unwrap();
    let s = g.add(s_prev, delta).unwrap();

    // project to logits and take a log-probability as the scalar output
    let wo = leaf_mat(g, rng, "out.w", 4, hid);
    let logits = g.matvec(wo, s).unwrap();
    let logp = g.log_softmax(logits).unwrap();
    g.pick(logp, 1).unwrap()
}

#[test]
fn gru_attention_step_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    let out = gru_attention_step(&mut g, &mut rng);
    let report = gradcheck(&mut g, out, 1e-4).unwrap();
    assert!(report.pass, "{report}");
    // 64-bit central differences on this graph are much tighter than 1e-4
    assert!(report.max_rel_err() < 1e-6, "{report}");
}

#[test]
fn backward_is_linear_over_graph_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let build = |g: &mut Graph, w: NodeId, x: NodeId| -> (NodeId, NodeId) {
        let wx = g.matvec(w, x).unwrap();
        let f = g.tanh(wx).unwrap();
        let f = g.sum(f).unwrap();
        let sq = g.mul(wx, wx).unwrap();
        let h = g.sum(sq).unwrap();
        (f, h)
    };

    let wt = Tensor::matrix(3, 3, rand_vec(&mut rng, 9)).unwrap();
    let xt = Tensor::vector(rand_vec(&mut rng, 3)).unwrap();

    let mut g = Graph::new();
    let w = g.leaf("w", wt.clone(), true);
    let x = g.constant(xt.clone());
    let (f, h) = build(&mut g, w, x);
    let combined_out = g.add(f, h).unwrap();
    let combined = g.backward(combined_out).unwrap();
    let gf = g.backward(f).unwrap();
    let gh = g.backward(h).unwrap();

    for (name, c) in &combined {
        let s = gf[name].add_scaled(&gh[name], 1.0).unwrap();
        for i in 0..c.len() {
            assert!((c.at(i) - s.at(i)).abs() <= 1e-12);
        }
    }
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.random_range(1..12);
        let scale = 10f64.powi(rng.random_range(-2..3));
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vals).unwrap());
        let s = g.softmax(x).unwrap();
        let out = g.value(s).data();
        assert!(out.iter().all(|&v| v > 0.0));
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let out = gru_attention_step(&mut g, &mut rng);
        let grads = g.backward(out).unwrap();
        let mut bits = vec![g.value(out).at(0).to_bits()];
        for (_, t) in grads {
            bits.extend(t.data().iter().map(|v| v.to_bits()));
        }
        bits
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_alpha_schedule_values() {
    let mut state = AdamState::new(1e-3);
    assert_eq!(state.alpha, 1e-3);
    state.set_alpha(1e-4);
    assert_eq!(state.alpha, 1e-4);
}

mod per_op_properties {
    use super::*;
    use proptest::prelude::*;

    fn check(g: &mut Graph, out: NodeId) {
        let out = g.sum(out).unwrap();
        let report = gradcheck(g, out, 1e-4).unwrap();
        prop_assert_or(report);
    }

    fn prop_assert_or(report: numcore::GradCheckReport) {
        assert!(report.pass, "{report}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matmul_grad(m in 1usize..4, k in 1usize..4, n in 1usize..4, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let a = leaf_mat(&mut g, &mut rng, "a", m, k);
            let b = leaf_mat(&mut g, &mut rng, "b", k, n);
            let c = g.matmul(a, b).unwrap();
            // make the output depend nonlinearly so errors cannot cancel
            let c = g.tanh(c).unwrap();
            check(&mut g, c);
        }

        #[test]
        fn elementwise_chain_grad(n in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let a = leaf_vec(&mut g, &mut rng, "a", n);
            let b = leaf_vec(&mut g, &mut rng, "b", n);
            let p = g.mul(a, b).unwrap();
            let q = g.sigmoid(p).unwrap();
            let r = g.add(q, a).unwrap();
            let s = g.affine(r, -1.7, 0.3).unwrap();
            let t = g.tanh(s).unwrap();
            check(&mut g, t);
        }

        #[test]
        fn attention_ops_grad(l in 1usize..5, c in 1usize..5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let m = leaf_mat(&mut g, &mut rng, "m", l, c);
            let w = leaf_vec(&mut g, &mut rng, "w", l);
            let alpha = g.softmax(w).unwrap();
            let ctx = g.rows_weighted(m, alpha).unwrap();
            check(&mut g, ctx);
        }

        #[test]
        fn select_concat_grad(v in 2usize..5, c in 2usize..5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let emb = leaf_mat(&mut g, &mut rng, "emb", v, c);
            let r0 = g.row(emb, 0).unwrap();
            let r1 = g.row(emb, v - 1).unwrap();
            let cat = g.concat(&[r0, r1]).unwrap();
            let st = g.stack(&[cat, cat]).unwrap();
            let sv = leaf_vec(&mut g, &mut rng, "s", 1);
            let sc = g.sum(sv).unwrap();
            let sub = g.sub_scalar(st, sc).unwrap();
            let t = g.tanh(sub).unwrap();
            check(&mut g, t);
        }

        #[test]
        fn softmax_pick_dot_grad(n in 2usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let x = leaf_vec(&mut g, &mut rng, "x", n);
            let y = leaf_vec(&mut g, &mut rng, "y", n);
            let sm = g.softmax(x).unwrap();
            let d = g.dot(sm, y).unwrap();
            let lp = g.log_softmax(y).unwrap();
            let pk = g.pick(lp, n - 1).unwrap();
            let both = g.add(d, pk).unwrap();
            check(&mut g, both);
        }
    }
}
