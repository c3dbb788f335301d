//! Finite-difference validation of every primitive, plus the structural
//! invariants of the tape: linearity of differentiation and bit-identical
//! replay.

use dair_autodiff::{
    backward, forward, grad_check_fn, grad_check_graph, GraphBuilder, NodeId, ParamSet, Tensor,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Builds a scalar objective around one primitive, then checks its gradient
/// against central differences on `instances` random draws. The primitive
/// output is reduced through a random weighted sum so every coordinate of
/// the output influences the objective. Every parameter the body declares
/// (the main `theta` plus any extras) is drawn at random and checked.
fn check_primitive_shaped(
    name: &str,
    instances: usize,
    seed: u64,
    build: impl Fn(&mut GraphBuilder, NodeId) -> NodeId,
    param_shape: &[usize],
    out_shape: &[usize],
    lo: f64,
    hi: f64,
) {
    let mut r = rng(seed);
    for inst in 0..instances {
        let mut g = GraphBuilder::new();
        let p = g.param("theta", param_shape.to_vec()).unwrap();
        let y = build(&mut g, p);
        let weights_tensor = random_tensor(&mut r, out_shape, -1.0, 1.0);
        let w = g.input("mix", out_shape.to_vec()).unwrap();
        let mixed = g.mul(y, w).unwrap();
        let out = g.sum(mixed);
        let graph = g.finish(out);

        let mut params = ParamSet::new();
        params
            .insert("theta", random_tensor(&mut r, param_shape, lo, hi))
            .unwrap();
        for (pname, pshape) in graph.param_spec() {
            if pname != "theta" {
                params
                    .insert(pname.clone(), random_tensor(&mut r, pshape, lo, hi))
                    .unwrap();
            }
        }
        let mut inputs: Vec<(&str, &Tensor)> = vec![("mix", &weights_tensor)];
        let extra: Vec<(String, Tensor)> = graph
            .input_spec()
            .iter()
            .filter(|(n, _)| n != "mix")
            .map(|(n, s)| (n.clone(), random_tensor(&mut r, s, lo, hi)))
            .collect();
        for (n, t) in &extra {
            inputs.push((n.as_str(), t));
        }

        let err = grad_check_graph(&graph, &inputs, &params, FD_STEP).unwrap();
        assert!(
            err <= FD_TOL,
            "{name}: instance {inst} exceeded tolerance: {err:.3e}"
        );
    }
}

#[test]
fn pointwise_primitives_match_finite_differences() {
    let shape = [7];
    // Domains keep each draw away from the primitive's kinks so the central
    // difference itself is trustworthy at step 1e-6.
    check_primitive_shaped("exp", 100, 11, |g, p| g.exp(p), &shape, &shape, -2.0, 2.0);
    check_primitive_shaped("log", 100, 12, |g, p| g.log(p), &shape, &shape, 0.1, 4.0);
    check_primitive_shaped("sqrt", 100, 13, |g, p| g.sqrt(p), &shape, &shape, 0.05, 4.0);
    check_primitive_shaped("abs", 100, 14, |g, p| g.abs(p), &shape, &shape, 0.05, 3.0);
    check_primitive_shaped("relu", 100, 15, |g, p| g.relu(p), &shape, &shape, 0.05, 3.0);
    check_primitive_shaped(
        "softplus",
        100,
        16,
        |g, p| g.softplus(p),
        &shape,
        &shape,
        -4.0,
        4.0,
    );
    check_primitive_shaped(
        "huber",
        100,
        17,
        |g, p| g.huber(p, 1.0).unwrap(),
        &shape,
        &shape,
        0.05,
        3.0,
    );
    check_primitive_shaped(
        "add_scalar/mul_scalar",
        100,
        18,
        |g, p| {
            let a = g.add_scalar(p, 0.7);
            g.mul_scalar(a, -1.3)
        },
        &shape,
        &shape,
        -2.0,
        2.0,
    );
}

#[test]
fn arithmetic_primitives_match_finite_differences() {
    let shape = [6];
    check_primitive_shaped(
        "add/sub/mul",
        100,
        21,
        |g, p| {
            let a = g.mul(p, p).unwrap();
            let b = g.add(a, p).unwrap();
            g.sub(b, p).unwrap()
        },
        &shape,
        &shape,
        -2.0,
        2.0,
    );
}

#[test]
fn reduction_primitives_match_finite_differences() {
    check_primitive_shaped(
        "row_sum",
        100,
        31,
        |g, p| g.row_sum(p).unwrap(),
        &[4, 5],
        &[4],
        -2.0,
        2.0,
    );
    check_primitive_shaped(
        "mean",
        100,
        32,
        |g, p| g.mean(p),
        &[12],
        &[1],
        -2.0,
        2.0,
    );
    check_primitive_shaped(
        "concat",
        100,
        33,
        |g, p| g.concat(p, p).unwrap(),
        &[5],
        &[10],
        -2.0,
        2.0,
    );
    check_primitive_shaped(
        "log_softmax",
        100,
        34,
        |g, p| g.log_softmax(p).unwrap(),
        &[3, 5],
        &[3, 5],
        -2.0,
        2.0,
    );
}

#[test]
fn dense_conv_pool_match_finite_differences() {
    // dense on both the weight and the input-as-parameter side
    check_primitive_shaped(
        "dense(w)",
        100,
        41,
        |g, p| {
            let x = g.input("x", vec![3, 4]).unwrap();
            let b = g.param("bias", vec![2]).unwrap();
            g.dense(x, p, Some(b)).unwrap()
        },
        &[4, 2],
        &[3, 2],
        -1.0,
        1.0,
    );
    // conv + pool over a parameterized image; ReLU between layers
    check_primitive_shaped(
        "conv2d+max_pool2",
        60,
        42,
        |g, p| {
            let w = g.param("k", vec![2, 2, 1, 3]).unwrap();
            let b = g.param("kb", vec![3]).unwrap();
            let c = g.conv2d(p, w, b).unwrap();
            let r = g.relu(c);
            let pl = g.max_pool2(r).unwrap();
            g.reshape(pl, vec![2, 2 * 2 * 3]).unwrap()
        },
        &[2, 5, 5, 1],
        &[2, 12],
        -1.0,
        1.0,
    );
}

#[test]
fn dense_identity_passes_input_through() {
    // dense(identity weights, zero bias) on x = [1, 2] -> [1, 2]
    let mut g = GraphBuilder::new();
    let x = g.input("x", vec![1, 2]).unwrap();
    let w = g.param("w", vec![2, 2]).unwrap();
    let b = g.param("b", vec![2]).unwrap();
    let y = g.dense(x, w, Some(b)).unwrap();
    let graph = g.finish(y);

    let mut params = ParamSet::new();
    params
        .insert("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap())
        .unwrap();
    params.insert("b", Tensor::vector(&[0.0, 0.0]).unwrap()).unwrap();
    let xv = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let (out, _) = forward(&graph, &[("x", &xv)], &params).unwrap();
    assert_eq!(out.data(), &[1.0, 2.0]);
}

#[test]
fn maxpool_takes_window_maximum() {
    // 2x2 max-pool on [[1,2],[3,4]] -> [[4]]
    let mut g = GraphBuilder::new();
    let x = g.input("x", vec![1, 2, 2, 1]).unwrap();
    let y = g.max_pool2(x).unwrap();
    let graph = g.finish(y);
    let xv = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (out, _) = forward(&graph, &[("x", &xv)], &ParamSet::new()).unwrap();
    assert_eq!(out.data(), &[4.0]);
}

#[test]
fn conv_output_extent_on_mnist_sized_input() {
    // 4x4 kernel, 6 channels, 28x28 input: 28 - 4 + 1 = 25 per axis.
    let mut g = GraphBuilder::new();
    let x = g.input("x", vec![1, 28, 28, 1]).unwrap();
    let w = g.param("w", vec![4, 4, 1, 6]).unwrap();
    let b = g.param("b", vec![6]).unwrap();
    let y = g.conv2d(x, w, b).unwrap();
    let graph = g.finish(y);

    let mut r = rng(7);
    let mut params = ParamSet::new();
    params
        .insert("w", random_tensor(&mut r, &[4, 4, 1, 6], -1.0, 1.0))
        .unwrap();
    params.insert("b", random_tensor(&mut r, &[6], -1.0, 1.0)).unwrap();
    let xv = random_tensor(&mut r, &[1, 28, 28, 1], 0.0, 1.0);
    let (out, _) = forward(&graph, &[("x", &xv)], &params).unwrap();
    assert_eq!(out.shape(), &[1, 25, 25, 6]);
}

#[test]
fn simple_derivatives_match_calculus() {
    // f(theta) = theta^2 at theta = 3 -> gradient 6
    let mut g = GraphBuilder::new();
    let p = g.param("theta", vec![1]).unwrap();
    let sq = g.mul(p, p).unwrap();
    let out = g.sum(sq);
    let graph = g.finish(out);
    let mut params = ParamSet::new();
    params.insert("theta", Tensor::scalar(3.0)).unwrap();
    let (val, tape) = forward(&graph, &[], &params).unwrap();
    assert_eq!(val.item(), 9.0);
    let grads = backward(&graph, &tape, &params, 1.0).unwrap();
    assert_eq!(grads.get("theta").unwrap().data()[0], 6.0);

    // f(theta) = sqrt(theta) at theta = 4 -> gradient 0.25
    let mut g = GraphBuilder::new();
    let p = g.param("theta", vec![1]).unwrap();
    let rt = g.sqrt(p);
    let out = g.sum(rt);
    let graph = g.finish(out);
    let mut params = ParamSet::new();
    params.insert("theta", Tensor::scalar(4.0)).unwrap();
    let (val, tape) = forward(&graph, &[], &params).unwrap();
    assert_eq!(val.item(), 2.0);
    let grads = backward(&graph, &tape, &params, 1.0).unwrap();
    assert_eq!(grads.get("theta").unwrap().data()[0], 0.25);
}

#[test]
fn sqrt_subgradient_at_zero_is_zero() {
    let mut g = GraphBuilder::new();
    let p = g.param("theta", vec![1]).unwrap();
    let rt = g.sqrt(p);
    let out = g.sum(rt);
    let graph = g.finish(out);
    let mut params = ParamSet::new();
    params.insert("theta", Tensor::scalar(0.0)).unwrap();
    let (_, tape) = forward(&graph, &[], &params).unwrap();
    let grads = backward(&graph, &tape, &params, 1.0).unwrap();
    assert_eq!(grads.get("theta").unwrap().data()[0], 0.0);
}

#[test]
fn linear_least_squares_gradcheck_is_tight() {
    // Quadratic objective: central differences are exact up to roundoff.
    let mut g = GraphBuilder::new();
    let x = g.input("x", vec![4, 2]).unwrap();
    let t = g.input("t", vec![4]).unwrap();
    let w = g.param("w", vec![2, 1]).unwrap();
    let b = g.param("b", vec![1]).unwrap();
    let pred2 = g.dense(x, w, Some(b)).unwrap();
    let pred = g.reshape(pred2, vec![4]).unwrap();
    let resid = g.sub(pred, t).unwrap();
    let sq = g.mul(resid, resid).unwrap();
    let out = g.mean(sq);
    let graph = g.finish(out);

    let mut r = rng(99);
    let xv = random_tensor(&mut r, &[4, 2], -1.0, 1.0);
    let tv = random_tensor(&mut r, &[4], -1.0, 1.0);
    let mut params = ParamSet::new();
    params.insert("w", random_tensor(&mut r, &[2, 1], -1.0, 1.0)).unwrap();
    params.insert("b", random_tensor(&mut r, &[1], -1.0, 1.0)).unwrap();

    let err = grad_check_graph(&graph, &[("x", &xv), ("t", &tv)], &params, FD_STEP).unwrap();
    assert!(err <= 1e-7, "3-parameter least squares gradcheck: {err:.3e}");
}

#[test]
fn zero_parameter_objective_grad_check_is_vacuous() {
    let params = ParamSet::new();
    let analytic = ParamSet::new();
    let err = grad_check_fn(|_| Ok(1.5), &analytic, &params, FD_STEP).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn backward_is_linear_in_the_objective() {
    // gradient(f + g) == gradient(f) + gradient(g), elementwise to 1e-12
    let build = |combine: u8| {
        let mut g = GraphBuilder::new();
        let p = g.param("theta", vec![5]).unwrap();
        let f = {
            let sq = g.mul(p, p).unwrap();
            g.sum(sq)
        };
        let h = {
            let e = g.exp(p);
            g.sum(e)
        };
        let out = match combine {
            0 => f,
            1 => h,
            _ => g.add(f, h).unwrap(),
        };
        g.finish(out)
    };
    let mut r = rng(5);
    let theta = random_tensor(&mut r, &[5], -1.0, 1.0);
    let mut params = ParamSet::new();
    params.insert("theta", theta).unwrap();

    let grad = |graph: &dair_autodiff::Graph| {
        let (_, tape) = forward(graph, &[], &params).unwrap();
        backward(graph, &tape, &params, 1.0).unwrap()
    };
    let gf = grad(&build(0));
    let gh = grad(&build(1));
    let gsum = grad(&build(2));
    for i in 0..5 {
        let lhs = gsum.get("theta").unwrap().data()[i];
        let rhs = gf.get("theta").unwrap().data()[i] + gh.get("theta").unwrap().data()[i];
        assert!((lhs - rhs).abs() <= 1e-12, "index {i}: {lhs} vs {rhs}");
    }
}

#[test]
fn replay_is_bit_identical_and_rejects_mutated_params() {
    let mut g = GraphBuilder::new();
    let p = g.param("theta", vec![8]).unwrap();
    let e = g.exp(p);
    let sp = g.softplus(e);
    let out = g.mean(sp);
    let graph = g.finish(out);

    let mut r = rng(77);
    let mut params = ParamSet::new();
    params.insert("theta", random_tensor(&mut r, &[8], -1.0, 1.0)).unwrap();

    let (v1, tape) = forward(&graph, &[], &params).unwrap();
    let v2 = tape.replay(&graph, &[], &params).unwrap();
    assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());

    params.get_mut("theta").unwrap().data_mut()[3] += 1e-9;
    assert!(tape.replay(&graph, &[], &params).is_err());
    assert!(backward(&graph, &tape, &params, 1.0).is_err());
}

#[test]
fn non_finite_seed_is_rejected() {
    let mut g = GraphBuilder::new();
    let p = g.param("theta", vec![1]).unwrap();
    let out = g.sum(p);
    let graph = g.finish(out);
    let mut params = ParamSet::new();
    params.insert("theta", Tensor::scalar(1.0)).unwrap();
    let (_, tape) = forward(&graph, &[], &params).unwrap();
    assert!(backward(&graph, &tape, &params, f64::NAN).is_err());
}
