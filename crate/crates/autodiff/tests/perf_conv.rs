//! Ad-hoc kernel timing (run with --ignored --nocapture).

use std::time::Instant;

use dair_autodiff::{backward, forward, GraphBuilder, ParamSet, Tensor};

#[test]
#[ignore]
fn time_cnn_forward_backward() {
    let n = 64;
    let mut g = GraphBuilder::new();
    let x = g.input("x", vec![n, 28, 28, 3]).unwrap();
    let w1 = g.param("w1", vec![4, 4, 3, 6]).unwrap();
    let b1 = g.param("b1", vec![6]).unwrap();
    let w2 = g.param("w2", vec![4, 4, 6, 16]).unwrap();
    let b2 = g.param("b2", vec![16]).unwrap();
    let w3 = g.param("w3", vec![4, 4, 16, 96]).unwrap();
    let b3 = g.param("b3", vec![96]).unwrap();
    let w4 = g.param("w4", vec![96, 64]).unwrap();
    let b4 = g.param("b4", vec![64]).unwrap();
    let w5 = g.param("w5", vec![64, 1]).unwrap();
    let b5 = g.param("b5", vec![1]).unwrap();

    let c1 = g.conv2d(x, w1, b1).unwrap();
    let r1 = g.relu(c1);
    let p1 = g.max_pool2(r1).unwrap();
    let c2 = g.conv2d(p1, w2, b2).unwrap();
    let r2 = g.relu(c2);
    let p2 = g.max_pool2(r2).unwrap();
    let c3 = g.conv2d(p2, w3, b3).unwrap();
    let r3 = g.relu(c3);
    let fl = g.reshape(r3, vec![n, 96]).unwrap();
    let f1 = g.dense(fl, w4, Some(b4)).unwrap();
    let rf = g.relu(f1);
    let f2 = g.dense(rf, w5, Some(b5)).unwrap();
    let sq = g.mul(f2, f2).unwrap();
    let out = g.sum(sq);
    let graph = g.finish(out);

    let mut params = ParamSet::new();
    for (name, shape) in [
        ("w1", vec![4usize, 4, 3, 6]), ("b1", vec![6]),
        ("w2", vec![4, 4, 6, 16]), ("b2", vec![16]),
        ("w3", vec![4, 4, 16, 96]), ("b3", vec![96]),
        ("w4", vec![96, 64]), ("b4", vec![64]),
        ("w5", vec![64, 1]), ("b5", vec![1]),
    ] {
        let numel: usize = shape.iter().product();
        params
            .insert(name, Tensor::new(shape, vec![0.01; numel]).unwrap())
            .unwrap();
    }
    let xv = Tensor::new(vec![n, 28, 28, 3], vec![0.5; n * 28 * 28 * 3]).unwrap();

    // warm up
    let (_, tape) = forward(&graph, &[("x", &xv)], &params).unwrap();
    let _ = backward(&graph, &tape, &params, 1.0).unwrap();

    let reps = 20;
    let t = Instant::now();
    for _ in 0..reps {
        let _ = forward(&graph, &[("x", &xv)], &params).unwrap();
    }
    println!("forward: {:?}/it", t.elapsed() / reps);

    let t = Instant::now();
    for _ in 0..reps {
        let (_, tape) = forward(&graph, &[("x", &xv)], &params).unwrap();
        let _ = backward(&graph, &tape, &params, 1.0).unwrap();
    }
    println!("fwd+bwd: {:?}/it", t.elapsed() / reps);
}
