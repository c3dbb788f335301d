//! Forward evaluation and reverse-mode gradient accumulation.

use crate::error::ExecError;
use crate::graph::{Graph, Node, NodeId, Op};
use crate::kernels::{
    conv2d_backward, conv2d_forward, log_softmax_backward, log_softmax_forward, matmul,
    max_pool2_backward, max_pool2_forward, sigmoid, softplus, ConvGeom,
};
use crate::param::ParamSet;
use crate::tensor::Tensor;

/// Execution record of one forward pass: the value of every node, in graph
/// order, plus a fingerprint of the parameter values it was recorded with.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Tensor>,
    output: NodeId,
    param_digest: u64,
}

impl Tape {
    pub fn output_value(&self) -> &Tensor {
        &self.values[self.output.idx()]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.idx()]
    }

    /// Re-runs the recorded computation with the given bindings. Fails if
    /// `params` no longer match the values the tape was recorded against.
    pub fn replay(
        &self,
        graph: &Graph,
        inputs: &[(&str, &Tensor)],
        params: &ParamSet,
    ) -> Result<Tensor, ExecError> {
        if digest_params(graph, params)? != self.param_digest {
            return Err(ExecError::StaleTape);
        }
        let (out, _) = forward(graph, inputs, params)?;
        Ok(out)
    }
}

fn digest_params(graph: &Graph, params: &ParamSet) -> Result<u64, ExecError> {
    // FNV-1a over the bit patterns of every parameter the graph references.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (name, shape) in &graph.params {
        let t = params
            .get(name)
            .ok_or_else(|| ExecError::MissingParam { name: name.clone() })?;
        if t.shape() != shape.as_slice() {
            return Err(ExecError::LeafShape {
                name: name.clone(),
                expected: shape.clone(),
                got: t.shape().to_vec(),
            });
        }
        mix(name.as_bytes());
        for v in t.data() {
            mix(&v.to_bits().to_le_bytes());
        }
    }
    Ok(h)
}

fn bind<'a>(
    inputs: &'a [(&str, &Tensor)],
    name: &str,
) -> Option<&'a Tensor> {
    inputs.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Evaluates the graph and records a [`Tape`]. Inputs are bound by name and
/// validated against the declared shapes.
pub fn forward(
    graph: &Graph,
    inputs: &[(&str, &Tensor)],
    params: &ParamSet,
) -> Result<(Tensor, Tape), ExecError> {
    let mut values: Vec<Tensor> = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let t = eval_node(graph, node, &values, inputs, params)?;
        debug_assert_eq!(t.shape(), node.shape.as_slice());
        values.push(t);
    }
    let tape = Tape {
        output: graph.output,
        param_digest: digest_params(graph, params)?,
        values,
    };
    Ok((tape.output_value().clone(), tape))
}

fn eval_node(
    graph: &Graph,
    node: &Node,
    values: &[Tensor],
    inputs: &[(&str, &Tensor)],
    params: &ParamSet,
) -> Result<Tensor, ExecError> {
    let v = |id: NodeId| &values[id.idx()];
    macro_rules! map {
        ($id:expr, $f:expr) => {{
            let src = v($id);
            let f = $f;
            let data = src.data().iter().map(|&x| f(x)).collect();
            Tensor::from_parts(node.shape.clone(), data)
        }};
    }
    macro_rules! zip {
        ($a:expr, $b:expr, $f:expr) => {{
            let (ta, tb) = (v($a), v($b));
            let f = $f;
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::from_parts(node.shape.clone(), data)
        }};
    }

    Ok(match &node.op {
        Op::Input(slot) => {
            let (name, shape) = &graph.inputs[*slot];
            let t = bind(inputs, name)
                .ok_or_else(|| ExecError::MissingInput { name: name.clone() })?;
            if t.shape() != shape.as_slice() {
                return Err(ExecError::LeafShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    got: t.shape().to_vec(),
                });
            }
            t.clone()
        }
        Op::Param(slot) => {
            let (name, shape) = &graph.params[*slot];
            let t = params
                .get(name)
                .ok_or_else(|| ExecError::MissingParam { name: name.clone() })?;
            if t.shape() != shape.as_slice() {
                return Err(ExecError::LeafShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    got: t.shape().to_vec(),
                });
            }
            t.clone()
        }
        Op::Add(a, b) => zip!(*a, *b, |x, y| x + y),
        Op::Sub(a, b) => zip!(*a, *b, |x, y| x - y),
        Op::Mul(a, b) => zip!(*a, *b, |x, y| x * y),
        Op::AddScalar(a, c) => map!(*a, |x| x + c),
        Op::MulScalar(a, c) => map!(*a, |x| x * c),
        Op::Exp(a) => map!(*a, |x: f64| x.exp()),
        Op::Log(a) => map!(*a, |x: f64| x.ln()),
        Op::Sqrt(a) => map!(*a, |x: f64| x.sqrt()),
        Op::Abs(a) => map!(*a, |x: f64| x.abs()),
        Op::Relu(a) => map!(*a, |x: f64| x.max(0.0)),
        Op::Softplus(a) => map!(*a, softplus),
        Op::Huber(a, delta) => {
            let d = *delta;
            map!(*a, move |x: f64| {
                if x.abs() <= d {
                    0.5 * x * x
                } else {
                    d * (x.abs() - 0.5 * d)
                }
            })
        }
        Op::Dense { x, w, b } => {
            let (tx, tw) = (v(*x), v(*w));
            let (n, i) = (tx.shape()[0], tx.shape()[1]);
            let o = tw.shape()[1];
            let mut out = vec![0.0; n * o];
            if let Some(b) = b {
                let tb = v(*b);
                for chunk in out.chunks_exact_mut(o) {
                    chunk.copy_from_slice(tb.data());
                }
            }
            matmul(tx.data(), false, tw.data(), false, &mut out, n, i, o, 1.0, 1.0);
            Tensor::from_parts(node.shape.clone(), out)
        }
        Op::Conv2d { x, w, b } => {
            let (tx, tw, tb) = (v(*x), v(*w), v(*b));
            let g = ConvGeom::new(tx.shape(), tw.shape());
            let mut out = vec![0.0; g.out_positions() * g.oc];
            conv2d_forward(tx.data(), tw.data(), tb.data(), g, &mut out);
            Tensor::from_parts(node.shape.clone(), out)
        }
        Op::MaxPool2(a) => {
            let tx = v(*a);
            let s = tx.shape();
            let mut out = vec![0.0; node.shape.iter().product()];
            max_pool2_forward(tx.data(), s[0], s[1], s[2], s[3], &mut out);
            Tensor::from_parts(node.shape.clone(), out)
        }
        Op::LogSoftmax(a) => {
            let tx = v(*a);
            let (rows, k) = (tx.shape()[0], tx.shape()[1]);
            let mut out = vec![0.0; rows * k];
            log_softmax_forward(tx.data(), rows, k, &mut out);
            Tensor::from_parts(node.shape.clone(), out)
        }
        Op::RowSum(a) => {
            let tx = v(*a);
            let (rows, k) = (tx.shape()[0], tx.shape()[1]);
            let data = (0..rows)
                .map(|r| tx.data()[r * k..(r + 1) * k].iter().sum())
                .collect();
            Tensor::from_parts(node.shape.clone(), data)
        }
        Op::Concat(a, b) => {
            let mut data = Vec::with_capacity(node.shape[0]);
            data.extend_from_slice(v(*a).data());
            data.extend_from_slice(v(*b).data());
            Tensor::from_parts(node.shape.clone(), data)
        }
        Op::Sum(a) => Tensor::scalar(v(*a).data().iter().sum()),
        Op::Mean(a) => {
            let t = v(*a);
            Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64)
        }
        Op::Reshape(a) => Tensor::from_parts(node.shape.clone(), v(*a).data().to_vec()),
        Op::AssertNonNeg(a, ctx) => {
            let t = v(*a);
            if let Some(idx) = t.data().iter().position(|&x| x < 0.0) {
                return Err(ExecError::NegativeInput {
                    ctx,
                    value: t.data()[idx],
                    index: idx,
                });
            }
            t.clone()
        }
    })
}

/// Marks nodes whose value depends on at least one parameter; gradients
/// only need to flow into those subtrees.
fn needs_grad_mask(graph: &Graph) -> Vec<bool> {
    let mut mask = vec![false; graph.nodes.len()];
    for (idx, node) in graph.nodes.iter().enumerate() {
        let mut any = false;
        let mut check = |id: &NodeId| {
            if mask[id.idx()] {
                any = true;
            }
        };
        match &node.op {
            Op::Param(_) => any = true,
            Op::Input(_) => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Concat(a, b) => {
                check(a);
                check(b);
            }
            Op::Dense { x, w, b } => {
                check(x);
                check(w);
                if let Some(b) = b {
                    check(b);
                }
            }
            Op::Conv2d { x, w, b } => {
                check(x);
                check(w);
                check(b);
            }
            Op::AddScalar(a, _)
            | Op::MulScalar(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Abs(a)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Huber(a, _)
            | Op::MaxPool2(a)
            | Op::LogSoftmax(a)
            | Op::RowSum(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::AssertNonNeg(a, _) => check(a),
        }
        mask[idx] = any;
    }
    mask
}

/// Reverse pass: seeds the output with `seed` and accumulates gradients for
/// every parameter the graph references. The returned set has the same
/// structure as `params`; parameters the graph never touches get zeros.
pub fn backward(
    graph: &Graph,
    tape: &Tape,
    params: &ParamSet,
    seed: f64,
) -> Result<ParamSet, ExecError> {
    if !seed.is_finite() {
        return Err(ExecError::BadSeed(seed));
    }
    if digest_params(graph, params)? != tape.param_digest {
        return Err(ExecError::StaleTape);
    }

    let needs = needs_grad_mask(graph);
    let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; graph.nodes.len()];
    let out_idx = graph.output.idx();
    adjoints[out_idx] = Some(vec![seed; tape.values[out_idx].numel()]);

    let mut grads = params.zeros_like();

    for idx in (0..graph.nodes.len()).rev() {
        let Some(dy) = adjoints[idx].take() else {
            continue;
        };
        if !needs[idx] {
            continue;
        }
        let node = &graph.nodes[idx];
        propagate(graph, node, idx, &dy, tape, &needs, &mut adjoints, &mut grads)?;
    }
    Ok(grads)
}

/// Adds `delta` into the adjoint slot of `id` if gradients flow there.
fn accumulate(
    adjoints: &mut [Option<Vec<f64>>],
    needs: &[bool],
    tape: &Tape,
    id: NodeId,
    delta: &[f64],
) {
    if !needs[id.idx()] {
        return;
    }
    let slot = adjoints[id.idx()].get_or_insert_with(|| vec![0.0; tape.values[id.idx()].numel()]);
    for (a, d) in slot.iter_mut().zip(delta) {
        *a += d;
    }
}

fn accumulate_with(
    adjoints: &mut [Option<Vec<f64>>],
    needs: &[bool],
    tape: &Tape,
    id: NodeId,
    mut f: impl FnMut(&mut [f64]),
) {
    if !needs[id.idx()] {
        return;
    }
    let slot = adjoints[id.idx()].get_or_insert_with(|| vec![0.0; tape.values[id.idx()].numel()]);
    f(slot);
}

#[allow(clippy::too_many_arguments)]
fn propagate(
    graph: &Graph,
    node: &Node,
    idx: usize,
    dy: &[f64],
    tape: &Tape,
    needs: &[bool],
    adjoints: &mut [Option<Vec<f64>>],
    grads: &mut ParamSet,
) -> Result<(), ExecError> {
    let val = |id: NodeId| tape.values[id.idx()].data();
    match &node.op {
        Op::Input(_) => {}
        Op::Param(slot) => {
            let (name, _) = &graph.params[*slot];
            let g = grads
                .get_mut(name)
                .expect("grads built from the same param structure");
            for (a, d) in g.data_mut().iter_mut().zip(dy) {
                *a += d;
            }
        }
        Op::Add(a, b) => {
            accumulate(adjoints, needs, tape, *a, dy);
            accumulate(adjoints, needs, tape, *b, dy);
        }
        Op::Sub(a, b) => {
            accumulate(adjoints, needs, tape, *a, dy);
            accumulate_with(adjoints, needs, tape, *b, |slot| {
                for (s, d) in slot.iter_mut().zip(dy) {
                    *s -= d;
                }
            });
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), y) in slot.iter_mut().zip(dy).zip(&vb) {
                    *s += d * y;
                }
            });
            accumulate_with(adjoints, needs, tape, *b, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(&va) {
                    *s += d * x;
                }
            });
        }
        Op::AddScalar(a, _) => accumulate(adjoints, needs, tape, *a, dy),
        Op::MulScalar(a, c) => {
            let c = *c;
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for (s, d) in slot.iter_mut().zip(dy) {
                    *s += d * c;
                }
            });
        }
        Op::Exp(a) => {
            let out = tape.values[idx].data();
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), o) in slot.iter_mut().zip(dy).zip(out) {
                    *s += d * o;
                }
            });
        }
        Op::Log(a) => {
            let va = val(*a);
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(va) {
                    *s += d / x;
                }
            });
        }
        Op::Sqrt(a) => {
            let out = tape.values[idx].data();
            // Subgradient 0 at zero input keeps vanished losses from
            // emitting infinite gradients.
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), o) in slot.iter_mut().zip(dy).zip(out) {
                    if *o > 0.0 {
                        *s += d / (2.0 * o);
                    }
                }
            });
        }
        Op::Abs(a) => {
            let va = val(*a);
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(va) {
                    *s += d * if *x > 0.0 {
                        1.0
                    } else if *x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            });
        }
        Op::Relu(a) => {
            let va = val(*a);
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(va) {
                    if *x > 0.0 {
                        *s += d;
                    }
                }
            });
        }
        Op::Softplus(a) => {
            let va = val(*a);
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(va) {
                    *s += d * sigmoid(*x);
                }
            });
        }
        Op::Huber(a, delta) => {
            let d0 = *delta;
            let va = val(*a);
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for ((s, d), x) in slot.iter_mut().zip(dy).zip(va) {
                    let g = if x.abs() <= d0 { *x } else { d0 * x.signum() };
                    *s += d * g;
                }
            });
        }
        Op::Dense { x, w, b } => {
            let (tx, tw) = (&tape.values[x.idx()], &tape.values[w.idx()]);
            let (n, i) = (tx.shape()[0], tx.shape()[1]);
            let o = tw.shape()[1];
            if needs[x.idx()] {
                // dx [n, i] += dy [n, o] * w^T
                let mut dx = vec![0.0; n * i];
                matmul(dy, false, tw.data(), true, &mut dx, n, o, i, 1.0, 0.0);
                accumulate(adjoints, needs, tape, *x, &dx);
            }
            // dw [i, o] += x^T * dy
            let mut dw = vec![0.0; i * o];
            matmul(tx.data(), true, dy, false, &mut dw, i, n, o, 1.0, 0.0);
            accumulate(adjoints, needs, tape, *w, &dw);
            if let Some(b) = b {
                // db [o] += row sums of dy
                let mut db = vec![0.0; o];
                for chunk in dy.chunks_exact(o) {
                    for (acc, d) in db.iter_mut().zip(chunk) {
                        *acc += d;
                    }
                }
                accumulate(adjoints, needs, tape, *b, &db);
            }
        }
        Op::Conv2d { x, w, b } => {
            let (tx, tw) = (&tape.values[x.idx()], &tape.values[w.idx()]);
            let g = ConvGeom::new(tx.shape(), tw.shape());
            let mut dw = vec![0.0; tw.numel()];
            let mut db = vec![0.0; g.oc];
            if needs[x.idx()] {
                let mut dx = vec![0.0; tx.numel()];
                conv2d_backward(tx.data(), tw.data(), dy, g, Some(&mut dx), &mut dw, &mut db);
                accumulate(adjoints, needs, tape, *x, &dx);
            } else {
                conv2d_backward(tx.data(), tw.data(), dy, g, None, &mut dw, &mut db);
            }
            accumulate(adjoints, needs, tape, *w, &dw);
            accumulate(adjoints, needs, tape, *b, &db);
        }
        Op::MaxPool2(a) => {
            let tx = &tape.values[a.idx()];
            let s = tx.shape();
            let mut dx = vec![0.0; tx.numel()];
            max_pool2_backward(tx.data(), dy, s[0], s[1], s[2], s[3], &mut dx);
            accumulate(adjoints, needs, tape, *a, &dx);
        }
        Op::LogSoftmax(a) => {
            let out = tape.values[idx].data();
            let (rows, k) = (node.shape[0], node.shape[1]);
            let mut dx = vec![0.0; rows * k];
            log_softmax_backward(out, dy, rows, k, &mut dx);
            accumulate(adjoints, needs, tape, *a, &dx);
        }
        Op::RowSum(a) => {
            let k = tape.values[a.idx()].shape()[1];
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for (r, d) in dy.iter().enumerate() {
                    for s in &mut slot[r * k..(r + 1) * k] {
                        *s += d;
                    }
                }
            });
        }
        Op::Concat(a, b) => {
            let na = tape.values[a.idx()].numel();
            accumulate(adjoints, needs, tape, *a, &dy[..na]);
            accumulate(adjoints, needs, tape, *b, &dy[na..]);
        }
        Op::Sum(a) => {
            let d = dy[0];
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for s in slot.iter_mut() {
                    *s += d;
                }
            });
        }
        Op::Mean(a) => {
            let n = tape.values[a.idx()].numel() as f64;
            let d = dy[0] / n;
            accumulate_with(adjoints, needs, tape, *a, |slot| {
                for s in slot.iter_mut() {
                    *s += d;
                }
            });
        }
        Op::Reshape(a) | Op::AssertNonNeg(a, _) => {
            accumulate(adjoints, needs, tape, *a, dy);
        }
    }
    Ok(())
}
