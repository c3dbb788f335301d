//! Computation graphs: a topologically ordered list of primitive operations.
//!
//! A [`Graph`] is a reusable description of a computation over named inputs
//! and named parameters. Evaluating it with [`crate::forward`] records a
//! [`crate::Tape`] of intermediate values; [`crate::backward`] replays the
//! tape in reverse to accumulate parameter gradients.

use crate::error::GraphError;

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub(crate) fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Primitive operations. The set covers dense affine maps, valid 2-D
/// convolution (stride 1), 2x2 max pooling, ReLU, row-wise log-softmax, the
/// pointwise maps exp/log/sqrt/abs/softplus/huber, elementwise arithmetic,
/// concatenation, row sums, and full reductions.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    /// Named graph input (slot index into the graph's input table).
    Input(usize),
    /// Named parameter leaf (slot index into the graph's param table).
    Param(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    /// Square root with subgradient 0 at zero input.
    Sqrt(NodeId),
    /// Absolute value with subgradient 0 at zero input.
    Abs(NodeId),
    Relu(NodeId),
    /// Numerically stable log(1 + exp(x)).
    Softplus(NodeId),
    /// Pointwise Huber map of a residual: 0.5 x^2 inside |x| <= delta,
    /// delta (|x| - delta/2) outside.
    Huber(NodeId, f64),
    /// x [n, i] * w [i, o] (+ b [o]) -> [n, o]
    Dense {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    /// NHWC: x [n, h, w, c] * k [kh, kw, c, o] + b [o]
    /// -> [n, h-kh+1, w-kw+1, o]
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    /// 2x2 max pooling with stride 2 over NHWC (floor on odd extents).
    MaxPool2(NodeId),
    /// Same data, new shape with identical element count.
    Reshape(NodeId),
    /// Identity that fails evaluation when any element is negative.
    /// `&'static str` names the operation enforcing the contract.
    AssertNonNeg(NodeId, &'static str),
    /// Row-wise log softmax over the last axis of [n, k].
    LogSoftmax(NodeId),
    /// Sum over the last axis: [n, k] -> [n].
    RowSum(NodeId),
    /// Concatenation of two 1-D tensors.
    Concat(NodeId, NodeId),
    /// Sum of all elements -> [1].
    Sum(NodeId),
    /// Mean of all elements -> [1].
    Mean(NodeId),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
}

/// A reusable computation description with a designated scalar output.
#[derive(Debug, Clone)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) inputs: Vec<(String, Vec<usize>)>,
    pub(crate) params: Vec<(String, Vec<usize>)>,
    pub(crate) output: NodeId,
}

impl Graph {
    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn node_shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.idx()].shape
    }

    /// Names and shapes of the inputs the graph expects.
    pub fn input_spec(&self) -> &[(String, Vec<usize>)] {
        &self.inputs
    }

    /// Names and shapes of the parameters the graph expects.
    pub fn param_spec(&self) -> &[(String, Vec<usize>)] {
        &self.params
    }
}

/// Incremental builder. Each method performs shape inference and fails with
/// an error naming the primitive when operands are incompatible.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    inputs: Vec<(String, Vec<usize>)>,
    params: Vec<(String, Vec<usize>)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, shape });
        id
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.idx()].shape
    }

    /// Shape of an already-built node.
    pub fn node_shape(&self, id: NodeId) -> &[usize] {
        self.shape(id)
    }

    /// Declares a named input of a fixed shape.
    pub fn input(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<NodeId, GraphError> {
        let name = name.into();
        if self.inputs.iter().any(|(n, _)| *n == name) {
            return Err(GraphError::DuplicateLeaf { kind: "input", name });
        }
        let slot = self.inputs.len();
        self.inputs.push((name, shape.clone()));
        Ok(self.push(Op::Input(slot), shape))
    }

    /// Declares a named parameter leaf of a fixed shape.
    pub fn param(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<NodeId, GraphError> {
        let name = name.into();
        if self.params.iter().any(|(n, _)| *n == name) {
            return Err(GraphError::DuplicateLeaf { kind: "param", name });
        }
        let slot = self.params.len();
        self.params.push((name, shape.clone()));
        Ok(self.push(Op::Param(slot), shape))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        make: impl FnOnce(NodeId, NodeId) -> Op,
    ) -> Result<NodeId, GraphError> {
        if self.shape(a) != self.shape(b) {
            return Err(GraphError::ShapeMismatch {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(make(a, b), shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.elementwise("add", a, b, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.elementwise("sub", a, b, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.elementwise("mul", a, b, Op::Mul)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::AddScalar(a, c), shape)
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::MulScalar(a, c), shape)
    }

    fn unary(&mut self, a: NodeId, make: impl FnOnce(NodeId) -> Op) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(make(a), shape)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Log)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sqrt)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Abs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus)
    }

    pub fn huber(&mut self, a: NodeId, delta: f64) -> Result<NodeId, GraphError> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(GraphError::Invalid {
                op: "huber",
                msg: format!("transition point must be positive and finite, got {delta}"),
            });
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Huber(a, delta), shape))
    }

    /// `max(a, floor)` built from ReLU; gradient is zero below the floor.
    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let shifted = self.add_scalar(a, -floor);
        let rectified = self.relu(shifted);
        self.add_scalar(rectified, floor)
    }

    /// Affine map: `x [n, i] * w [i, o]`, plus `b [o]` when supplied.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, GraphError> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 {
            return Err(GraphError::BadRank {
                op: "dense",
                expected: "rank-2 input [n, i]",
                got: xs.to_vec(),
            });
        }
        if ws.len() != 2 || ws[0] != xs[1] {
            return Err(GraphError::ShapeMismatch {
                op: "dense",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs.len() != 1 || bs[0] != ws[1] {
                return Err(GraphError::ShapeMismatch {
                    op: "dense",
                    lhs: ws.to_vec(),
                    rhs: bs.to_vec(),
                });
            }
        }
        let shape = vec![xs[0], ws[1]];
        Ok(self.push(Op::Dense { x, w, b }, shape))
    }

    /// Valid 2-D convolution, stride 1, NHWC:
    /// `x [n, h, w, c] * k [kh, kw, c, o] + b [o]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 {
            return Err(GraphError::BadRank {
                op: "conv2d",
                expected: "rank-4 input [n, h, w, c]",
                got: xs.to_vec(),
            });
        }
        if ws.len() != 4 || ws[2] != xs[3] {
            return Err(GraphError::ShapeMismatch {
                op: "conv2d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if bs.len() != 1 || bs[0] != ws[3] {
            return Err(GraphError::ShapeMismatch {
                op: "conv2d",
                lhs: ws.to_vec(),
                rhs: bs.to_vec(),
            });
        }
        let (h, w_in, kh, kw) = (xs[1], xs[2], ws[0], ws[1]);
        if kh > h || kw > w_in {
            return Err(GraphError::KernelTooLarge {
                op: "conv2d",
                kernel: ws.to_vec(),
                input: xs.to_vec(),
            });
        }
        let shape = vec![xs[0], h - kh + 1, w_in - kw + 1, ws[3]];
        Ok(self.push(Op::Conv2d { x, w, b }, shape))
    }

    /// 2x2 max pooling with stride 2 over NHWC.
    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let xs = self.shape(x);
        if xs.len() != 4 {
            return Err(GraphError::BadRank {
                op: "max_pool2",
                expected: "rank-4 input [n, h, w, c]",
                got: xs.to_vec(),
            });
        }
        if xs[1] < 2 || xs[2] < 2 {
            return Err(GraphError::KernelTooLarge {
                op: "max_pool2",
                kernel: vec![2, 2],
                input: xs.to_vec(),
            });
        }
        let shape = vec![xs[0], xs[1] / 2, xs[2] / 2, xs[3]];
        Ok(self.push(Op::MaxPool2(x), shape))
    }

    /// Reinterprets `x` with a new shape of equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, GraphError> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) || numel != self.shape(x).iter().product::<usize>() {
            return Err(GraphError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        Ok(self.push(Op::Reshape(x), shape))
    }

    /// Row-wise log softmax over the class axis of `[n, k]`.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(GraphError::BadRank {
                op: "log_softmax",
                expected: "rank-2 logits [n, k]",
                got: xs.to_vec(),
            });
        }
        let shape = xs.to_vec();
        Ok(self.push(Op::LogSoftmax(x), shape))
    }

    /// Sum over the last axis: `[n, k] -> [n]`.
    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(GraphError::BadRank {
                op: "row_sum",
                expected: "rank-2 input [n, k]",
                got: xs.to_vec(),
            });
        }
        let shape = vec![xs[0]];
        Ok(self.push(Op::RowSum(x), shape))
    }

    /// Concatenates two 1-D tensors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 1 || sb.len() != 1 {
            return Err(GraphError::BadRank {
                op: "concat",
                expected: "two rank-1 operands",
                got: if sa.len() != 1 { sa.to_vec() } else { sb.to_vec() },
            });
        }
        let shape = vec![sa[0] + sb[0]];
        Ok(self.push(Op::Concat(a, b), shape))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), vec![1])
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a), vec![1])
    }

    /// Identity node that makes evaluation fail if any element of `a` is
    /// negative; `ctx` names the contract being enforced.
    pub fn assert_non_negative(&mut self, a: NodeId, ctx: &'static str) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::AssertNonNeg(a, ctx), shape)
    }

    /// Seals the graph with `output` as the designated result node.
    pub fn finish(self, output: NodeId) -> Graph {
        assert!(output.idx() < self.nodes.len(), "output node out of range");
        Graph {
            nodes: self.nodes,
            inputs: self.inputs,
            params: self.params,
            output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut g = GraphBuilder::new();
        let a = g.input("a", vec![2, 3]).unwrap();
        let b = g.input("b", vec![3, 2]).unwrap();
        let err = g.add(a, b).unwrap_err();
        assert!(err.to_string().starts_with("add:"), "{err}");
    }

    #[test]
    fn conv_shape_inference_valid_stride_one() {
        let mut g = GraphBuilder::new();
        let x = g.input("x", vec![1, 28, 28, 1]).unwrap();
        let w = g.param("w", vec![4, 4, 1, 6]).unwrap();
        let b = g.param("b", vec![6]).unwrap();
        let y = g.conv2d(x, w, b).unwrap();
        // 28 - 4 + 1 = 25 on both spatial axes, 6 output channels.
        assert_eq!(g.shape(y), &[1, 25, 25, 6]);
        let p = g.max_pool2(y).unwrap();
        assert_eq!(g.shape(p), &[1, 12, 12, 6]);
    }

    #[test]
    fn duplicate_leaves_rejected() {
        let mut g = GraphBuilder::new();
        g.input("x", vec![1]).unwrap();
        assert!(g.input("x", vec![2]).is_err());
        g.param("w", vec![1]).unwrap();
        assert!(g.param("w", vec![1]).is_err());
    }

    #[test]
    fn kernel_larger_than_input_rejected() {
        let mut g = GraphBuilder::new();
        let x = g.input("x", vec![1, 3, 3, 1]).unwrap();
        let w = g.param("w", vec![4, 4, 1, 2]).unwrap();
        let b = g.param("b", vec![2]).unwrap();
        assert!(matches!(
            g.conv2d(x, w, b),
            Err(GraphError::KernelTooLarge { .. })
        ));
    }
}
