//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The primitive set is deliberately small — dense affine maps, valid
//! stride-1 convolution, 2x2 max pooling, ReLU, log-softmax, pointwise
//! exp/log/sqrt/abs/softplus/huber, elementwise arithmetic and reductions —
//! enough to express linear and logistic regressors, MLPs, and the small
//! convolutional classifiers this workspace trains, with gradients that are
//! verifiable against finite differences.
//!
//! Build a [`Graph`] once with [`GraphBuilder`], then evaluate it with
//! [`forward`] against named inputs and a [`ParamSet`]; [`backward`] replays
//! the recorded [`Tape`] to accumulate parameter gradients. Graphs, tapes,
//! and parameter sets are plain values with no shared interior state, so
//! concurrent runs may each own their instances freely.

mod check;
mod error;
mod exec;
mod graph;
mod kernels;
mod param;
mod tensor;

pub use check::{grad_check_fn, grad_check_graph};
pub use error::{ExecError, GraphError, ParamError, TensorError};
pub use exec::{backward, forward, Tape};
pub use graph::{Graph, GraphBuilder, NodeId};
pub use param::ParamSet;
pub use tensor::Tensor;
