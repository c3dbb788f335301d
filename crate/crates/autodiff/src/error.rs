//! Error types for tensor construction, graph building, and execution.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("tensor shape {shape:?} has an empty or zero extent")]
    EmptyExtent { shape: Vec<usize> },
    #[error("tensor shape {shape:?} implies a different element count than {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter group `{name}` already exists")]
    DuplicateName { name: String },
    #[error("flat vector has {got} values, parameter set has {expected}")]
    FlatLengthMismatch { expected: usize, got: usize },
    #[error("parameter sets differ in group names or shapes")]
    StructureMismatch,
}

/// Failures while building a computation graph. Shape mismatches name the
/// offending primitive so misassembled models are easy to locate.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{op}: operand shapes {lhs:?} and {rhs:?} are incompatible")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expects {expected}, got shape {got:?}")]
    BadRank {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("{op}: kernel {kernel:?} does not fit input {input:?} (valid convolution, stride 1)")]
    KernelTooLarge {
        op: &'static str,
        kernel: Vec<usize>,
        input: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateLeaf { kind: &'static str, name: String },
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("input `{name}` was not bound")]
    MissingInput { name: String },
    #[error("parameter `{name}` was not supplied")]
    MissingParam { name: String },
    #[error("leaf `{name}`: expected shape {expected:?}, got {got:?}")]
    LeafShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tape was recorded with different parameter values (replay against mutated params)")]
    StaleTape,
    #[error("{ctx}: negative operand {value} at flat index {index}")]
    NegativeInput {
        ctx: &'static str,
        value: f64,
        index: usize,
    },
    #[error("seed gradient {0} is not finite")]
    BadSeed(f64),
    #[error("objective is not finite at perturbed parameter `{name}`[{index}]")]
    NonFiniteObjective { name: String, index: usize },
    #[error("gradient check step {0} must lie in (0, 1e-3]")]
    BadStep(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Param(#[from] ParamError),
}
