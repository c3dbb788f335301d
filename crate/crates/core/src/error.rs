//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("huber transition point must be positive and finite, got {delta}")]
    BadHuberDelta { delta: f64 },
    #[error("tilt must be nonzero and finite, got {t}")]
    BadTilt { t: f64 },
    #[error("lambda must be nonnegative and finite, got {lambda}")]
    BadLambda { lambda: f64 },
    #[error("class index {class} out of range for {k} classes")]
    ClassOutOfRange { class: usize, k: usize },
    #[error("objective mode needs an augmented branch but none was supplied")]
    MissingAugmentedBranch,
    #[error("output-distribution regularizer needs distribution nodes for both branches")]
    MissingDistribution,
    #[error("invalid output distribution: {reason}")]
    BadDistribution { reason: &'static str },
    #[error("correctness bitvectors differ in length: {original} vs {augmented}")]
    BitvectorLengthMismatch { original: usize, augmented: usize },
    #[error("losses must be nonnegative, got {value}")]
    NegativeLoss { value: f64 },
    #[error(transparent)]
    Graph(#[from] dair_autodiff::GraphError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("variance {name} must be {requirement}, got {value}")]
    BadVariance {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("closed form denominator vanishes in this parameter regime: {regime}")]
    DegenerateDenominator { regime: String },
    #[error("normal matrix is singular or numerically singular (condition estimate {cond_estimate:.3e})")]
    SingularSystem { cond_estimate: f64 },
    #[error("lambda must be positive (the bound is unbounded at lambda = 0), got {lambda}")]
    UnboundedLambda { lambda: f64 },
    #[error("class count must be at least 2, got {k}")]
    BadClassCount { k: usize },
    #[error("dimension must be at least 1, got {value}")]
    BadDimension { value: usize },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{got:08x}, expected 0x{expected:08x}")]
    MagicMismatch {
        path: String,
        got: u32,
        expected: u32,
    },
    #[error("{path}: file truncated ({got} bytes, needed {needed})")]
    Truncated {
        path: String,
        got: usize,
        needed: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: unexpected dimensions {dims:?}, expected 28x28 images")]
    BadDimensions { path: String, dims: Vec<u32> },
    #[error("scheme {scheme} is not a {expected} scheme")]
    WrongSchemeFamily {
        scheme: &'static str,
        expected: &'static str,
    },
    #[error("digit {digit} out of range 0-9")]
    BadDigit { digit: u8 },
    #[error("binary label {label} out of range {{0, 1}}")]
    BadBinaryLabel { label: usize },
    #[error("probability {p} outside [0, 1]")]
    BadProbability { p: f64 },
    #[error("fraction {f} outside [0, 1]")]
    BadFraction { f: f64 },
    #[error("sample count must be at least 1")]
    EmptyDataset,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("objective became non-finite ({value}) at epoch {epoch}, step {step}")]
    NonFiniteObjective { value: f64, epoch: usize, step: usize },
    #[error("learning-rate schedule spans cover {covered} epochs but the run has {epochs}")]
    ScheduleMismatch { covered: usize, epochs: usize },
    #[error("learning rate must be positive, got {lr}")]
    BadLearningRate { lr: f64 },
    #[error("gradient tolerance must be positive, got {tol}")]
    BadTolerance { tol: f64 },
    #[error("run-to-convergence requires full-batch mode and a tolerance")]
    MissingTolerance,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("consistency evaluation requires every test sample to carry an augmented twin")]
    UnpairedTestSample,
    #[error("model emits {got} outputs, objective expects {expected}")]
    ModelObjectiveMismatch { got: String, expected: String },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Graph(#[from] dair_autodiff::GraphError),
    #[error(transparent)]
    Exec(#[from] dair_autodiff::ExecError),
    #[error(transparent)]
    Param(#[from] dair_autodiff::ParamError),
    #[error(transparent)]
    Data(#[from] DataError),
}
