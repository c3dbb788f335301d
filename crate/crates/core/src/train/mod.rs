//! Training: model descriptions, optimizers, the paired-augmentation
//! training loop, run-to-convergence mode, and evaluation.

mod model;
mod optim;
mod trainer;

pub use model::ModelSpec;
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{
    consistency_eval, correctness_bits, decide_class, evaluate, train, train_to_tolerance,
    Branch, Convergence, EpochStats, EvalMetrics, SampleStream, ScheduleSpan, StepStats, Task,
    TrainConfig, TrainHistory,
};
