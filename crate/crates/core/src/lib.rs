//! A consistency-regularization laboratory: the DAIR family of training
//! objectives (loss-space and output-space penalties) next to ERM and
//! DA-ERM baselines, exact closed-form oracles for the linear-regression
//! toy, synthetic and digit-image distribution-shift datasets, a seeded
//! trainer over a from-scratch autodiff engine, and a batch experiment
//! harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod oracle;
pub mod train;
pub mod util;

pub use dair_autodiff as autodiff;
