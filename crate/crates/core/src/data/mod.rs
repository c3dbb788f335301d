//! Data sources: raw digit ingestion, synthetic spurious-feature toys,
//! colored/rotated digit construction, label-noise injection, and paired
//! augmentation assembly with partial-fraction control.

mod idx;
mod mnist;
mod paired;
mod toy;

pub use idx::load_idx;
pub use mnist::{
    binarize_digits, colorize, inject_label_noise, rotate, rotate_by_degrees, ColorScheme,
    ContinuousRotation, NoiseMode, RotationScheme, SchemeId,
};
pub use paired::{digit_tensor, make_paired_dataset, Augmenter, BaseSample, Carrier, PairedDataset};
pub use toy::{
    export_csv, gen_logistic_toy, gen_robust_regression, gen_spurious_regression,
    RobustRegressionParams, ToyDataset,
};

use dair_autodiff::Tensor;
use serde::{Deserialize, Serialize};

/// A 28x28 grayscale digit with pixel intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RawDigit {
    pub pixels: Vec<f64>,
    pub digit: u8,
}

pub const DIGIT_SIDE: usize = 28;
pub const DIGIT_PIXELS: usize = DIGIT_SIDE * DIGIT_SIDE;

/// Target of one sample: a class index or a regression value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Label::Class(_) => None,
            Label::Value(v) => Some(*v),
        }
    }
}

/// An original example, its optional augmented twin, and the shared label.
/// Augmentation is label-preserving, so the twin never carries its own.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub original: Tensor,
    pub augmented: Option<Tensor>,
    pub label: Label,
    pub pair_id: u64,
}

impl PairedSample {
    pub fn new(original: Tensor, augmented: Option<Tensor>, label: Label, pair_id: u64) -> Self {
        if let Some(aug) = &augmented {
            assert_eq!(
                original.shape(),
                aug.shape(),
                "augmented twin must match the original's shape"
            );
        }
        Self {
            original,
            augmented,
            label,
            pair_id,
        }
    }

    pub fn is_paired(&self) -> bool {
        self.augmented.is_some()
    }
}
