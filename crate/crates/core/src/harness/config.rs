//! Experiment configuration: named presets and file-based overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{ColorScheme, ContinuousRotation, RotationScheme, SchemeId};
use crate::harness::HarnessError;
use crate::objectives::{LossKind, Mode, ObjectiveSpec, RegularizerKind};
use crate::oracle::ToyRegressionParams;
use crate::train::{ModelSpec, OptimizerKind, ScheduleSpan, TrainConfig};

/// Locations of the digit corpus in IDX format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    pub fn under(dir: &std::path::Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn exists(&self) -> bool {
        self.train_images.exists()
            && self.train_labels.exists()
            && self.test_images.exists()
            && self.test_labels.exists()
    }
}

/// Resolves the default corpus location: `$MNIST_DIR` if set, otherwise the
/// first `data/mnist` found walking up from the working directory.
pub fn default_mnist_paths() -> MnistPaths {
    if let Ok(dir) = std::env::var("MNIST_DIR") {
        return MnistPaths::under(std::path::Path::new(&dir));
    }
    let mut base = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
    for _ in 0..4 {
        let candidate = MnistPaths::under(&base.join("data").join("mnist"));
        if candidate.exists() {
            return candidate;
        }
        if !base.pop() {
            break;
        }
    }
    MnistPaths::under(std::path::Path::new("data/mnist"))
}

/// Data source of one experiment. The sweepable noise level means: augmenter
/// noise variance for the regression toy, spurious-channel noise variance
/// for the logistic toy, the corrupted-target fraction for robust
/// regression, and the label-corruption probability for the digit tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DataConfig {
    ToyRegression {
        n_train: usize,
        params: ToyRegressionParams,
    },
    ToyLogistic {
        n: usize,
        var_x: f64,
        var_t1: f64,
        var_t2: f64,
    },
    RobustRegression {
        n: usize,
        params: crate::data::RobustRegressionParams,
    },
    ColoredDigits {
        train_scheme: SchemeId,
        aug_scheme: SchemeId,
        test_scheme: SchemeId,
        /// Scheme coloring the original branch of the consistency pairs;
        /// the test scheme colors the augmented branch.
        cm_original_scheme: SchemeId,
        train_size: usize,
    },
    RotatedDigits {
        train_scheme: SchemeId,
        aug_scheme: SchemeId,
        test_scheme: SchemeId,
        /// Rotation degrees of the (original, augmented) consistency pair.
        cm_pair_degrees: (f64, f64),
        train_size: usize,
    },
}

/// A fully resolved experiment: model, objective, trainer settings, data
/// source, sweep axes, and replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub model: ModelSpec,
    pub objective: ObjectiveSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub lambdas: Vec<f64>,
    pub noises: Vec<f64>,
    pub fractions: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub mnist: Option<MnistPaths>,
    pub parallel: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.lambdas.is_empty() || self.noises.is_empty() || self.fractions.is_empty() {
            return Err(HarnessError::Config(
                "sweep axes must be nonempty".to_string(),
            ));
        }
        if self.replicates < 1 {
            return Err(HarnessError::Config(
                "replicate count must be at least 1".to_string(),
            ));
        }
        self.objective
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Short tag identifying the objective family of this experiment.
    pub fn objective_tag(&self) -> String {
        objective_tag(&self.objective)
    }
}

pub fn objective_tag(objective: &ObjectiveSpec) -> String {
    match objective.mode {
        Mode::Erm => "erm".to_string(),
        Mode::DaErm => "da-erm".to_string(),
        Mode::Dair => match objective.regularizer {
            RegularizerKind::None => "dair-none".to_string(),
            RegularizerKind::Sq => "dair-sq".to_string(),
            RegularizerKind::L1 => "dair-l1".to_string(),
            RegularizerKind::KlOutput => "dair-kl".to_string(),
            RegularizerKind::L2Output => "dair-l2out".to_string(),
        },
    }
}

pub const BASE_SEED_DEFAULT: u64 = 2024;

fn two_stage_digit_training() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        batch_size: Some(64),
        schedule: vec![
            ScheduleSpan { epochs: 20, lr: 0.005 },
            ScheduleSpan { epochs: 20, lr: 0.0005 },
        ],
        optimizer: OptimizerKind::Sgd,
        seed: 0,
        grad_tolerance: None,
        max_iterations: None,
    }
}

fn dair_sq(lambda: f64, loss: LossKind) -> ObjectiveSpec {
    ObjectiveSpec {
        loss,
        regularizer: RegularizerKind::Sq,
        lambda,
        mode: Mode::Dair,
    }
}

/// Builds a named preset. Every preset fully determines its defaults; CLI
/// flags and config files override fields afterwards.
pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let base = ExperimentConfig {
        preset: name.to_string(),
        model: ModelSpec::Linear { dim: 2 },
        objective: dair_sq(100.0, LossKind::Squared),
        train: two_stage_digit_training(),
        data: DataConfig::ToyRegression {
            n_train: 100_000,
            params: ToyRegressionParams::reference(),
        },
        lambdas: vec![100.0],
        noises: vec![0.1],
        fractions: vec![1.0],
        replicates: 3,
        base_seed: BASE_SEED_DEFAULT,
        out_dir: PathBuf::from("runs"),
        mnist: None,
        parallel: std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    let cfg = match name {
        "toy-regression" => ExperimentConfig {
            train: TrainConfig {
                epochs: 600,
                batch_size: None,
                schedule: vec![ScheduleSpan { epochs: 600, lr: 0.05 }],
                optimizer: OptimizerKind::adam(),
                seed: 0,
                grad_tolerance: None,
                max_iterations: None,
            },
            replicates: 1,
            ..base
        },
        "toy-logistic" => ExperimentConfig {
            model: ModelSpec::Logistic { dim: 2 },
            objective: dair_sq(0.5, LossKind::LogisticBinary),
            train: TrainConfig {
                epochs: 1,
                batch_size: None,
                schedule: vec![ScheduleSpan { epochs: 1, lr: 0.2 }],
                optimizer: OptimizerKind::adam(),
                seed: 0,
                grad_tolerance: Some(1e-7),
                max_iterations: Some(200_000),
            },
            data: DataConfig::ToyLogistic {
                n: 1000,
                var_x: 1.0,
                var_t1: 0.25,
                var_t2: 1.0,
            },
            lambdas: vec![0.5],
            noises: vec![0.25],
            replicates: 20,
            ..base
        },
        "colored-adv" | "colored-rnd" => ExperimentConfig {
            model: ModelSpec::ConvNet { in_channels: 3, classes: 1 },
            objective: dair_sq(
                if name == "colored-adv" { 1000.0 } else { 100.0 },
                LossKind::LogisticBinary,
            ),
            data: DataConfig::ColoredDigits {
                train_scheme: SchemeId::Color(ColorScheme::C1),
                aug_scheme: SchemeId::Color(if name == "colored-adv" {
                    ColorScheme::C2
                } else {
                    ColorScheme::C4
                }),
                test_scheme: SchemeId::Color(ColorScheme::C3),
                cm_original_scheme: SchemeId::Color(ColorScheme::C1),
                train_size: 20_000,
            },
            lambdas: vec![if name == "colored-adv" { 1000.0 } else { 100.0 }],
            noises: vec![0.25],
            mnist: Some(default_mnist_paths()),
            ..base
        },
        "rotated-strong" | "rotated-weak" => {
            let strong = name == "rotated-strong";
            ExperimentConfig {
                model: ModelSpec::ConvNet { in_channels: 1, classes: 10 },
                objective: dair_sq(
                    if strong { 1.0 } else { 10.0 },
                    LossKind::CrossEntropy,
                ),
                data: DataConfig::RotatedDigits {
                    train_scheme: SchemeId::Rotation(if strong {
                        RotationScheme::R1
                    } else {
                        RotationScheme::R4
                    }),
                    aug_scheme: SchemeId::Rotation(if strong {
                        RotationScheme::R5
                    } else {
                        RotationScheme::R6
                    }),
                    test_scheme: SchemeId::Rotation(if strong {
                        RotationScheme::R2
                    } else {
                        RotationScheme::R3
                    }),
                    cm_pair_degrees: if strong { (90.0, 270.0) } else { (0.0, 180.0) },
                    train_size: 20_000,
                },
                lambdas: vec![if strong { 1.0 } else { 10.0 }],
                noises: vec![0.0],
                mnist: Some(default_mnist_paths()),
                ..base
            }
        }
        "rotated-noise-sweep" => ExperimentConfig {
            model: ModelSpec::ConvNet { in_channels: 1, classes: 10 },
            objective: dair_sq(10.0, LossKind::CrossEntropy),
            data: DataConfig::RotatedDigits {
                train_scheme: SchemeId::Rotation(RotationScheme::R1),
                aug_scheme: SchemeId::RotationContinuous(ContinuousRotation::Weak),
                test_scheme: SchemeId::RotationContinuous(ContinuousRotation::Strong),
                cm_pair_degrees: (0.0, 180.0),
                train_size: 20_000,
            },
            lambdas: vec![0.1, 1.0, 10.0, 100.0],
            noises: vec![0.0, 0.2, 0.4],
            mnist: Some(default_mnist_paths()),
            ..base
        },
        "partial-aug" => ExperimentConfig {
            model: ModelSpec::ConvNet { in_channels: 1, classes: 10 },
            objective: dair_sq(10.0, LossKind::CrossEntropy),
            data: DataConfig::RotatedDigits {
                train_scheme: SchemeId::Rotation(RotationScheme::R4),
                aug_scheme: SchemeId::Rotation(RotationScheme::R6),
                test_scheme: SchemeId::Rotation(RotationScheme::R3),
                cm_pair_degrees: (0.0, 180.0),
                train_size: 20_000,
            },
            lambdas: vec![10.0],
            noises: vec![0.0],
            fractions: vec![0.1, 0.2, 0.3, 0.5, 1.0],
            mnist: Some(default_mnist_paths()),
            ..base
        },
        "robust-regression-synthetic" => ExperimentConfig {
            model: ModelSpec::Linear { dim: 11 },
            objective: dair_sq(10.0, LossKind::Squared),
            train: TrainConfig {
                epochs: 400,
                batch_size: Some(64),
                schedule: vec![ScheduleSpan { epochs: 400, lr: 0.01 }],
                optimizer: OptimizerKind::adam(),
                seed: 0,
                grad_tolerance: None,
                max_iterations: None,
            },
            data: DataConfig::RobustRegression {
                n: 2000,
                params: crate::data::RobustRegressionParams::default(),
            },
            lambdas: vec![10.0],
            noises: vec![0.0, 0.2, 0.4],
            ..base
        },
        "toy-regression-grid" | "toy-regression-default" => base,
        other => {
            return Err(HarnessError::UnknownPreset {
                name: other.to_string(),
            })
        }
    };
    Ok(cfg)
}

/// Names [`preset`] accepts.
pub fn preset_names() -> &'static [&'static str] {
    &[
        "toy-regression",
        "toy-logistic",
        "colored-adv",
        "colored-rnd",
        "rotated-strong",
        "rotated-weak",
        "rotated-noise-sweep",
        "partial-aug",
        "robust-regression-synthetic",
    ]
}

/// Keys a config file may override; anything absent keeps the preset value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub lambdas: Option<Vec<f64>>,
    pub noises: Option<Vec<f64>>,
    pub fractions: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub base_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub mode: Option<Mode>,
    pub regularizer: Option<RegularizerKind>,
    pub loss: Option<LossKind>,
    pub epochs: Option<usize>,
    /// 0 selects full-batch training.
    pub batch_size: Option<usize>,
    pub train_size: Option<usize>,
    pub samples: Option<usize>,
    pub mnist_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: ConfigOverrides) {
        if let Some(v) = o.lambdas {
            self.lambdas = v;
        }
        if let Some(v) = o.noises {
            self.noises = v;
        }
        if let Some(v) = o.fractions {
            self.fractions = v;
        }
        if let Some(v) = o.replicates {
            self.replicates = v;
        }
        if let Some(v) = o.base_seed {
            self.base_seed = v;
        }
        if let Some(v) = o.out_dir {
            self.out_dir = v;
        }
        if let Some(v) = o.parallel {
            self.parallel = v.max(1);
        }
        if let Some(v) = o.mode {
            self.objective.mode = v;
        }
        if let Some(v) = o.regularizer {
            self.objective.regularizer = v;
        }
        if let Some(v) = o.loss {
            self.objective.loss = v;
        }
        if let Some(v) = o.epochs {
            // keep a single-span schedule when the epoch count changes
            let lr = self.train.lr_at(0);
            self.train.epochs = v;
            self.train.schedule = vec![ScheduleSpan { epochs: v, lr }];
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = if v == 0 { None } else { Some(v) };
        }
        if let Some(v) = o.train_size {
            match &mut self.data {
                DataConfig::ColoredDigits { train_size, .. }
                | DataConfig::RotatedDigits { train_size, .. } => *train_size = v,
                DataConfig::ToyRegression { n_train, .. } => *n_train = v,
                DataConfig::ToyLogistic { n, .. } | DataConfig::RobustRegression { n, .. } => {
                    *n = v
                }
            }
        }
        if let Some(v) = o.samples {
            match &mut self.data {
                DataConfig::ToyRegression { n_train, .. } => *n_train = v,
                DataConfig::ToyLogistic { n, .. } | DataConfig::RobustRegression { n, .. } => {
                    *n = v
                }
                _ => {}
            }
        }
        if let Some(dir) = o.mnist_dir {
            self.mnist = Some(MnistPaths::under(&dir));
        }
    }
}

/// Parses a TOML override file.
pub fn load_overrides(path: &std::path::Path) -> Result<ConfigOverrides, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!(
        "{}: {e}",
        path.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_validate() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.preset, *name);
        }
        assert!(preset("no-such-preset").is_err());
    }

    #[test]
    fn digit_presets_pin_the_published_lambdas() {
        assert_eq!(preset("colored-adv").unwrap().objective.lambda, 1000.0);
        assert_eq!(preset("colored-rnd").unwrap().objective.lambda, 100.0);
        assert_eq!(preset("rotated-strong").unwrap().objective.lambda, 1.0);
        assert_eq!(preset("rotated-weak").unwrap().objective.lambda, 10.0);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = preset("toy-regression").unwrap();
        let o: ConfigOverrides = toml::from_str(
            r#"
            lambdas = [1.0, 10.0]
            replicates = 5
            mode = "da-erm"
            batch_size = 0
            "#,
        )
        .unwrap();
        cfg.apply(o);
        assert_eq!(cfg.lambdas, vec![1.0, 10.0]);
        assert_eq!(cfg.replicates, 5);
        assert_eq!(cfg.objective.mode, Mode::DaErm);
        assert_eq!(cfg.train.batch_size, None);
    }

    #[test]
    fn unknown_override_keys_are_rejected() {
        let parsed: Result<ConfigOverrides, _> = toml::from_str("bogus_key = 3");
        assert!(parsed.is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = preset("rotated-weak").unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
