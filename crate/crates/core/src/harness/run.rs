//! Experiment execution: dataset assembly per family, seeded replication,
//! sweeps, and metric extraction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use crate::data::{
    self, binarize_digits, colorize, digit_tensor, inject_label_noise, load_idx,
    make_paired_dataset, rotate, rotate_by_degrees, Augmenter, BaseSample, Carrier, Label,
    NoiseMode, PairedSample, RawDigit, SchemeId,
};
use crate::harness::config::{objective_tag, DataConfig, ExperimentConfig, MnistPaths};
use crate::harness::records::{RunRecord, SweepAxis};
use crate::harness::HarnessError;
use crate::objectives::ObjectiveSpec;
use crate::oracle::{test_loss, ToyRegressionParams};
use crate::train::{
    consistency_eval, evaluate, train, train_to_tolerance, Convergence, Task, TrainConfig,
};
use crate::util::{derive_seed, rng_from};

/// Process-wide cache of parsed IDX pairs; concurrent runs share the
/// read-only digits.
fn mnist_cache() -> &'static Mutex<HashMap<(String, String), Arc<Vec<RawDigit>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(String, String), Arc<Vec<RawDigit>>>>> =
        OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn load_digits_cached(
    images: &std::path::Path,
    labels: &std::path::Path,
) -> Result<Arc<Vec<RawDigit>>, HarnessError> {
    let key = (
        images.display().to_string(),
        labels.display().to_string(),
    );
    if let Some(hit) = mnist_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let digits = Arc::new(load_idx(images, labels)?);
    mnist_cache()
        .lock()
        .unwrap()
        .insert(key, digits.clone());
    Ok(digits)
}

/// One sweep point: the concrete axis values a job runs at.
#[derive(Debug, Clone, Copy)]
struct Job {
    lambda: f64,
    noise: f64,
    fraction: f64,
    replicate: usize,
}

/// Runs the full cross product of sweep axes and replicates. One record per
/// (lambda, noise, fraction, replicate); the record seed is
/// `base_seed + replicate`, shared across sweep values so comparisons
/// across axis points (and across objectives run under the same base seed)
/// are paired.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    preflight(cfg)?;

    let mut jobs = Vec::new();
    for &lambda in &cfg.lambdas {
        for &noise in &cfg.noises {
            for &fraction in &cfg.fractions {
                for replicate in 0..cfg.replicates {
                    jobs.push(Job {
                        lambda,
                        noise,
                        fraction,
                        replicate,
                    });
                }
            }
        }
    }

    let parallel = cfg.parallel.max(1);
    let results: Vec<Result<RunRecord, HarnessError>> = if parallel == 1 || jobs.len() == 1 {
        jobs.iter().map(|j| run_single(cfg, j)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter().map(|j| run_single(cfg, j)).collect()
        })
    };
    results.into_iter().collect()
}

/// Cross-product execution grouped by one axis, for sweep-style reporting.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
) -> Result<Vec<(f64, Vec<RunRecord>)>, HarnessError> {
    let axis_values = match axis {
        SweepAxis::Lambda => &cfg.lambdas,
        SweepAxis::Noise => &cfg.noises,
        SweepAxis::Fraction => &cfg.fractions,
    };
    if axis_values.is_empty() {
        return Err(HarnessError::Config(format!(
            "sweep axis {} is empty",
            axis.name()
        )));
    }
    let records = run_experiment(cfg)?;
    let mut grouped: Vec<(f64, Vec<RunRecord>)> = axis_values
        .iter()
        .map(|&v| (v, Vec::new()))
        .collect();
    for r in records {
        let v = axis.value_of(&r);
        if let Some(slot) = grouped.iter_mut().find(|(x, _)| *x == v) {
            slot.1.push(r);
        }
    }
    Ok(grouped)
}

/// Fails fast on missing data files before any training starts.
fn preflight(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    if matches!(
        cfg.data,
        DataConfig::ColoredDigits { .. } | DataConfig::RotatedDigits { .. }
    ) {
        let paths = cfg
            .mnist
            .as_ref()
            .ok_or_else(|| HarnessError::Config("digit preset needs IDX paths".into()))?;
        for p in [
            &paths.train_images,
            &paths.train_labels,
            &paths.test_images,
            &paths.test_labels,
        ] {
            if !p.exists() {
                return Err(HarnessError::MissingData {
                    path: p.display().to_string(),
                });
            }
        }
    }
    Ok(())
}

fn run_single(cfg: &ExperimentConfig, job: &Job) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let seed = cfg.base_seed + job.replicate as u64;
    let mut objective = cfg.objective;
    objective.lambda = job.lambda;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;

    let mut metrics = match &cfg.data {
        DataConfig::ToyRegression { n_train, params } => run_toy_regression(
            cfg, &objective, &train_cfg, *n_train, params, job, seed,
        )?,
        DataConfig::ToyLogistic {
            n,
            var_x,
            var_t1: _,
            var_t2,
        } => run_toy_logistic(cfg, &objective, &train_cfg, *n, *var_x, job.noise, *var_t2, job, seed)?,
        DataConfig::RobustRegression { n, params } => {
            run_robust_regression(cfg, &objective, &train_cfg, *n, params, job, seed)?
        }
        DataConfig::ColoredDigits {
            train_scheme,
            aug_scheme,
            test_scheme,
            cm_original_scheme,
            train_size,
        } => run_colored(
            cfg,
            &objective,
            &train_cfg,
            *train_scheme,
            *aug_scheme,
            *test_scheme,
            *cm_original_scheme,
            *train_size,
            job,
            seed,
        )?,
        DataConfig::RotatedDigits {
            train_scheme,
            aug_scheme,
            test_scheme,
            cm_pair_degrees,
            train_size,
        } => run_rotated(
            cfg,
            &objective,
            &train_cfg,
            *train_scheme,
            *aug_scheme,
            *test_scheme,
            *cm_pair_degrees,
            *train_size,
            job,
            seed,
        )?,
    };
    metrics.retain(|(_, v)| v.is_finite());

    Ok(RunRecord {
        experiment: format!("{}:{}", cfg.preset, objective_tag(&objective)),
        preset: cfg.preset.clone(),
        seed,
        lambda: job.lambda,
        noise: job.noise,
        fraction: job.fraction,
        metrics,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

type Metrics = Vec<(String, f64)>;

fn push(metrics: &mut Metrics, name: &str, value: f64) {
    metrics.push((name.to_string(), value));
}

#[allow(clippy::too_many_arguments)]
fn run_toy_regression(
    _cfg: &ExperimentConfig,
    objective: &ObjectiveSpec,
    train_cfg: &TrainConfig,
    n_train: usize,
    params: &ToyRegressionParams,
    job: &Job,
    seed: u64,
) -> Result<Metrics, HarnessError> {
    let p = ToyRegressionParams {
        var_n: job.noise,
        ..*params
    };
    let ds = data::gen_spurious_regression(n_train, &p, derive_seed(seed, "data"))?;
    let train_set = mask_fraction(ds.train, job.fraction, derive_seed(seed, "pair-fraction"));
    let model = crate::train::ModelSpec::Linear { dim: 2 };
    let (learned, history) = train(&model, objective, &train_set, train_cfg, None, None)?;

    let w = learned.get("w").expect("linear weights").data();
    let (w1, w2) = (w[0], w[1]);
    let mut metrics = Metrics::new();
    push(&mut metrics, "w1", w1);
    push(&mut metrics, "w2", w2);
    push(&mut metrics, "test_loss", test_loss((w1, w2), &p));
    push(
        &mut metrics,
        "test_rmse",
        evaluate(&learned, &model, &ds.test, Task::Rmse)?,
    );
    if let Some(last) = history.epochs.last() {
        push(&mut metrics, "train_objective", last.objective_mean);
    }
    Ok(metrics)
}

#[allow(clippy::too_many_arguments)]
fn run_toy_logistic(
    _cfg: &ExperimentConfig,
    objective: &ObjectiveSpec,
    train_cfg: &TrainConfig,
    n: usize,
    var_x: f64,
    var_t1: f64,
    var_t2: f64,
    job: &Job,
    seed: u64,
) -> Result<Metrics, HarnessError> {
    let ds = data::gen_logistic_toy(n, var_x, var_t1, var_t2, derive_seed(seed, "data"))?;
    let train_set = mask_fraction(ds.train, job.fraction, derive_seed(seed, "pair-fraction"));
    let model = crate::train::ModelSpec::Logistic { dim: 2 };
    let (learned, convergence, history) =
        train_to_tolerance(&model, objective, &train_set, train_cfg, None)?;

    let mut metrics = Metrics::new();
    match convergence {
        Convergence::Converged { iterations } => {
            push(&mut metrics, "iterations", iterations as f64);
            push(&mut metrics, "converged", 1.0);
        }
        Convergence::NotConverged { final_norm } => {
            push(&mut metrics, "converged", 0.0);
            push(&mut metrics, "final_grad_norm", final_norm);
        }
    }
    push(
        &mut metrics,
        "test_accuracy",
        evaluate(&learned, &model, &ds.test, Task::Accuracy)?,
    );
    if let Some(last) = history.steps.last() {
        push(&mut metrics, "train_objective", last.objective);
    }
    Ok(metrics)
}

fn run_robust_regression(
    _cfg: &ExperimentConfig,
    objective: &ObjectiveSpec,
    train_cfg: &TrainConfig,
    n: usize,
    params: &crate::data::RobustRegressionParams,
    job: &Job,
    seed: u64,
) -> Result<Metrics, HarnessError> {
    let p = crate::data::RobustRegressionParams {
        noise_fraction: job.noise,
        ..*params
    };
    let ds = data::gen_robust_regression(n, &p, derive_seed(seed, "data"))?;
    let train_set = mask_fraction(ds.train, job.fraction, derive_seed(seed, "pair-fraction"));
    let model = crate::train::ModelSpec::Linear { dim: p.dim + 1 };
    let (learned, history) = train(&model, objective, &train_set, train_cfg, None, None)?;

    let mut metrics = Metrics::new();
    push(
        &mut metrics,
        "test_rmse",
        evaluate(&learned, &model, &ds.test, Task::Rmse)?,
    );
    if let Some(last) = history.epochs.last() {
        push(&mut metrics, "train_objective", last.objective_mean);
    }
    Ok(metrics)
}

/// Drops augmented twins from all but a seeded `round(fraction * n)`-sized
/// subset, mirroring the paired-dataset selection rule for streams whose
/// twins were drawn at generation time.
pub fn mask_fraction(samples: Vec<PairedSample>, fraction: f64, seed: u64) -> Vec<PairedSample> {
    if fraction >= 1.0 {
        return samples;
    }
    let n = samples.len();
    let keep = (fraction * n as f64).round() as usize;
    let mut rng = rng_from(seed);
    let order = crate::util::shuffled_indices(n, &mut rng);
    let mut selected = vec![false; n];
    for &i in order.iter().take(keep) {
        selected[i] = true;
    }
    samples
        .into_iter()
        .enumerate()
        .map(|(i, mut s)| {
            if !selected[i] {
                s.augmented = None;
            }
            s
        })
        .collect()
}

/// Assembled digit task: the training stream plus the two evaluation sets.
#[derive(Debug, Clone)]
pub struct DigitTask {
    pub train: crate::data::PairedDataset,
    pub accuracy_set: Vec<PairedSample>,
    pub cm_set: Vec<PairedSample>,
}

/// Builds the colored-digit task: binary labels with symmetric flip noise
/// at both train and test time, train-scheme colors on the originals,
/// twins recolored per epoch by the augmentation scheme, test-scheme
/// colors on the accuracy set, and consistency pairs colored by
/// (cm_original_scheme, test_scheme).
#[allow(clippy::too_many_arguments)]
pub fn build_colored_task(
    paths: &MnistPaths,
    train_scheme: SchemeId,
    aug_scheme: SchemeId,
    test_scheme: SchemeId,
    cm_original_scheme: SchemeId,
    train_size: usize,
    label_flip: f64,
    fraction: f64,
    seed: u64,
) -> Result<DigitTask, HarnessError> {
    let (train_digits, test_digits) = load_split(paths)?;
    let subset = &train_digits[..train_size.min(train_digits.len())];

    let labels: Vec<usize> = subset
        .iter()
        .map(binarize_digits)
        .collect::<Result<_, _>>()?;
    let noisy = inject_label_noise(
        &labels,
        label_flip,
        NoiseMode::BernoulliFlip,
        &mut rng_from(derive_seed(seed, "train-noise")),
    )?;

    let mut color_rng = rng_from(derive_seed(seed, "train-color"));
    let mut base = Vec::with_capacity(subset.len());
    for (i, digit) in subset.iter().enumerate() {
        let original = colorize(digit, train_scheme, noisy[i], &mut color_rng)?;
        base.push(BaseSample {
            original,
            carrier: Carrier::Digit(digit.clone()),
            label: Label::Class(noisy[i]),
            pair_id: i as u64,
        });
    }
    let train = make_paired_dataset(
        base,
        Augmenter::Scheme(aug_scheme),
        fraction,
        true,
        derive_seed(seed, "aug"),
    )?;

    let test_labels: Vec<usize> = test_digits
        .iter()
        .map(binarize_digits)
        .collect::<Result<_, _>>()?;
    let noisy_test = inject_label_noise(
        &test_labels,
        label_flip,
        NoiseMode::BernoulliFlip,
        &mut rng_from(derive_seed(seed, "test-noise")),
    )?;
    let mut test_rng = rng_from(derive_seed(seed, "test-color"));
    let mut accuracy_set = Vec::with_capacity(test_digits.len());
    for (i, digit) in test_digits.iter().enumerate() {
        accuracy_set.push(PairedSample::new(
            colorize(digit, test_scheme, noisy_test[i], &mut test_rng)?,
            None,
            Label::Class(noisy_test[i]),
            i as u64,
        ));
    }

    let mut cm_rng = rng_from(derive_seed(seed, "cm-color"));
    let mut cm_set = Vec::with_capacity(test_digits.len());
    for (i, digit) in test_digits.iter().enumerate() {
        let original = colorize(digit, cm_original_scheme, noisy_test[i], &mut cm_rng)?;
        let twin = colorize(digit, test_scheme, noisy_test[i], &mut cm_rng)?;
        cm_set.push(PairedSample::new(
            original,
            Some(twin),
            Label::Class(noisy_test[i]),
            i as u64,
        ));
    }
    Ok(DigitTask {
        train,
        accuracy_set,
        cm_set,
    })
}

/// Builds the rotated-digit task: ten-class labels with uniform-replacement
/// noise at training time only, train-scheme rotations on the originals,
/// twins re-rotated per epoch by the augmentation scheme, test-scheme
/// rotations on the accuracy set, and consistency pairs at fixed degrees.
#[allow(clippy::too_many_arguments)]
pub fn build_rotated_task(
    paths: &MnistPaths,
    train_scheme: SchemeId,
    aug_scheme: SchemeId,
    test_scheme: SchemeId,
    cm_pair_degrees: (f64, f64),
    train_size: usize,
    label_replace: f64,
    fraction: f64,
    seed: u64,
) -> Result<DigitTask, HarnessError> {
    let (train_digits, test_digits) = load_split(paths)?;
    let subset = &train_digits[..train_size.min(train_digits.len())];

    let labels: Vec<usize> = subset.iter().map(|d| d.digit as usize).collect();
    let noisy = inject_label_noise(
        &labels,
        label_replace,
        NoiseMode::UniformReplace10,
        &mut rng_from(derive_seed(seed, "train-noise")),
    )?;

    let mut rot_rng = rng_from(derive_seed(seed, "train-rot"));
    let mut base = Vec::with_capacity(subset.len());
    for (i, digit) in subset.iter().enumerate() {
        let rotated = rotate(digit, train_scheme, &mut rot_rng)?;
        base.push(BaseSample {
            original: digit_tensor(&rotated),
            carrier: Carrier::Digit(digit.clone()),
            label: Label::Class(noisy[i]),
            pair_id: i as u64,
        });
    }
    let train = make_paired_dataset(
        base,
        Augmenter::Scheme(aug_scheme),
        fraction,
        true,
        derive_seed(seed, "aug"),
    )?;

    let mut test_rng = rng_from(derive_seed(seed, "test-rot"));
    let mut accuracy_set = Vec::with_capacity(test_digits.len());
    for (i, digit) in test_digits.iter().enumerate() {
        let rotated = rotate(digit, test_scheme, &mut test_rng)?;
        accuracy_set.push(PairedSample::new(
            digit_tensor(&rotated),
            None,
            Label::Class(digit.digit as usize),
            i as u64,
        ));
    }

    let mut cm_set = Vec::with_capacity(test_digits.len());
    for (i, digit) in test_digits.iter().enumerate() {
        let original = rotate_by_degrees(digit, cm_pair_degrees.0);
        let twin = rotate_by_degrees(digit, cm_pair_degrees.1);
        cm_set.push(PairedSample::new(
            digit_tensor(&original),
            Some(digit_tensor(&twin)),
            Label::Class(digit.digit as usize),
            i as u64,
        ));
    }
    Ok(DigitTask {
        train,
        accuracy_set,
        cm_set,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_colored(
    cfg: &ExperimentConfig,
    objective: &ObjectiveSpec,
    train_cfg: &TrainConfig,
    train_scheme: SchemeId,
    aug_scheme: SchemeId,
    test_scheme: SchemeId,
    cm_original_scheme: SchemeId,
    train_size: usize,
    job: &Job,
    seed: u64,
) -> Result<Metrics, HarnessError> {
    let paths = cfg.mnist.as_ref().expect("preflight checked");
    let task = build_colored_task(
        paths,
        train_scheme,
        aug_scheme,
        test_scheme,
        cm_original_scheme,
        train_size,
        job.noise,
        job.fraction,
        seed,
    )?;
    let model = &cfg.model;
    let (learned, history) = train(model, objective, &task.train, train_cfg, None, None)?;
    digit_metrics(&learned, model, &task.accuracy_set, &task.cm_set, &history)
}

#[allow(clippy::too_many_arguments)]
fn run_rotated(
    cfg: &ExperimentConfig,
    objective: &ObjectiveSpec,
    train_cfg: &TrainConfig,
    train_scheme: SchemeId,
    aug_scheme: SchemeId,
    test_scheme: SchemeId,
    cm_pair_degrees: (f64, f64),
    train_size: usize,
    job: &Job,
    seed: u64,
) -> Result<Metrics, HarnessError> {
    let paths = cfg.mnist.as_ref().expect("preflight checked");
    let task = build_rotated_task(
        paths,
        train_scheme,
        aug_scheme,
        test_scheme,
        cm_pair_degrees,
        train_size,
        job.noise,
        job.fraction,
        seed,
    )?;
    let model = &cfg.model;
    let (learned, history) = train(model, objective, &task.train, train_cfg, None, None)?;
    digit_metrics(&learned, model, &task.accuracy_set, &task.cm_set, &history)
}

fn digit_metrics(
    learned: &dair_autodiff::ParamSet,
    model: &crate::train::ModelSpec,
    accuracy_set: &[PairedSample],
    cm_set: &[PairedSample],
    history: &crate::train::TrainHistory,
) -> Result<Metrics, HarnessError> {
    let mut metrics = Metrics::new();
    push(
        &mut metrics,
        "test_accuracy",
        evaluate(learned, model, accuracy_set, Task::Accuracy)?,
    );
    if let Some(cm) = consistency_eval(learned, model, cm_set)?.as_option() {
        push(&mut metrics, "cm", cm);
    }
    if let Some(last) = history.epochs.last() {
        push(&mut metrics, "train_objective", last.objective_mean);
        push(&mut metrics, "final_base_loss", last.base_loss_mean);
        if let Some(reg) = last.regularizer_mean {
            push(&mut metrics, "final_regularizer", reg);
        }
    }
    Ok(metrics)
}

fn load_split(
    paths: &MnistPaths,
) -> Result<(Arc<Vec<RawDigit>>, Arc<Vec<RawDigit>>), HarnessError> {
    Ok((
        load_digits_cached(&paths.train_images, &paths.train_labels)?,
        load_digits_cached(&paths.test_images, &paths.test_labels)?,
    ))
}

/// Emits the closed-form oracle grid: one row per parameter combination
/// with the DA-ERM weights (ridge-regularized when gamma > 0) and the test
/// losses of DA-ERM and of the DAIR limit solution.
pub fn oracle_grid(
    a_values: &[f64],
    var_x_values: &[f64],
    var_eps_values: &[f64],
    var_n_values: &[f64],
    gamma_values: &[f64],
) -> Result<Vec<(ToyRegressionParams, (f64, f64), f64, f64)>, HarnessError> {
    let mut rows = Vec::new();
    for &a in a_values {
        for &var_x in var_x_values {
            for &var_eps in var_eps_values {
                for &var_n in var_n_values {
                    for &gamma in gamma_values {
                        let p = ToyRegressionParams {
                            a,
                            var_x,
                            var_eps,
                            var_n,
                            gamma,
                        };
                        let w = if gamma == 0.0 {
                            crate::oracle::da_erm_weights(&p)
                        } else {
                            crate::oracle::weight_decay_weights(&p)
                        }
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                        let loss_daerm = test_loss(w, &p);
                        let loss_dair = test_loss(crate::oracle::dair_limit_weights(), &p);
                        rows.push((p, w, loss_daerm, loss_dair));
                    }
                }
            }
        }
    }
    Ok(rows)
}

