//! Synthetic toys with a spurious feature: the linear-regression toy, the
//! binary logistic toy, and a robust-regression surrogate with corrupted
//! targets and a reversed spurious indicator.

use dair_autodiff::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Label, PairedSample};
use crate::error::DataError;
use crate::oracle::ToyRegressionParams;
use crate::util::{normal, rng_from};

/// Train/test split of a synthetic task.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
}

fn feat(values: &[f64]) -> Tensor {
    Tensor::new(vec![values.len()], values.to_vec()).expect("toy feature vector")
}

/// Linear-regression toy. Train inputs are `(x, s = y)` with the augmented
/// twin `(x, s = a y + n)`; test inputs zero the spurious channel.
/// `x ~ N(0, var_x)`, `y = x + eps`, `eps ~ N(0, var_eps)`,
/// `n ~ N(0, var_n)`.
pub fn gen_spurious_regression(
    n: usize,
    p: &ToyRegressionParams,
    seed: u64,
) -> Result<ToyDataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    p.validate()?;
    let mut rng = rng_from(seed);
    let mut train = Vec::with_capacity(n);
    for i in 0..n {
        let x = normal(&mut rng, p.var_x);
        let eps = normal(&mut rng, p.var_eps);
        let y = x + eps;
        let noise = normal(&mut rng, p.var_n);
        train.push(PairedSample::new(
            feat(&[x, y]),
            Some(feat(&[x, p.a * y + noise])),
            Label::Value(y),
            i as u64,
        ));
    }
    let mut test = Vec::with_capacity(n);
    for i in 0..n {
        let x = normal(&mut rng, p.var_x);
        let eps = normal(&mut rng, p.var_eps);
        let y = x + eps;
        test.push(PairedSample::new(
            feat(&[x, 0.0]),
            None,
            Label::Value(y),
            (n + i) as u64,
        ));
    }
    Ok(ToyDataset { train, test })
}

/// Binary logistic toy. `P(y = 1 | x) = 1 / (1 + e^-x)`; the train spurious
/// channel is `2y - 1 + t1`, the augmented twin adds `t2`, and the test
/// channel is sign-flipped: `1 - 2y`.
pub fn gen_logistic_toy(
    n: usize,
    var_x: f64,
    var_t1: f64,
    var_t2: f64,
    seed: u64,
) -> Result<ToyDataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = rng_from(seed);
    let mut draw = |spurious_test: bool, pair_id: u64| {
        let x = normal(&mut rng, var_x);
        let p1 = crate::util::sigmoid(x);
        let y = usize::from(rng.random::<f64>() < p1);
        let sign = 2.0 * y as f64 - 1.0;
        if spurious_test {
            PairedSample::new(feat(&[x, -sign]), None, Label::Class(y), pair_id)
        } else {
            let t1 = normal(&mut rng, var_t1);
            let t2 = normal(&mut rng, var_t2);
            let s_train = sign + t1;
            PairedSample::new(
                feat(&[x, s_train]),
                Some(feat(&[x, s_train + t2])),
                Label::Class(y),
                pair_id,
            )
        }
    };
    let train = (0..n).map(|i| draw(false, i as u64)).collect();
    let test = (0..n).map(|i| draw(true, (n + i) as u64)).collect();
    Ok(ToyDataset { train, test })
}

/// Parameters of the robust-regression surrogate: `dim` informative
/// coordinates, a binary spurious indicator thresholded at the median
/// training target (reversed at test time), and a `noise_fraction` of train
/// targets corrupted by heavy additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustRegressionParams {
    pub dim: usize,
    pub noise_fraction: f64,
    pub noise_sigma: f64,
}

impl Default for RobustRegressionParams {
    fn default() -> Self {
        Self {
            dim: 10,
            noise_fraction: 0.4,
            noise_sigma: 5.0,
        }
    }
}

/// Robust-regression surrogate. Targets are a unit-variance linear signal;
/// a fraction of train targets receive N(0, sigma^2) corruption. The
/// spurious bit is 1 when the (possibly corrupted) target exceeds the train
/// median; at test time the condition is reversed and targets are clean.
/// The augmented twin redraws the bit fairly at random.
pub fn gen_robust_regression(
    n: usize,
    p: &RobustRegressionParams,
    seed: u64,
) -> Result<ToyDataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&p.noise_fraction) {
        return Err(DataError::BadProbability {
            p: p.noise_fraction,
        });
    }
    let mut rng = rng_from(seed);
    let scale = 1.0 / (p.dim as f64).sqrt();

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(2 * n);
    let mut clean: Vec<f64> = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        let x: Vec<f64> = (0..p.dim).map(|_| normal(&mut rng, 1.0)).collect();
        let y: f64 = x.iter().sum::<f64>() * scale + normal(&mut rng, 0.01);
        xs.push(x);
        clean.push(y);
    }

    // Corrupt a fraction of the train targets.
    let mut train_targets = clean[..n].to_vec();
    for t in train_targets.iter_mut() {
        if rng.random::<f64>() < p.noise_fraction {
            *t += normal(&mut rng, p.noise_sigma * p.noise_sigma);
        }
    }
    let mut sorted = train_targets.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];

    let mut train = Vec::with_capacity(n);
    for i in 0..n {
        let spurious = f64::from(train_targets[i] > median);
        let mut features = xs[i].clone();
        features.push(spurious);
        let mut aug = xs[i].clone();
        aug.push(f64::from(rng.random::<f64>() < 0.5));
        train.push(PairedSample::new(
            feat(&features),
            Some(feat(&aug)),
            Label::Value(train_targets[i]),
            i as u64,
        ));
    }
    let mut test = Vec::with_capacity(n);
    for i in 0..n {
        let y = clean[n + i];
        // reversed condition at test time
        let spurious = f64::from(y <= median);
        let mut features = xs[n + i].clone();
        features.push(spurious);
        test.push(PairedSample::new(
            feat(&features),
            None,
            Label::Value(y),
            (n + i) as u64,
        ));
    }
    Ok(ToyDataset { train, test })
}

/// Writes synthetic samples as CSV: one row per sample holding the
/// non-spurious features, then the spurious channel (the trailing feature
/// coordinate), then the label.
pub fn export_csv(
    samples: &[PairedSample],
    path: impl AsRef<std::path::Path>,
) -> Result<(), DataError> {
    use std::io::Write;
    let path = path.as_ref();
    let io = |source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let width = samples.first().map(|s| s.original.numel()).unwrap_or(0);
    let header: Vec<String> = (0..width.saturating_sub(1))
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("spurious".to_string()))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for s in samples {
        let mut row: Vec<String> = s.original.data().iter().map(|v| v.to_string()).collect();
        let label = match s.label {
            Label::Class(c) => c.to_string(),
            Label::Value(v) => v.to_string(),
        };
        row.push(label);
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
