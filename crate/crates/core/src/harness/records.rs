//! Run records, grouped aggregation, and deterministic file emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::HarnessError;

/// One seeded run at one sweep point. Metrics are name/value pairs; a
/// metric with no defined value (a no-support consistency metric) is simply
/// absent. Wall time is measured, not derived from the seed, so it stays
/// out of the emitted files to keep re-emission byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub preset: String,
    pub seed: u64,
    pub lambda: f64,
    pub noise: f64,
    pub fraction: f64,
    pub metrics: Vec<(String, f64)>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Mean and sample standard deviation of one metric over one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub experiment: String,
    pub preset: String,
    pub lambda: f64,
    pub noise: f64,
    pub fraction: f64,
    pub metric: String,
    pub mean: f64,
    /// n-1 denominator; absent when only one replicate contributed.
    pub std: Option<f64>,
    pub n: usize,
}

type GroupKey = (String, String, u64, u64, u64, String);

fn key_of(r: &RunRecord, metric: &str) -> GroupKey {
    (
        r.experiment.clone(),
        r.preset.clone(),
        r.lambda.to_bits(),
        r.noise.to_bits(),
        r.fraction.to_bits(),
        metric.to_string(),
    )
}

/// Groups records by (experiment, preset, lambda, noise, fraction, metric)
/// and reduces each group to mean and sample standard deviation. Records
/// missing a metric do not count toward that metric's n.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<Aggregate>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    let mut groups: BTreeMap<GroupKey, (RunRecord, Vec<f64>)> = BTreeMap::new();
    for r in records {
        for (name, value) in &r.metrics {
            groups
                .entry(key_of(r, name))
                .or_insert_with(|| (r.clone(), Vec::new()))
                .1
                .push(*value);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((experiment, preset, lambda, noise, fraction, metric), (_, values)) in groups {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n - 1) as f64;
            Some(var.sqrt())
        } else {
            None
        };
        out.push(Aggregate {
            experiment,
            preset,
            lambda: f64::from_bits(lambda),
            noise: f64::from_bits(noise),
            fraction: f64::from_bits(fraction),
            metric,
            mean,
            std,
            n,
        });
    }
    Ok(out)
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    ))
}

/// Writes records in the long CSV layout:
/// `experiment,preset,seed,lambda,noise,fraction,metric,value`, one row per
/// metric, in record order. Identical records serialize byte-identically.
pub fn emit_records_csv(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    writeln!(w, "experiment,preset,seed,lambda,noise,fraction,metric,value")
        .map_err(|e| io_err(path, e))?;
    for r in records {
        for (name, value) in &r.metrics {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.experiment, r.preset, r.seed, r.lambda, r.noise, r.fraction, name, value
            )
            .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a records CSV written by [`emit_records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::Csv { path: path.display().to_string(), msg: e.to_string() })?;
    let mut records: Vec<RunRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| HarnessError::Csv {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str, HarnessError> {
            row.get(i).ok_or_else(|| HarnessError::Csv {
                path: path.display().to_string(),
                msg: format!("row with {} fields", row.len()),
            })
        };
        let parse = |s: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| HarnessError::Csv {
                path: path.display().to_string(),
                msg: format!("bad number `{s}`"),
            })
        };
        let experiment = field(0)?.to_string();
        let preset = field(1)?.to_string();
        let seed: u64 = field(2)?.parse().map_err(|_| HarnessError::Csv {
            path: path.display().to_string(),
            msg: "bad seed".into(),
        })?;
        let lambda = parse(field(3)?)?;
        let noise = parse(field(4)?)?;
        let fraction = parse(field(5)?)?;
        let metric = field(6)?.to_string();
        let value = parse(field(7)?)?;

        let same = |r: &RunRecord| {
            r.experiment == experiment
                && r.preset == preset
                && r.seed == seed
                && r.lambda == lambda
                && r.noise == noise
                && r.fraction == fraction
        };
        if let Some(last) = records.last_mut() {
            if same(last) {
                last.metrics.push((metric, value));
                continue;
            }
        }
        records.push(RunRecord {
            experiment,
            preset,
            seed,
            lambda,
            noise,
            fraction,
            metrics: vec![(metric, value)],
            wall_time_s: 0.0,
        });
    }
    Ok(records)
}

/// Writes `preset,lambda,noise,fraction,metric,mean,std,n` rows; the std
/// cell is empty when a group has a single replicate.
pub fn emit_aggregates_csv(aggs: &[Aggregate], path: &Path) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    writeln!(w, "experiment,preset,lambda,noise,fraction,metric,mean,std,n")
        .map_err(|e| io_err(path, e))?;
    for a in aggs {
        let std = a.std.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            a.experiment, a.preset, a.lambda, a.noise, a.fraction, a.metric, a.mean, std, a.n
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Which configuration axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Lambda,
    Noise,
    Fraction,
}

impl SweepAxis {
    pub fn value_of(&self, r: &RunRecord) -> f64 {
        match self {
            SweepAxis::Lambda => r.lambda,
            SweepAxis::Noise => r.noise,
            SweepAxis::Fraction => r.fraction,
        }
    }

    fn value_of_agg(&self, a: &Aggregate) -> f64 {
        match self {
            SweepAxis::Lambda => a.lambda,
            SweepAxis::Noise => a.noise,
            SweepAxis::Fraction => a.fraction,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Noise => "noise",
            SweepAxis::Fraction => "fraction",
        }
    }
}

/// Emits one `(x, mean, std)` series file per (experiment, metric) into
/// `dir`, sorted ascending in the axis value. Returns the written paths.
pub fn emit_plot_data(
    records: &[RunRecord],
    axis: SweepAxis,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let aggs = aggregate(records)?;
    let mut series: BTreeMap<(String, String), Vec<&Aggregate>> = BTreeMap::new();
    for a in &aggs {
        series
            .entry((a.experiment.clone(), a.metric.clone()))
            .or_default()
            .push(a);
    }
    let mut written = Vec::new();
    for ((experiment, metric), mut points) in series {
        points.sort_by(|a, b| axis.value_of_agg(a).total_cmp(&axis.value_of_agg(b)));
        let safe: String = experiment
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{safe}_{metric}.csv"));
        let mut w = create(&path)?;
        writeln!(w, "{},mean,std", axis.name()).map_err(|e| io_err(&path, e))?;
        for p in points {
            let std = p.std.map(|s| s.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", axis.value_of_agg(p), p.mean, std)
                .map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
