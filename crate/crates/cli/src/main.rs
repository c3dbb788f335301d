//! Experiment harness CLI: closed-form oracle grids, preset runs, sweeps,
//! and aggregation of emitted records.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dair_core::harness::{
    self, aggregate, emit_aggregates_csv, emit_plot_data, emit_records_csv, oracle_grid,
    preset, preset_names, read_records_csv, run_experiment, ConfigOverrides, ExperimentConfig,
    HarnessError, MnistPaths, RunRecord, SweepAxis,
};
use dair_core::objectives::{Mode, RegularizerKind};

#[derive(Parser)]
#[command(
    name = "dair",
    about = "Consistency-regularization experiment harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Lambda,
    Noise,
    Fraction,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Lambda => SweepAxis::Lambda,
            AxisArg::Noise => SweepAxis::Noise,
            AxisArg::Fraction => SweepAxis::Fraction,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit the closed-form toy-regression grid as CSV.
    Oracle {
        /// Output CSV path.
        #[arg(long, default_value = "oracle_grid.csv")]
        out: PathBuf,
        /// Augmenter coefficients to tabulate.
        #[arg(long, value_delimiter = ',', default_values_t = vec![-1.0, -0.5, 0.0, 0.5, 1.0])]
        a: Vec<f64>,
        /// Input variances.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0])]
        var_x: Vec<f64>,
        /// Label-noise variances.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25])]
        var_eps: Vec<f64>,
        /// Augmenter-noise variances.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.1, 1.0])]
        var_n: Vec<f64>,
        /// Weight-decay strengths (0 disables the ridge term).
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0])]
        gamma: Vec<f64>,
    },
    /// Run a preset across its sweep axes and replicates.
    Run {
        /// Preset name (see `dair presets`).
        preset: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a preset and emit per-axis plot data alongside the records.
    Sweep {
        /// Preset name.
        preset: String,
        /// Axis to sweep.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Axis values (defaults to the preset's list).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Aggregate records.csv files found under a directory.
    Aggregate {
        /// Directory holding records.csv files.
        dir: PathBuf,
        /// Output CSV path (defaults to aggregates.csv inside the directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List available presets.
    Presets,
}

#[derive(Args)]
struct CommonArgs {
    /// Regularization strengths; overrides the preset's lambda list.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Noise levels; overrides the preset's noise list.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    /// Augmented fractions; overrides the preset's fraction list.
    #[arg(long, value_delimiter = ',')]
    fraction: Option<Vec<f64>>,
    /// Base seed; replicate r runs with seed base+r.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicates per sweep point.
    #[arg(long)]
    replicates: Option<usize>,
    /// Output directory for records, aggregates, and plot data.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with configuration overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training images in IDX format (use with --mnist-labels).
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    /// Training labels in IDX format.
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    /// Test images in IDX format.
    #[arg(long)]
    mnist_test_images: Option<PathBuf>,
    /// Test labels in IDX format.
    #[arg(long)]
    mnist_test_labels: Option<PathBuf>,
    /// Maximum concurrent runs.
    #[arg(long)]
    parallel: Option<usize>,
    /// Objective mode: erm, da-erm, or dair.
    #[arg(long)]
    mode: Option<String>,
    /// Regularizer: none, sq, l1, kl-output, l2-output.
    #[arg(long)]
    regularizer: Option<String>,
}

impl CommonArgs {
    fn resolve(&self, name: &str) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = preset(name)?;
        if let Some(path) = &self.config {
            cfg.apply(harness::load_overrides(path)?);
        }
        let overrides = ConfigOverrides {
            lambdas: self.lambda.clone(),
            noises: self.noise.clone(),
            fractions: self.fraction.clone(),
            base_seed: self.seed,
            replicates: self.replicates,
            out_dir: self.out.clone(),
            parallel: self.parallel,
            mode: match self.mode.as_deref() {
                None => None,
                Some("erm") => Some(Mode::Erm),
                Some("da-erm") => Some(Mode::DaErm),
                Some("dair") => Some(Mode::Dair),
                Some(other) => {
                    return Err(HarnessError::Config(format!("unknown mode `{other}`")))
                }
            },
            regularizer: match self.regularizer.as_deref() {
                None => None,
                Some("none") => Some(RegularizerKind::None),
                Some("sq") => Some(RegularizerKind::Sq),
                Some("l1") => Some(RegularizerKind::L1),
                Some("kl-output") => Some(RegularizerKind::KlOutput),
                Some("l2-output") => Some(RegularizerKind::L2Output),
                Some(other) => {
                    return Err(HarnessError::Config(format!(
                        "unknown regularizer `{other}`"
                    )))
                }
            },
            ..ConfigOverrides::default()
        };
        cfg.apply(overrides);
        if let (Some(ti), Some(tl)) = (&self.mnist_images, &self.mnist_labels) {
            let current = cfg
                .mnist
                .clone()
                .unwrap_or_else(harness::default_mnist_paths);
            cfg.mnist = Some(MnistPaths {
                train_images: ti.clone(),
                train_labels: tl.clone(),
                test_images: self
                    .mnist_test_images
                    .clone()
                    .unwrap_or(current.test_images),
                test_labels: self
                    .mnist_test_labels
                    .clone()
                    .unwrap_or(current.test_labels),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_err(path: &std::path::Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Persists the resolved configuration next to the records so a run's
/// effective settings are always inspectable.
fn echo_config(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("config.toml");
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| HarnessError::Config(format!("config echo: {e}")))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn write_outputs(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<(), HarnessError> {
    echo_config(cfg)?;
    let records_path = cfg.out_dir.join("records.csv");
    emit_records_csv(records, &records_path)?;
    let aggs = aggregate(records)?;
    emit_aggregates_csv(&aggs, &cfg.out_dir.join("aggregates.csv"))?;
    println!("wrote {}", records_path.display());
    for a in &aggs {
        let std = a.std.map(|s| format!(" +- {s:.4}")).unwrap_or_default();
        println!(
            "{} lambda={} noise={} fraction={} {} = {:.4}{} (n={})",
            a.experiment, a.lambda, a.noise, a.fraction, a.metric, a.mean, std, a.n
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Oracle {
            out,
            a,
            var_x,
            var_eps,
            var_n,
            gamma,
        } => {
            let rows = oracle_grid(&a, &var_x, &var_eps, &var_n, &gamma)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
                }
            }
            let mut w = std::io::BufWriter::new(
                std::fs::File::create(&out).map_err(|e| io_err(&out, e))?,
            );
            writeln!(
                w,
                "a,var_x,var_eps,var_n,gamma,w1_daerm,w2_daerm,testloss_daerm,testloss_dair"
            )
            .map_err(|e| io_err(&out, e))?;
            for (p, (w1, w2), loss_daerm, loss_dair) in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    p.a, p.var_x, p.var_eps, p.var_n, p.gamma, w1, w2, loss_daerm, loss_dair
                )
                .map_err(|e| io_err(&out, e))?;
            }
            w.flush().map_err(|e| io_err(&out, e))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Run { preset: name, common } => {
            let cfg = common.resolve(&name)?;
            let records = run_experiment(&cfg)?;
            write_outputs(&cfg, &records)
        }
        Command::Sweep {
            preset: name,
            axis,
            values,
            common,
        } => {
            let axis: SweepAxis = axis.into();
            let mut cfg = common.resolve(&name)?;
            if let Some(vals) = values {
                match axis {
                    SweepAxis::Lambda => cfg.lambdas = vals,
                    SweepAxis::Noise => cfg.noises = vals,
                    SweepAxis::Fraction => cfg.fractions = vals,
                }
                cfg.validate()?;
            }
            let grouped = harness::sweep(&cfg, axis)?;
            let records: Vec<RunRecord> = grouped.into_iter().flat_map(|(_, rs)| rs).collect();
            write_outputs(&cfg, &records)?;
            for p in emit_plot_data(&records, axis, &cfg.out_dir)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Aggregate { dir, out } => {
            let mut records = Vec::new();
            for entry in walk_records(&dir)? {
                records.extend(read_records_csv(&entry)?);
            }
            if records.is_empty() {
                return Err(HarnessError::EmptyRecords);
            }
            let aggs = aggregate(&records)?;
            let out = out.unwrap_or_else(|| dir.join("aggregates.csv"));
            emit_aggregates_csv(&aggs, &out)?;
            println!("wrote {} ({} groups)", out.display(), aggs.len());
            Ok(())
        }
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn walk_records(dir: &std::path::Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| io_err(&d, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "records.csv") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Exit codes by failure category: 2 configuration/usage, 3 missing or
/// malformed data, 4 training failure, 5 I/O.
fn exit_code(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(_) | HarnessError::UnknownPreset { .. } => 2,
        HarnessError::MissingData { .. } | HarnessError::Data(_) | HarnessError::EmptyRecords => 3,
        HarnessError::Train(_) => 4,
        HarnessError::Io { .. } | HarnessError::Csv { .. } => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
