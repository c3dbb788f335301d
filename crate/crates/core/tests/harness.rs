//! Harness behavior: preset execution, reproducibility, paired seeds, and
//! sweep grouping.

use dair_core::harness::{
    mask_fraction, preset, run_experiment, sweep, ConfigOverrides, RunRecord, SweepAxis,
};
use dair_core::objectives::Mode;

/// Everything but wall time, which is measured rather than derived.
fn strip_time(records: &[RunRecord]) -> Vec<RunRecord> {
    records
        .iter()
        .map(|r| RunRecord {
            wall_time_s: 0.0,
            ..r.clone()
        })
        .collect()
}

fn quick_toy_logistic() -> dair_core::harness::ExperimentConfig {
    let mut cfg = preset("toy-logistic").unwrap();
    cfg.apply(ConfigOverrides {
        replicates: Some(2),
        samples: Some(300),
        ..Default::default()
    });
    cfg.parallel = 1;
    cfg
}

#[test]
fn preset_runs_are_bit_reproducible() {
    let cfg = quick_toy_logistic();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(strip_time(&a), strip_time(&b));
}

#[test]
fn replicate_count_controls_record_count() {
    let mut cfg = quick_toy_logistic();
    cfg.replicates = 3;
    cfg.lambdas = vec![0.5, 10.0];
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records.len(), 6);
    // seeds are base + replicate index, shared across lambda values
    for lam in [0.5, 10.0] {
        let seeds: Vec<u64> = records
            .iter()
            .filter(|r| r.lambda == lam)
            .map(|r| r.seed)
            .collect();
        assert_eq!(
            seeds,
            vec![cfg.base_seed, cfg.base_seed + 1, cfg.base_seed + 2]
        );
    }
}

#[test]
fn lambda_zero_dair_equals_da_erm_records() {
    let mut dair_cfg = quick_toy_logistic();
    dair_cfg.lambdas = vec![0.0];
    let dair_records = run_experiment(&dair_cfg).unwrap();

    let mut da_cfg = quick_toy_logistic();
    da_cfg.lambdas = vec![0.0];
    da_cfg.objective.mode = Mode::DaErm;
    let da_records = run_experiment(&da_cfg).unwrap();

    for (a, b) in dair_records.iter().zip(&da_records) {
        assert_eq!(
            a.metric("test_accuracy"),
            b.metric("test_accuracy"),
            "same seeds must give identical accuracy at lambda 0"
        );
        assert_eq!(a.metric("iterations"), b.metric("iterations"));
    }
}

#[test]
fn sweep_groups_by_axis() {
    let mut cfg = quick_toy_logistic();
    cfg.replicates = 1;
    cfg.noises = vec![0.0, 0.2, 0.4];
    let grouped = sweep(&cfg, SweepAxis::Noise).unwrap();
    assert_eq!(grouped.len(), 3);
    for (value, records) in &grouped {
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].noise, *value);
    }

    cfg.noises = vec![];
    assert!(sweep(&cfg, SweepAxis::Noise).is_err());
}

#[test]
fn missing_idx_files_fail_before_training() {
    let mut cfg = preset("colored-adv").unwrap();
    cfg.mnist = Some(dair_core::harness::MnistPaths::under(std::path::Path::new(
        "/nonexistent",
    )));
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("missing data file"), "{err}");
}

#[test]
fn fraction_masking_matches_rounding_rule() {
    let p = dair_core::oracle::ToyRegressionParams::reference();
    let ds = dair_core::data::gen_spurious_regression(20_000, &p, 1).unwrap();
    let masked = mask_fraction(ds.train, 0.1, 42);
    let paired = masked.iter().filter(|s| s.is_paired()).count();
    assert_eq!(paired, 2000);
}

#[test]
fn toy_regression_preset_approaches_limit_weights() {
    // smaller but same-shape version of the headline run: lambda = 100
    // drives the learned regressor toward (1, 0)
    let mut cfg = preset("toy-regression").unwrap();
    cfg.apply(ConfigOverrides {
        samples: Some(20_000),
        replicates: Some(1),
        ..Default::default()
    });
    cfg.parallel = 1;
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records.len(), 1);
    let w1 = records[0].metric("w1").unwrap();
    let w2 = records[0].metric("w2").unwrap();
    assert!((w1 - 1.0).abs() <= 0.05, "w1 = {w1}");
    assert!(w2.abs() <= 0.05, "w2 = {w2}");
}
