//! Ad-hoc timing probe (run with --ignored --nocapture).

use std::time::Instant;

use dair_core::data::*;
use dair_core::harness::*;
use dair_core::objectives::*;
use dair_core::train::*;
use dair_core::util::*;

#[test]
#[ignore]
fn time_colored_epoch_pieces() {
    let paths = default_mnist_paths();
    let digits = load_idx(&paths.train_images, &paths.train_labels).unwrap();
    let subset = &digits[..20000];
    let labels: Vec<usize> = subset.iter().map(|d| binarize_digits(d).unwrap()).collect();
    let mut rng = rng_from(1);
    let noisy = inject_label_noise(&labels, 0.25, NoiseMode::BernoulliFlip, &mut rng).unwrap();

    let t0 = Instant::now();
    let mut base = Vec::new();
    for (i, d) in subset.iter().enumerate() {
        let original = colorize(d, SchemeId::Color(ColorScheme::C1), noisy[i], &mut rng).unwrap();
        base.push(BaseSample { original, carrier: Carrier::Digit(d.clone()), label: Label::Class(noisy[i]), pair_id: i as u64 });
    }
    println!("base build: {:?}", t0.elapsed());

    let ds = make_paired_dataset(base, Augmenter::Scheme(SchemeId::Color(ColorScheme::C2)), 1.0, true, 7).unwrap();
    let t1 = Instant::now();
    let view = ds.epoch_view(0).unwrap();
    println!("epoch_view: {:?}", t1.elapsed());

    let model = ModelSpec::ConvNet { in_channels: 3, classes: 1 };
    let objective = ObjectiveSpec { loss: LossKind::LogisticBinary, regularizer: RegularizerKind::Sq, lambda: 1000.0, mode: Mode::Dair };
    let cfg = TrainConfig { epochs: 1, batch_size: Some(64), schedule: vec![ScheduleSpan { epochs: 1, lr: 0.005 }], optimizer: OptimizerKind::Sgd, seed: 3, grad_tolerance: None, max_iterations: None };

    // train over just the first 640 samples (10 steps) to time steps
    let small: Vec<PairedSample> = view[..640].to_vec();
    let t2 = Instant::now();
    let _ = train(&model, &objective, &small, &cfg, None, None).unwrap();
    println!("10 DAIR steps: {:?} (per step {:?})", t2.elapsed(), t2.elapsed() / 10);

    // ERM comparison
    let erm = ObjectiveSpec { loss: LossKind::LogisticBinary, regularizer: RegularizerKind::None, lambda: 0.0, mode: Mode::Erm };
    let t3 = Instant::now();
    let _ = train(&model, &erm, &small, &cfg, None, None).unwrap();
    println!("10 ERM steps: {:?} (per step {:?})", t3.elapsed(), t3.elapsed() / 10);

    // eval timing
    let test: Vec<PairedSample> = view[..2560].iter().map(|s| PairedSample::new(s.original.clone(), None, s.label, s.pair_id)).collect();
    let (params, _) = train(&model, &erm, &small, &cfg, None, None).unwrap();
    let t4 = Instant::now();
    let _ = evaluate(&params, &model, &test, Task::Accuracy).unwrap();
    println!("eval 2560: {:?}", t4.elapsed());
}
