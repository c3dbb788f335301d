//! Learning-rate probe for the digit CNN (run with --ignored --nocapture).

use dair_core::harness::{build_colored_task, default_mnist_paths};
use dair_core::data::{ColorScheme, SchemeId};
use dair_core::objectives::{LossKind, Mode, ObjectiveSpec, RegularizerKind};
use dair_core::train::*;

#[test]
#[ignore]
fn lr_sweep_colored_erm() {
    let paths = default_mnist_paths();
    let task = build_colored_task(
        &paths,
        SchemeId::Color(ColorScheme::C1),
        SchemeId::Color(ColorScheme::C2),
        SchemeId::Color(ColorScheme::C3),
        SchemeId::Color(ColorScheme::C1),
        4000, 0.25, 1.0, 2024,
    ).unwrap();
    let model = ModelSpec::ConvNet { in_channels: 3, classes: 1 };
    let erm = ObjectiveSpec { loss: LossKind::LogisticBinary, regularizer: RegularizerKind::None, lambda: 0.0, mode: Mode::Erm };
    for lr in [0.005, 0.02, 0.1, 0.3] {
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: Some(64),
            schedule: vec![ScheduleSpan { epochs: 4, lr }],
            optimizer: OptimizerKind::Sgd,
            seed: 2024,
            grad_tolerance: None,
            max_iterations: None,
        };
        let (params, history) = train(&model, &erm, &task.train, &cfg, None, None).unwrap();
        let losses: Vec<String> = history.epochs.iter().map(|e| format!("{:.4}", e.base_loss_mean)).collect();
        let acc = evaluate(&params, &model, &task.accuracy_set, Task::Accuracy).unwrap();
        let norm = history.epochs.last().unwrap().grad_norm.unwrap_or(f64::NAN);
        println!("lr {lr}: per-epoch base loss {losses:?} test-acc {acc:.4} last-grad-norm {norm:.3e}");
    }
}
