//! Parameter-update rules.

use dair_autodiff::ParamSet;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;

/// Update rule. `Gd` and `Sgd` share the plain step `theta -= lr * g`; the
/// names record whether the caller runs full-batch or minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Gd,
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam with the standard defaults (0.9, 0.999, 1e-8).
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state; Adam keeps first/second moment estimates shaped like
/// the parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Option<ParamSet>,
    v: Option<ParamSet>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &ParamSet,
        lr: f64,
    ) -> Result<(), TrainError> {
        match self.kind {
            OptimizerKind::Gd | OptimizerKind::Sgd => {
                params.axpy(-lr, grads)?;
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let m = self.m.get_or_insert_with(|| params.zeros_like());
                let v = self.v.get_or_insert_with(|| params.zeros_like());
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                m.zip_mut(grads, |mi, g| *mi = beta1 * *mi + (1.0 - beta1) * g)?;
                v.zip_mut(grads, |vi, g| *vi = beta2 * *vi + (1.0 - beta2) * g * g)?;
                // theta -= lr * mhat / (sqrt(vhat) + eps)
                let names: Vec<String> =
                    params.iter().map(|(n, _)| n.to_string()).collect();
                for name in names {
                    let mg = m.get(&name).expect("moment matches params");
                    let vg = v.get(&name).expect("moment matches params");
                    let update: Vec<f64> = mg
                        .data()
                        .iter()
                        .zip(vg.data())
                        .map(|(mi, vi)| {
                            let mhat = mi / bc1;
                            let vhat = vi / bc2;
                            mhat / (vhat.sqrt() + eps)
                        })
                        .collect();
                    let target = params.get_mut(&name).expect("name from params");
                    for (p, u) in target.data_mut().iter_mut().zip(&update) {
                        *p -= lr * u;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dair_autodiff::Tensor;

    #[test]
    fn gd_step_is_hand_computable() {
        // one GD step on f(theta) = theta^2 at theta0 = 1 with lr = 0.25:
        // gradient 2, update 1 - 0.25 * 2 = 0.5
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut grads = ParamSet::new();
        grads.insert("w", Tensor::scalar(2.0)).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Gd);
        opt.step(&mut params, &grads, 0.25).unwrap();
        assert_eq!(params.get("w").unwrap().data()[0], 0.5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction, the first Adam step is lr * sign(g) up to eps.
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut grads = ParamSet::new();
        grads.insert("w", Tensor::scalar(0.3)).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam());
        opt.step(&mut params, &grads, 0.01).unwrap();
        let w = params.get("w").unwrap().data()[0];
        assert!((w - (1.0 - 0.01)).abs() < 1e-6, "w = {w}");
    }
}
