//! Gradient-descent and minibatch-SGD training with paired augmentation,
//! plus run-to-convergence mode and evaluation.

use std::collections::HashMap;

use dair_autodiff::{backward, forward, Graph, GraphBuilder, NodeId, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::TrainError;
use crate::objectives::{
    self, CmValue, CompositeParts, LossKind, ObjectiveSpec,
};
use crate::train::model::ModelSpec;
use crate::train::optim::{Optimizer, OptimizerKind};
use crate::util::{derive_seed, derive_seed_indexed, rng_from, shuffled_indices};

/// One span of the learning-rate schedule: `epochs` epochs at rate `lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpan {
    pub epochs: usize,
    pub lr: f64,
}

/// Training configuration. `batch_size = None` runs full batch; the
/// schedule spans must partition the epoch range in epoch mode, and the
/// last span extends indefinitely in run-to-convergence mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub schedule: Vec<ScheduleSpan>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    #[serde(default)]
    pub grad_tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl TrainConfig {
    pub fn validate_for_epochs(&self) -> Result<(), TrainError> {
        let covered: usize = self.schedule.iter().map(|s| s.epochs).sum();
        if covered != self.epochs {
            return Err(TrainError::ScheduleMismatch {
                covered,
                epochs: self.epochs,
            });
        }
        self.validate_rates()
    }

    fn validate_rates(&self) -> Result<(), TrainError> {
        for span in &self.schedule {
            if !(span.lr > 0.0 && span.lr.is_finite()) {
                return Err(TrainError::BadLearningRate { lr: span.lr });
            }
        }
        if let Some(tol) = self.grad_tolerance {
            if !(tol > 0.0) {
                return Err(TrainError::BadTolerance { tol });
            }
        }
        Ok(())
    }

    /// Learning rate for the given epoch (or iteration); the last span
    /// extends beyond the declared range.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut remaining = epoch;
        for span in &self.schedule {
            if remaining < span.epochs {
                return span.lr;
            }
            remaining -= span.epochs;
        }
        self.schedule.last().map(|s| s.lr).unwrap_or(0.0)
    }
}

/// Evaluation numbers attached to an epoch by the caller's hook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: Option<f64>,
    pub rmse: Option<f64>,
    pub consistency: Option<f64>,
}

/// Per-step record: objective value, its data term, and the pre-lambda
/// per-pair penalty mean when a regularizer is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub objective: f64,
    pub base_loss: f64,
    pub regularizer: Option<f64>,
    pub grad_norm: Option<f64>,
}

/// Per-epoch aggregate of the step records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub objective_mean: f64,
    pub base_loss_mean: f64,
    pub regularizer_mean: Option<f64>,
    pub grad_norm: Option<f64>,
    pub eval: Option<EvalMetrics>,
}

/// Full training trace: per-step and per-epoch views of the same run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepStats>,
    pub epochs: Vec<EpochStats>,
}

/// Convergence status of a run-to-tolerance session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    /// Gradient norm first dropped below tolerance after this many updates.
    Converged { iterations: usize },
    /// Iteration cap reached with this gradient norm still above tolerance.
    NotConverged { final_norm: f64 },
}

/// Anything that can materialize a (possibly re-augmented) epoch view.
/// Fixed streams hand out borrows; regenerating datasets build fresh views.
pub trait SampleStream {
    fn epoch_view(&self, epoch: usize) -> Result<std::borrow::Cow<'_, [PairedSample]>, TrainError>;
}

impl SampleStream for crate::data::PairedDataset {
    fn epoch_view(
        &self,
        epoch: usize,
    ) -> Result<std::borrow::Cow<'_, [PairedSample]>, TrainError> {
        Ok(std::borrow::Cow::Owned(crate::data::PairedDataset::epoch_view(
            self, epoch,
        )?))
    }
}

/// Fixed paired samples: every epoch sees the same view.
impl SampleStream for [PairedSample] {
    fn epoch_view(
        &self,
        _epoch: usize,
    ) -> Result<std::borrow::Cow<'_, [PairedSample]>, TrainError> {
        Ok(std::borrow::Cow::Borrowed(self))
    }
}

impl SampleStream for Vec<PairedSample> {
    fn epoch_view(
        &self,
        _epoch: usize,
    ) -> Result<std::borrow::Cow<'_, [PairedSample]>, TrainError> {
        Ok(std::borrow::Cow::Borrowed(self.as_slice()))
    }
}

// ---------------------------------------------------------------------------
// batch graph assembly
// ---------------------------------------------------------------------------

struct BatchGraph {
    graph: Graph,
    data_term: NodeId,
    penalty: Option<NodeId>,
}

/// Stacks per-sample tensors into one batch tensor `[n, ...]`.
fn stack<'a>(tensors: impl ExactSizeIterator<Item = &'a Tensor>) -> Tensor {
    let mut iter = tensors;
    let n = iter.len();
    assert!(n > 0, "stack of zero tensors");
    let first = iter.next().expect("nonempty");
    let mut shape = vec![n];
    shape.extend_from_slice(first.shape());
    let elem = first.numel();
    let mut data = Vec::with_capacity(n * elem);
    data.extend_from_slice(first.data());
    for t in iter {
        debug_assert_eq!(t.numel(), elem);
        data.extend_from_slice(t.data());
    }
    Tensor::new(shape, data).expect("stacked batch")
}

/// Builds the target tensor for a block of samples under the given loss.
fn target_tensor(
    loss: &LossKind,
    samples: &[&PairedSample],
    classes: usize,
) -> Result<Tensor, TrainError> {
    match loss {
        LossKind::Squared | LossKind::Huber { .. } | LossKind::Tilted { .. } => {
            let vals: Vec<f64> = samples
                .iter()
                .map(|s| s.label.value().unwrap_or_default())
                .collect();
            Ok(Tensor::new(vec![vals.len()], vals).expect("targets"))
        }
        LossKind::LogisticBinary => {
            let vals: Vec<f64> = samples
                .iter()
                .map(|s| 2.0 * s.label.class().unwrap_or(0) as f64 - 1.0)
                .collect();
            Ok(Tensor::new(vec![vals.len()], vals).expect("signs"))
        }
        LossKind::CrossEntropy => {
            let idx: Vec<usize> = samples
                .iter()
                .map(|s| s.label.class().unwrap_or(0))
                .collect();
            Ok(objectives::one_hot(&idx, classes)?)
        }
    }
}

/// Shape of the target input node for `n` samples.
fn target_shape(loss: &LossKind, n: usize, classes: usize) -> Vec<usize> {
    match loss {
        LossKind::CrossEntropy => vec![n, classes],
        _ => vec![n],
    }
}

/// Per-sample loss node from raw model outputs.
fn per_sample_loss(
    g: &mut GraphBuilder,
    loss: &LossKind,
    raw: NodeId,
    target: NodeId,
    _n: usize,
) -> Result<NodeId, TrainError> {
    Ok(objectives::base_loss(g, loss, raw, target)?)
}

fn check_compatibility(model: &ModelSpec, objective: &ObjectiveSpec) -> Result<(), TrainError> {
    objective.validate()?;
    let out = model.output_dim();
    let mismatch = |expected: &str| TrainError::ModelObjectiveMismatch {
        got: format!("{out}"),
        expected: expected.to_string(),
    };
    match objective.loss {
        LossKind::CrossEntropy if out < 2 => return Err(mismatch("K >= 2 logits")),
        LossKind::LogisticBinary | LossKind::Squared | LossKind::Huber { .. }
        | LossKind::Tilted { .. }
            if out != 1 =>
        {
            return Err(mismatch("a single output"))
        }
        _ => {}
    }
    if objective.regularizer.needs_distribution() && out < 2 {
        return Err(mismatch("an output distribution (K >= 2)"));
    }
    Ok(())
}

/// Builds the objective graph for a batch with `n_paired` paired samples
/// followed by `n_unpaired` originals-only samples. Samples lacking twins
/// contribute plain ERM terms.
fn build_batch_graph(
    model: &ModelSpec,
    objective: &ObjectiveSpec,
    n_paired: usize,
    n_unpaired: usize,
) -> Result<BatchGraph, TrainError> {
    let mut g = GraphBuilder::new();
    let params = model.declare_params(&mut g)?;
    let classes = model.output_dim();
    let feat = model.input_shape();
    let in_shape = |n: usize| {
        let mut s = vec![n];
        s.extend_from_slice(&feat);
        s
    };

    let paired = if n_paired > 0 && objective.uses_augmented() {
        let x_orig = g.input("x_orig", in_shape(n_paired))?;
        let x_aug = g.input("x_aug", in_shape(n_paired))?;
        let target = g.input("target_p", target_shape(&objective.loss, n_paired, classes))?;
        let out_orig = model.forward(&mut g, &params, x_orig, n_paired)?;
        let out_aug = model.forward(&mut g, &params, x_aug, n_paired)?;
        let loss_orig = per_sample_loss(&mut g, &objective.loss, out_orig, target, n_paired)?;
        let loss_aug = per_sample_loss(&mut g, &objective.loss, out_aug, target, n_paired)?;
        let (q, q_aug) = if objective.regularizer.needs_distribution() {
            let lso = g.log_softmax(out_orig)?;
            let lsa = g.log_softmax(out_aug)?;
            (Some(g.exp(lso)), Some(g.exp(lsa)))
        } else {
            (None, None)
        };
        Some(objectives::composite_objective_parts(
            &mut g,
            objective,
            objectives::CompositeInputs {
                loss: loss_orig,
                loss_aug: Some(loss_aug),
                q,
                q_aug,
            },
        )?)
    } else {
        None
    };

    // Unpaired samples (and every sample under plain ERM) contribute their
    // original-branch loss only.
    let n_plain = if objective.uses_augmented() { n_unpaired } else { n_paired + n_unpaired };
    let plain = if n_plain > 0 {
        let x = g.input("x_plain", in_shape(n_plain))?;
        let target = g.input("target_u", target_shape(&objective.loss, n_plain, classes))?;
        let out = model.forward(&mut g, &params, x, n_plain)?;
        Some(per_sample_loss(&mut g, &objective.loss, out, target, n_plain)?)
    } else {
        None
    };

    let (objective_node, data_term, penalty) = match (paired, plain) {
        (Some(parts), None) => (parts.objective, parts.data_term, parts.penalty_mean),
        (None, Some(losses)) => {
            let agg = objectives::aggregate(&mut g, &objective.loss, losses)?;
            (agg, agg, None)
        }
        (Some(parts), Some(plain_losses)) => {
            combine_partial(&mut g, objective, parts, plain_losses, n_paired, n_plain)?
        }
        (None, None) => return Err(TrainError::EmptyTestSet),
    };

    let graph = g.finish(objective_node);
    Ok(BatchGraph {
        graph,
        data_term,
        penalty,
    })
}

/// Weighted combination of the paired composite and the plain ERM block:
/// `(n_p * paired + n_u * plain) / (n_p + n_u)`. A tilted base loss instead
/// pools every per-sample loss present and re-adds the pair penalty scaled
/// by the paired share.
fn combine_partial(
    g: &mut GraphBuilder,
    objective: &ObjectiveSpec,
    parts: CompositeParts,
    plain_losses: NodeId,
    n_paired: usize,
    n_plain: usize,
) -> Result<(NodeId, NodeId, Option<NodeId>), TrainError> {
    let total = (n_paired + n_plain) as f64;
    let wp = n_paired as f64 / total;
    let wu = n_plain as f64 / total;
    if let LossKind::Tilted { t } = objective.loss {
        let pooled = g.concat(parts.pooled_losses.expect("tilted composite pools losses"), plain_losses)?;
        let data = objectives::tilted_aggregate(g, pooled, t)?;
        let with_penalty = match parts.penalty_mean {
            Some(pen) if objective.lambda > 0.0 => {
                let scaled = g.mul_scalar(pen, objective.lambda * wp);
                g.add(data, scaled)?
            }
            _ => data,
        };
        return Ok((with_penalty, data, parts.penalty_mean));
    }
    let plain_mean = g.mean(plain_losses);
    let a = g.mul_scalar(parts.objective, wp);
    let b = g.mul_scalar(plain_mean, wu);
    let combined = g.add(a, b)?;
    let da = g.mul_scalar(parts.data_term, wp);
    let db = g.mul_scalar(plain_mean, wu);
    let data_combined = g.add(da, db)?;
    Ok((combined, data_combined, parts.penalty_mean))
}

/// Splits a batch into paired-first order and binds all graph inputs.
fn bind_batch<'a>(
    objective: &ObjectiveSpec,
    batch: &[&'a PairedSample],
    classes: usize,
    loss: &LossKind,
) -> Result<(usize, usize, Vec<(String, Tensor)>), TrainError> {
    let (paired, unpaired): (Vec<&PairedSample>, Vec<&PairedSample>) = if objective.uses_augmented()
    {
        batch.iter().partition(|s| s.is_paired())
    } else {
        (Vec::new(), batch.to_vec())
    };
    let mut binds: Vec<(String, Tensor)> = Vec::new();
    if !paired.is_empty() {
        binds.push((
            "x_orig".into(),
            stack(paired.iter().map(|s| &s.original)),
        ));
        binds.push((
            "x_aug".into(),
            stack(paired.iter().map(|s| s.augmented.as_ref().expect("paired"))),
        ));
        binds.push(("target_p".into(), target_tensor(loss, &paired, classes)?));
    }
    if !unpaired.is_empty() {
        binds.push((
            "x_plain".into(),
            stack(unpaired.iter().map(|s| &s.original)),
        ));
        binds.push(("target_u".into(), target_tensor(loss, &unpaired, classes)?));
    }
    Ok((paired.len(), unpaired.len(), binds))
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

/// Cadence of gradient-norm tracking in minibatch mode.
const MINIBATCH_NORM_EVERY: usize = 50;

/// Trains `model` under `objective` for `cfg.epochs` epochs.
///
/// `initial` overrides the seeded initialization (used by matched-seed
/// comparisons and single-step tests). `eval_hook` runs after each epoch
/// and its result lands in that epoch's history entry.
pub fn train(
    model: &ModelSpec,
    objective: &ObjectiveSpec,
    data: &impl SampleStream,
    cfg: &TrainConfig,
    initial: Option<ParamSet>,
    mut eval_hook: Option<&mut dyn FnMut(usize, &ParamSet) -> Option<EvalMetrics>>,
) -> Result<(ParamSet, TrainHistory), TrainError> {
    cfg.validate_for_epochs()?;
    check_compatibility(model, objective)?;

    let mut params = match initial {
        Some(p) => p,
        None => model.init_params(&mut rng_from(derive_seed(cfg.seed, "init"))),
    };
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut history = TrainHistory::default();
    let mut graphs: HashMap<(usize, usize), BatchGraph> = HashMap::new();
    let classes = model.output_dim();
    let full_batch = cfg.batch_size.is_none();
    let mut global_step = 0usize;
    // Full-batch training over a fixed stream binds the same tensors every
    // iteration; build them once.
    let mut fixed_binds: Option<(usize, usize, Vec<(String, Tensor)>)> = None;

    for epoch in 0..cfg.epochs {
        let view = data.epoch_view(epoch)?;
        if view.is_empty() {
            return Err(TrainError::EmptyTestSet);
        }
        let fixed_view = matches!(view, std::borrow::Cow::Borrowed(_));
        let lr = cfg.lr_at(epoch);
        let mut epoch_steps: Vec<StepStats> = Vec::new();

        let run_step = |n_p: usize,
                            n_u: usize,
                            binds: &[(String, Tensor)],
                            graphs: &mut HashMap<(usize, usize), BatchGraph>,
                            params: &mut ParamSet,
                            optimizer: &mut Optimizer,
                            epoch_steps: &mut Vec<StepStats>,
                            global_step: &mut usize|
         -> Result<(), TrainError> {
            let bg = match graphs.entry((n_p, n_u)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(build_batch_graph(model, objective, n_p, n_u)?)
                }
            };
            let bind_refs: Vec<(&str, &Tensor)> =
                binds.iter().map(|(n, t)| (n.as_str(), t)).collect();
            let (out, tape) = forward(&bg.graph, &bind_refs, params)?;
            let objective_value = out.item();
            if !objective_value.is_finite() {
                return Err(TrainError::NonFiniteObjective {
                    value: objective_value,
                    epoch,
                    step: *global_step,
                });
            }
            let grads = backward(&bg.graph, &tape, params, 1.0)?;
            let track_norm = full_batch || *global_step % MINIBATCH_NORM_EVERY == 0;
            let grad_norm = track_norm.then(|| grads.l2_norm());
            epoch_steps.push(StepStats {
                objective: objective_value,
                base_loss: tape.value(bg.data_term).item(),
                regularizer: bg.penalty.map(|p| tape.value(p).item()),
                grad_norm,
            });
            optimizer.step(params, &grads, lr)?;
            *global_step += 1;
            Ok(())
        };

        if full_batch {
            // no shuffling: the single batch is the whole view
            if fixed_binds.is_none() || !fixed_view {
                let batch: Vec<&PairedSample> = view.iter().collect();
                fixed_binds = Some(bind_batch(objective, &batch, classes, &objective.loss)?);
            }
            let (n_p, n_u, binds) = fixed_binds.as_ref().expect("just set");
            run_step(
                *n_p,
                *n_u,
                binds,
                &mut graphs,
                &mut params,
                &mut optimizer,
                &mut epoch_steps,
                &mut global_step,
            )?;
        } else {
            let order = shuffled_indices(
                view.len(),
                &mut rng_from(derive_seed_indexed(cfg.seed, "shuffle", epoch as u64)),
            );
            let batch_size = cfg.batch_size.unwrap_or(view.len());
            for chunk in order.chunks(batch_size) {
                let batch: Vec<&PairedSample> = chunk.iter().map(|&i| &view[i]).collect();
                let (n_p, n_u, binds) =
                    bind_batch(objective, &batch, classes, &objective.loss)?;
                run_step(
                    n_p,
                    n_u,
                    &binds,
                    &mut graphs,
                    &mut params,
                    &mut optimizer,
                    &mut epoch_steps,
                    &mut global_step,
                )?;
            }
        }

        let n_steps = epoch_steps.len() as f64;
        let reg_values: Vec<f64> = epoch_steps.iter().filter_map(|s| s.regularizer).collect();
        let epoch_stat = EpochStats {
            objective_mean: epoch_steps.iter().map(|s| s.objective).sum::<f64>() / n_steps,
            base_loss_mean: epoch_steps.iter().map(|s| s.base_loss).sum::<f64>() / n_steps,
            regularizer_mean: if reg_values.is_empty() {
                None
            } else {
                Some(reg_values.iter().sum::<f64>() / reg_values.len() as f64)
            },
            grad_norm: epoch_steps.iter().rev().find_map(|s| s.grad_norm),
            eval: eval_hook.as_mut().and_then(|h| h(epoch, &params)),
        };
        history.steps.extend(epoch_steps);
        history.epochs.push(epoch_stat);
    }
    Ok((params, history))
}

/// Full-batch training until the gradient norm first drops below
/// `cfg.grad_tolerance`, capped at `cfg.max_iterations`.
pub fn train_to_tolerance(
    model: &ModelSpec,
    objective: &ObjectiveSpec,
    data: &impl SampleStream,
    cfg: &TrainConfig,
    initial: Option<ParamSet>,
) -> Result<(ParamSet, Convergence, TrainHistory), TrainError> {
    let tol = cfg.grad_tolerance.ok_or(TrainError::MissingTolerance)?;
    if !(tol > 0.0) {
        return Err(TrainError::BadTolerance { tol });
    }
    if cfg.batch_size.is_some() {
        return Err(TrainError::MissingTolerance);
    }
    cfg.validate_rates()?;
    check_compatibility(model, objective)?;
    let cap = cfg.max_iterations.unwrap_or(1_000_000);

    let mut params = match initial {
        Some(p) => p,
        None => model.init_params(&mut rng_from(derive_seed(cfg.seed, "init"))),
    };
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut history = TrainHistory::default();
    let classes = model.output_dim();

    let view = data.epoch_view(0)?;
    let batch: Vec<&PairedSample> = view.iter().collect();
    let (n_p, n_u, binds) = bind_batch(objective, &batch, classes, &objective.loss)?;
    let bg = build_batch_graph(model, objective, n_p, n_u)?;
    let bind_refs: Vec<(&str, &Tensor)> = binds.iter().map(|(n, t)| (n.as_str(), t)).collect();

    for iteration in 0..cap {
        let (out, tape) = forward(&bg.graph, &bind_refs, &params)?;
        let objective_value = out.item();
        if !objective_value.is_finite() {
            return Err(TrainError::NonFiniteObjective {
                value: objective_value,
                epoch: 0,
                step: iteration,
            });
        }
        let grads = backward(&bg.graph, &tape, &params, 1.0)?;
        let norm = grads.l2_norm();
        history.steps.push(StepStats {
            objective: objective_value,
            base_loss: tape.value(bg.data_term).item(),
            regularizer: bg.penalty.map(|p| tape.value(p).item()),
            grad_norm: Some(norm),
        });
        if norm < tol {
            return Ok((params, Convergence::Converged { iterations: iteration }, history));
        }
        optimizer.step(&mut params, &grads, cfg.lr_at(iteration))?;
    }
    let (_, tape) = forward(&bg.graph, &bind_refs, &params)?;
    let grads = backward(&bg.graph, &tape, &params, 1.0)?;
    let final_norm = grads.l2_norm();
    if final_norm < tol {
        return Ok((params, Convergence::Converged { iterations: cap }, history));
    }
    Ok((params, Convergence::NotConverged { final_norm }, history))
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

/// Metric computed by [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Accuracy,
    Rmse,
}

const EVAL_CHUNK: usize = 256;

/// Which branch of the paired test samples to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Original,
    Augmented,
}

/// Raw model outputs for a block of feature tensors.
fn model_outputs(
    params: &ParamSet,
    model: &ModelSpec,
    features: &[&Tensor],
    cache: &mut HashMap<usize, Graph>,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(EVAL_CHUNK) {
        let n = chunk.len();
        let graph = match cache.entry(n) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let mut g = GraphBuilder::new();
                let ps = model.declare_params(&mut g)?;
                let mut shape = vec![n];
                shape.extend_from_slice(&model.input_shape());
                let x = g.input("x", shape)?;
                let y = model.forward(&mut g, &ps, x, n)?;
                e.insert(g.finish(y))
            }
        };
        let x = stack(chunk.iter().copied());
        let (y, _) = forward(graph, &[("x", &x)], params)?;
        let k = model.output_dim();
        for row in 0..n {
            out.push(y.data()[row * k..(row + 1) * k].to_vec());
        }
    }
    Ok(out)
}

/// Class decision from raw outputs: argmax for K >= 2 (first maximum wins),
/// positive-logit threshold for a single output. Both rules are invariant
/// to positive rescaling of the outputs.
pub fn decide_class(raw: &[f64]) -> usize {
    if raw.len() == 1 {
        usize::from(raw[0] > 0.0)
    } else {
        let mut best = 0;
        for (i, v) in raw.iter().enumerate().skip(1) {
            if *v > raw[best] {
                best = i;
            }
        }
        best
    }
}

/// Correctness bits of the chosen branch on a test set.
pub fn correctness_bits(
    params: &ParamSet,
    model: &ModelSpec,
    test: &[PairedSample],
    branch: Branch,
) -> Result<Vec<bool>, TrainError> {
    let mut cache = HashMap::new();
    let features: Vec<&Tensor> = match branch {
        Branch::Original => test.iter().map(|s| &s.original).collect(),
        Branch::Augmented => {
            let mut out = Vec::with_capacity(test.len());
            for s in test {
                out.push(
                    s.augmented
                        .as_ref()
                        .ok_or(TrainError::UnpairedTestSample)?,
                );
            }
            out
        }
    };
    let outputs = model_outputs(params, model, &features, &mut cache)?;
    Ok(outputs
        .iter()
        .zip(test)
        .map(|(raw, s)| decide_class(raw) == s.label.class().unwrap_or(usize::MAX))
        .collect())
}

/// Mean accuracy or root-mean-squared error on the original branch.
pub fn evaluate(
    params: &ParamSet,
    model: &ModelSpec,
    test: &[PairedSample],
    task: Task,
) -> Result<f64, TrainError> {
    if test.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    match task {
        Task::Accuracy => {
            let bits = correctness_bits(params, model, test, Branch::Original)?;
            Ok(bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64)
        }
        Task::Rmse => {
            let mut cache = HashMap::new();
            let features: Vec<&Tensor> = test.iter().map(|s| &s.original).collect();
            let outputs = model_outputs(params, model, &features, &mut cache)?;
            let mse = outputs
                .iter()
                .zip(test)
                .map(|(raw, s)| {
                    let d = raw[0] - s.label.value().unwrap_or_default();
                    d * d
                })
                .sum::<f64>()
                / test.len() as f64;
            Ok(mse.sqrt())
        }
    }
}

/// Consistency metric over a fully paired test set: the fraction of
/// augmented branches classified correctly among pairs whose original was.
pub fn consistency_eval(
    params: &ParamSet,
    model: &ModelSpec,
    paired_test: &[PairedSample],
) -> Result<CmValue, TrainError> {
    if paired_test.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let orig = correctness_bits(params, model, paired_test, Branch::Original)?;
    let aug = correctness_bits(params, model, paired_test, Branch::Augmented)?;
    Ok(objectives::consistency_metric(&orig, &aug)?)
}
