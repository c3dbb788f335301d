//! Training objectives: base losses, loss-space and output-space
//! consistency regularizers, the ERM / DA-ERM / DAIR composites, and the
//! evaluation-time consistency metric.
//!
//! All loss builders are pure functions over graph nodes: they extend a
//! [`GraphBuilder`] and return the node holding per-sample losses (shape
//! `[n]`) or the aggregated scalar. Nothing here owns state, so builders are
//! freely shareable across threads.

use dair_autodiff::{GraphBuilder, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::ObjectiveError;

/// Floor applied to square-root arguments inside the loss-discrepancy
/// regularizer. Late in training per-sample losses approach zero and an
/// unfloored 1/sqrt would blow up the gradient.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Floor applied to probabilities inside the KL output regularizer.
pub const PROB_FLOOR: f64 = 1e-12;

/// Base per-sample loss family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    /// (prediction - target)^2 on a scalar prediction.
    Squared,
    /// log(1 + exp(-sign * logit)) on a single logit, sign in {-1, +1}.
    LogisticBinary,
    /// -log softmax(logits)[class] over K classes.
    CrossEntropy,
    /// Huber loss of the residual with transition point `delta`.
    Huber { delta: f64 },
    /// Squared per-sample losses combined by the tilted aggregate
    /// (1/t) log mean exp(t * loss); negative `t` down-weights high-loss
    /// samples.
    Tilted { t: f64 },
}

impl LossKind {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        match *self {
            LossKind::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(ObjectiveError::BadHuberDelta { delta })
            }
            LossKind::Tilted { t } if t == 0.0 || !t.is_finite() => {
                Err(ObjectiveError::BadTilt { t })
            }
            _ => Ok(()),
        }
    }
}

/// Consistency regularizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    /// No penalty; DAIR degenerates to DA-ERM.
    None,
    /// (sqrt(loss) - sqrt(loss_aug))^2 per pair.
    Sq,
    /// |loss - loss_aug| per pair.
    L1,
    /// KL(q(z) || q(z_aug)) between output distributions.
    KlOutput,
    /// Squared L2 distance between output distributions.
    L2Output,
}

impl RegularizerKind {
    /// Output-distribution penalties only apply to models that emit a
    /// distribution over classes.
    pub fn needs_distribution(&self) -> bool {
        matches!(self, RegularizerKind::KlOutput | RegularizerKind::L2Output)
    }
}

/// Which composite objective trains the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Erm,
    DaErm,
    Dair,
}

/// A fully determined training objective: base loss, regularizer, strength,
/// and composite mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub loss: LossKind,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    pub mode: Mode,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        self.loss.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ObjectiveError::BadLambda { lambda: self.lambda });
        }
        Ok(())
    }

    /// True when the augmented branch participates at all.
    pub fn uses_augmented(&self) -> bool {
        !matches!(self.mode, Mode::Erm)
    }
}

/// A probability vector: entries in [0, 1] summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution(Vec<f64>);

impl OutputDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, ObjectiveError> {
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(ObjectiveError::BadDistribution {
                reason: "entry outside [0, 1]",
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ObjectiveError::BadDistribution {
                reason: "entries do not sum to 1 within 1e-9",
            });
        }
        Ok(Self(probs))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// per-sample base losses (graph builders)
// ---------------------------------------------------------------------------

/// `(pred - target)^2`, elementwise over `[n]`.
pub fn squared_loss(
    g: &mut GraphBuilder,
    pred: NodeId,
    target: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let r = g.sub(pred, target)?;
    Ok(g.mul(r, r)?)
}

/// Huber loss of the residual, elementwise over `[n]`.
pub fn huber_loss(
    g: &mut GraphBuilder,
    pred: NodeId,
    target: NodeId,
    delta: f64,
) -> Result<NodeId, ObjectiveError> {
    LossKind::Huber { delta }.validate()?;
    let r = g.sub(pred, target)?;
    Ok(g.huber(r, delta)?)
}

/// Binary logistic loss `log(1 + exp(-sign * logit))` with labels encoded as
/// signs (+1 / -1), elementwise over `[n]`.
pub fn logistic_loss(
    g: &mut GraphBuilder,
    logit: NodeId,
    sign: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let margin = g.mul(logit, sign)?;
    let neg = g.mul_scalar(margin, -1.0);
    Ok(g.softplus(neg))
}

/// Cross-entropy `-log softmax(logits)[class]` with `one_hot` targets,
/// `[n, k] -> [n]`.
pub fn cross_entropy_loss(
    g: &mut GraphBuilder,
    logits: NodeId,
    one_hot: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let ls = g.log_softmax(logits)?;
    let picked = g.mul(ls, one_hot)?;
    let row = g.row_sum(picked)?;
    Ok(g.mul_scalar(row, -1.0))
}

/// Encodes class indices as one-hot rows; out-of-range indices fail.
pub fn one_hot(classes: &[usize], k: usize) -> Result<dair_autodiff::Tensor, ObjectiveError> {
    let mut data = vec![0.0; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        if c >= k {
            return Err(ObjectiveError::ClassOutOfRange { class: c, k });
        }
        data[i * k + c] = 1.0;
    }
    Ok(dair_autodiff::Tensor::new(vec![classes.len(), k], data).expect("one-hot tensor"))
}

/// Per-sample base loss for any kind. `prediction` holds raw model outputs
/// (`[n]` or `[n, 1]` for the scalar kinds, `[n, k]` logits for
/// cross-entropy) and `target` the matching values / signs / one-hot rows.
/// Tilted is a batch aggregator over squared per-sample losses, so its
/// per-sample loss is the squared one.
pub fn base_loss(
    g: &mut GraphBuilder,
    kind: &LossKind,
    prediction: NodeId,
    target: NodeId,
) -> Result<NodeId, ObjectiveError> {
    kind.validate()?;
    let squeeze = |g: &mut GraphBuilder, node: NodeId| -> Result<NodeId, ObjectiveError> {
        let shape = g.node_shape(node).to_vec();
        match shape.as_slice() {
            [_] => Ok(node),
            [n, 1] => Ok(g.reshape(node, vec![*n])?),
            _ => Err(ObjectiveError::Graph(dair_autodiff::GraphError::BadRank {
                op: "base_loss",
                expected: "[n] or [n, 1] predictions",
                got: shape,
            })),
        }
    };
    match kind {
        LossKind::Squared | LossKind::Tilted { .. } => {
            let pred = squeeze(g, prediction)?;
            squared_loss(g, pred, target)
        }
        LossKind::Huber { delta } => {
            let pred = squeeze(g, prediction)?;
            huber_loss(g, pred, target, *delta)
        }
        LossKind::LogisticBinary => {
            let logit = squeeze(g, prediction)?;
            logistic_loss(g, logit, target)
        }
        LossKind::CrossEntropy => cross_entropy_loss(g, prediction, target),
    }
}

// ---------------------------------------------------------------------------
// aggregation
// ---------------------------------------------------------------------------

/// Plain mean over per-sample losses.
pub fn mean_aggregate(g: &mut GraphBuilder, losses: NodeId) -> NodeId {
    g.mean(losses)
}

/// Tilted aggregate `(1/t) log mean exp(t * loss)`.
pub fn tilted_aggregate(
    g: &mut GraphBuilder,
    losses: NodeId,
    t: f64,
) -> Result<NodeId, ObjectiveError> {
    LossKind::Tilted { t }.validate()?;
    let scaled = g.mul_scalar(losses, t);
    let e = g.exp(scaled);
    let m = g.mean(e);
    let lg = g.log(m);
    Ok(g.mul_scalar(lg, 1.0 / t))
}

/// Aggregates per-sample losses according to the loss kind.
pub fn aggregate(
    g: &mut GraphBuilder,
    kind: &LossKind,
    losses: NodeId,
) -> Result<NodeId, ObjectiveError> {
    match *kind {
        LossKind::Tilted { t } => tilted_aggregate(g, losses, t),
        _ => Ok(mean_aggregate(g, losses)),
    }
}

// ---------------------------------------------------------------------------
// regularizers
// ---------------------------------------------------------------------------

/// `max(x, LOSS_FLOOR)` then square root; gradient vanishes below the floor.
fn sqrt_floored(g: &mut GraphBuilder, x: NodeId) -> NodeId {
    let clamped = g.clamp_min(x, LOSS_FLOOR);
    g.sqrt(clamped)
}

/// Squared difference of root losses, `(sqrt(l) - sqrt(l_aug))^2`, per pair.
/// Both operands must be nonnegative; evaluation fails otherwise.
pub fn reg_sq(
    g: &mut GraphBuilder,
    loss: NodeId,
    loss_aug: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let l = g.assert_non_negative(loss, "reg_sq");
    let la = g.assert_non_negative(loss_aug, "reg_sq");
    let s = sqrt_floored(g, l);
    let sa = sqrt_floored(g, la);
    let d = g.sub(s, sa)?;
    Ok(g.mul(d, d)?)
}

/// Absolute loss gap `|l - l_aug|` per pair; subgradient 0 at equality.
pub fn reg_l1(
    g: &mut GraphBuilder,
    loss: NodeId,
    loss_aug: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let l = g.assert_non_negative(loss, "reg_l1");
    let la = g.assert_non_negative(loss_aug, "reg_l1");
    let d = g.sub(l, la)?;
    Ok(g.abs(d))
}

/// Which divergence the output-distribution regularizer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputConsistency {
    Kl,
    L2,
}

/// Divergence between two output distributions `[n, k]`, per sample.
///
/// KL direction is `KL(q(z) || q(z_aug))` — original first — and gradients
/// flow through both branches. Probabilities are floored at [`PROB_FLOOR`]
/// inside the logs.
pub fn output_consistency(
    g: &mut GraphBuilder,
    kind: OutputConsistency,
    q: NodeId,
    q_aug: NodeId,
) -> Result<NodeId, ObjectiveError> {
    match kind {
        OutputConsistency::Kl => {
            let qf = g.clamp_min(q, PROB_FLOOR);
            let qaf = g.clamp_min(q_aug, PROB_FLOOR);
            let lq = g.log(qf);
            let lqa = g.log(qaf);
            let diff = g.sub(lq, lqa)?;
            let w = g.mul(qf, diff)?;
            Ok(g.row_sum(w)?)
        }
        OutputConsistency::L2 => {
            let d = g.sub(q, q_aug)?;
            let sq = g.mul(d, d)?;
            Ok(g.row_sum(sq)?)
        }
    }
}

// ---------------------------------------------------------------------------
// composite objectives
// ---------------------------------------------------------------------------

/// Branch nodes feeding a composite objective. `loss` / `loss_aug` hold
/// per-sample base losses `[n]`; the `q` pair holds output distributions
/// `[n, k]` and is only consulted by output-space regularizers.
#[derive(Debug, Clone, Copy)]
pub struct CompositeInputs {
    pub loss: NodeId,
    pub loss_aug: Option<NodeId>,
    pub q: Option<NodeId>,
    pub q_aug: Option<NodeId>,
}

/// Node handles of an assembled composite: the scalar objective, its data
/// term, the pre-lambda per-pair penalty mean (when a regularizer is
/// active), and for tilted losses the pooled per-sample loss vector the
/// aggregate was taken over.
#[derive(Debug, Clone, Copy)]
pub struct CompositeParts {
    pub objective: NodeId,
    pub data_term: NodeId,
    pub penalty_mean: Option<NodeId>,
    pub pooled_losses: Option<NodeId>,
}

/// Assembles the scalar training objective for one batch of paired samples:
///
/// * `erm`    — aggregate(loss)
/// * `da-erm` — 1/2 aggregate(loss) + 1/2 aggregate(loss_aug)
/// * `dair`   — da-erm + lambda * mean(penalty per pair)
///
/// `dair` with `lambda == 0` (or with the `none` regularizer) builds exactly
/// the `da-erm` graph, so the two evaluate bit-for-bit identically. A tilted
/// base loss aggregates the pooled original and augmented losses instead of
/// averaging the two branch aggregates.
pub fn composite_objective(
    g: &mut GraphBuilder,
    spec: &ObjectiveSpec,
    inputs: CompositeInputs,
) -> Result<NodeId, ObjectiveError> {
    Ok(composite_objective_parts(g, spec, inputs)?.objective)
}

/// [`composite_objective`] plus handles to the component nodes, so training
/// loops can report the data term and the raw penalty separately.
pub fn composite_objective_parts(
    g: &mut GraphBuilder,
    spec: &ObjectiveSpec,
    inputs: CompositeInputs,
) -> Result<CompositeParts, ObjectiveError> {
    spec.validate()?;
    if let Mode::Erm = spec.mode {
        let agg = aggregate(g, &spec.loss, inputs.loss)?;
        return Ok(CompositeParts {
            objective: agg,
            data_term: agg,
            penalty_mean: None,
            pooled_losses: None,
        });
    }
    let loss_aug = inputs.loss_aug.ok_or(ObjectiveError::MissingAugmentedBranch)?;

    let mut pooled_losses = None;
    let data_term = match spec.loss {
        LossKind::Tilted { t } => {
            let pooled = g.concat(inputs.loss, loss_aug)?;
            pooled_losses = Some(pooled);
            tilted_aggregate(g, pooled, t)?
        }
        _ => {
            let m = g.mean(inputs.loss);
            let ma = g.mean(loss_aug);
            let half = g.mul_scalar(m, 0.5);
            let half_aug = g.mul_scalar(ma, 0.5);
            g.add(half, half_aug)?
        }
    };

    let effective_dair = matches!(spec.mode, Mode::Dair)
        && spec.lambda > 0.0
        && spec.regularizer != RegularizerKind::None;
    if !effective_dair {
        return Ok(CompositeParts {
            objective: data_term,
            data_term,
            penalty_mean: None,
            pooled_losses,
        });
    }

    let per_pair = match spec.regularizer {
        RegularizerKind::Sq => reg_sq(g, inputs.loss, loss_aug)?,
        RegularizerKind::L1 => reg_l1(g, inputs.loss, loss_aug)?,
        RegularizerKind::KlOutput | RegularizerKind::L2Output => {
            let (q, qa) = match (inputs.q, inputs.q_aug) {
                (Some(q), Some(qa)) => (q, qa),
                _ => return Err(ObjectiveError::MissingDistribution),
            };
            let kind = if spec.regularizer == RegularizerKind::KlOutput {
                OutputConsistency::Kl
            } else {
                OutputConsistency::L2
            };
            output_consistency(g, kind, q, qa)?
        }
        RegularizerKind::None => unreachable!("filtered above"),
    };
    let penalty = g.mean(per_pair);
    let weighted = g.mul_scalar(penalty, spec.lambda);
    let objective = g.add(data_term, weighted)?;
    Ok(CompositeParts {
        objective,
        data_term,
        penalty_mean: Some(penalty),
        pooled_losses,
    })
}

// ---------------------------------------------------------------------------
// evaluation-time consistency metric
// ---------------------------------------------------------------------------

/// Consistency metric value; the conditioning set can be empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CmValue {
    Value(f64),
    /// No original sample was classified correctly, so the conditional is
    /// undefined. Propagated as missing, never as zero.
    NoSupport,
}

impl CmValue {
    pub fn as_option(self) -> Option<f64> {
        match self {
            CmValue::Value(v) => Some(v),
            CmValue::NoSupport => None,
        }
    }
}

/// Fraction of pairs with a correct augmented prediction among pairs whose
/// original prediction is correct.
pub fn consistency_metric(
    correct_original: &[bool],
    correct_augmented: &[bool],
) -> Result<CmValue, ObjectiveError> {
    if correct_original.len() != correct_augmented.len() {
        return Err(ObjectiveError::BitvectorLengthMismatch {
            original: correct_original.len(),
            augmented: correct_augmented.len(),
        });
    }
    let mut support = 0usize;
    let mut consistent = 0usize;
    for (&o, &a) in correct_original.iter().zip(correct_augmented) {
        if o {
            support += 1;
            if a {
                consistent += 1;
            }
        }
    }
    if support == 0 {
        Ok(CmValue::NoSupport)
    } else {
        Ok(CmValue::Value(consistent as f64 / support as f64))
    }
}

// ---------------------------------------------------------------------------
// loss-gap identity
// ---------------------------------------------------------------------------

/// Closed form of the gap `reg_l1 - reg_sq` for nonnegative losses:
/// `2 sqrt(min(l, l_aug)) |sqrt(l_aug) - sqrt(l)|`.
pub fn lemma1_gap(l: f64, l_aug: f64) -> Result<f64, ObjectiveError> {
    if l < 0.0 || l_aug < 0.0 {
        return Err(ObjectiveError::NegativeLoss {
            value: if l < 0.0 { l } else { l_aug },
        });
    }
    Ok(2.0 * l.min(l_aug).sqrt() * (l_aug.sqrt() - l.sqrt()).abs())
}
