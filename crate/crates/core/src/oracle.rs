//! Exact analytic solutions for the linear-regression toy with a spurious
//! feature, used as ground truth for the numeric trainer and as a standalone
//! analysis tool.
//!
//! Setup: x ~ N(0, var_x), eps ~ N(0, var_eps), y = x + eps. The training
//! input is (x, s = y); the augmenter replaces the spurious channel by
//! s = a*y + n with n ~ N(0, var_n); at test time s = 0. All formulas below
//! are stationary points of the population (infinite-sample) objectives.
//!
//! Two display-level typos in the source derivation are corrected here: a
//! `var_x` that must read `var_x^2`-consistently throughout the rational
//! expressions, and a ones-vector factor in the multivariate normal matrix
//! that must count the d original coordinates rather than the k spurious
//! ones. Both corrections are pinned by stationarity tests against the
//! population objective.

use serde::{Deserialize, Serialize};

use crate::error::OracleError;

/// Parameters of the scalar toy regression: augmenter coefficient `a`,
/// variances of x / label noise / augmenter noise, and a weight-decay
/// strength `gamma` (0 disables it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRegressionParams {
    pub a: f64,
    pub var_x: f64,
    pub var_eps: f64,
    pub var_n: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ToyRegressionParams {
    /// The parameter point used throughout the scalar toy study:
    /// a = 0.5, var_x = 1, var_eps = 0.25, var_n = 0.1.
    pub fn reference() -> Self {
        Self {
            a: 0.5,
            var_x: 1.0,
            var_eps: 0.25,
            var_n: 0.1,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        for (name, v, strict) in [
            ("var_x", self.var_x, true),
            ("var_eps", self.var_eps, true),
            ("var_n", self.var_n, false),
            ("gamma", self.gamma, false),
        ] {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok || !v.is_finite() {
                return Err(OracleError::BadVariance {
                    name,
                    requirement: if strict { "strictly positive" } else { "nonnegative" },
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Population DA-ERM objective of the scalar toy (averaged over the two
/// branches), as a function of the regressor (w1, w2).
pub fn population_da_erm_objective(w: (f64, f64), p: &ToyRegressionParams) -> f64 {
    let (w1, w2) = w;
    let train = (w1 + w2 - 1.0).powi(2) * p.var_x + (w2 - 1.0).powi(2) * p.var_eps;
    let aug = (w1 + p.a * w2 - 1.0).powi(2) * p.var_x
        + (p.a * w2 - 1.0).powi(2) * p.var_eps
        + w2 * w2 * p.var_n;
    0.5 * (train + aug)
}

/// Gradient of [`population_da_erm_objective`].
pub fn population_da_erm_gradient(w: (f64, f64), p: &ToyRegressionParams) -> (f64, f64) {
    let (w1, w2) = w;
    let r_train = w1 + w2 - 1.0;
    let r_aug = w1 + p.a * w2 - 1.0;
    let g1 = p.var_x * (r_train + r_aug);
    let g2 = p.var_x * (r_train + p.a * r_aug)
        + p.var_eps * ((w2 - 1.0) + p.a * (p.a * w2 - 1.0))
        + p.var_n * w2;
    (g1, g2)
}

/// Population minimizer of DA-ERM for the scalar toy (`gamma` must be 0).
///
/// The returned pair satisfies the stationarity identity
/// `2 w1 + (1 + a) w2 - 2 = 0` to 1e-12 by construction.
pub fn da_erm_weights(p: &ToyRegressionParams) -> Result<(f64, f64), OracleError> {
    p.validate()?;
    let (a, sx, se, sn) = (p.a, p.var_x, p.var_eps, p.var_n);
    let denom = (1.0 - a).powi(2) * sx + 2.0 * (1.0 + a * a) * se + 2.0 * sn;
    if denom.abs() < 1e-300 {
        return Err(OracleError::DegenerateDenominator {
            regime: format!("a = {a}, var_x = {sx}, var_eps = {se}, var_n = {sn}"),
        });
    }
    let w1 = ((1.0 - a).powi(2) * (sx + se) + 2.0 * sn) / denom;
    let w2 = 2.0 * (1.0 + a) * se / denom;
    Ok((w1, w2))
}

/// The DAIR limit solution as lambda grows without bound: (1, 0).
pub fn dair_limit_weights() -> (f64, f64) {
    (1.0, 0.0)
}

/// Population test loss with the spurious coordinate zeroed:
/// `(w1 - 1)^2 var_x + var_eps`.
pub fn test_loss(w: (f64, f64), p: &ToyRegressionParams) -> f64 {
    (w.0 - 1.0).powi(2) * p.var_x + p.var_eps
}

/// Population minimizer of the averaged DA-ERM objective plus the ridge
/// penalty `gamma/2 (w1^2 + w2^2)`. Reduces to [`da_erm_weights`] at
/// `gamma = 0`.
pub fn weight_decay_weights(p: &ToyRegressionParams) -> Result<(f64, f64), OracleError> {
    p.validate()?;
    let (a, sx, se, sn, g) = (p.a, p.var_x, p.var_eps, p.var_n, p.gamma);
    let q11 = 2.0 * sx + g;
    let q12 = (1.0 + a) * sx;
    let q22 = (1.0 + a * a) * (sx + se) + sn + g;
    let det = q11 * q22 - q12 * q12;
    if det.abs() < 1e-300 {
        return Err(OracleError::DegenerateDenominator {
            regime: format!("a = {a}, var_x = {sx}, var_eps = {se}, var_n = {sn}, gamma = {g}"),
        });
    }
    let c1 = 2.0 * sx;
    let c2 = (1.0 + a) * (sx + se);
    let w1 = (c1 * q22 - q12 * c2) / det;
    let w2 = (q11 * c2 - q12 * c1) / det;
    Ok((w1, w2))
}

/// Gradient of the ridge-regularized averaged DA-ERM objective; zero at
/// [`weight_decay_weights`].
pub fn population_weight_decay_gradient(w: (f64, f64), p: &ToyRegressionParams) -> (f64, f64) {
    let (g1, g2) = population_da_erm_gradient(w, p);
    (g1 + p.gamma * w.0, g2 + p.gamma * w.1)
}

// ---------------------------------------------------------------------------
// multivariate extension
// ---------------------------------------------------------------------------

/// Multivariate toy: d original coordinates with y = 1'x + eps, k spurious
/// channels `s_train = y v_train + n_train` whose augmented twin uses
/// `u_aug` and `n_aug`. The test input zeroes every spurious channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateToyParams {
    pub d: usize,
    pub v_train: Vec<f64>,
    pub u_aug: Vec<f64>,
    pub var_x: f64,
    pub var_eps: f64,
    pub var_n_train: f64,
    pub var_n_aug: f64,
}

impl MultivariateToyParams {
    pub fn k(&self) -> usize {
        self.v_train.len()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.d < 1 {
            return Err(OracleError::BadDimension { value: self.d });
        }
        if self.v_train.is_empty() || self.v_train.len() != self.u_aug.len() {
            return Err(OracleError::BadDimension {
                value: self.v_train.len().min(self.u_aug.len()),
            });
        }
        for (name, v, strict) in [
            ("var_x", self.var_x, true),
            ("var_eps", self.var_eps, true),
            ("var_n_train", self.var_n_train, false),
            ("var_n_aug", self.var_n_aug, false),
        ] {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok || !v.is_finite() {
                return Err(OracleError::BadVariance {
                    name,
                    requirement: if strict { "strictly positive" } else { "nonnegative" },
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Normal equations `Q w = -b` of the population DA-ERM objective in the
/// multivariate toy, assembled explicitly.
pub fn multivariate_normal_equations(p: &MultivariateToyParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (d, k) = (p.d, p.k());
    let n = d + k;
    let mut q = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];

    // 2 var_x on the original-coordinate diagonal block, noise variances on
    // the spurious diagonal block.
    for i in 0..d {
        q[i][i] += 2.0 * p.var_x;
    }
    for j in 0..k {
        q[d + j][d + j] += p.var_n_train + p.var_n_aug;
    }
    // Cross terms between the ones vector on the original block and each
    // spurious direction, for both branches.
    for j in 0..k {
        let coeff = p.var_x * (p.v_train[j] + p.u_aug[j]);
        for i in 0..d {
            q[i][d + j] += coeff;
            q[d + j][i] += coeff;
        }
    }
    // Rank-one terms v v' and u u' scaled by (d var_x + var_eps); the factor
    // d counts the original coordinates contributing through y = 1'x + eps.
    let scale = p.var_x * d as f64 + p.var_eps;
    for j in 0..k {
        for l in 0..k {
            q[d + j][d + l] +=
                scale * (p.v_train[j] * p.v_train[l] + p.u_aug[j] * p.u_aug[l]);
        }
    }
    for i in 0..d {
        b[i] = -2.0 * p.var_x;
    }
    for j in 0..k {
        b[d + j] = -scale * (p.v_train[j] + p.u_aug[j]);
    }
    (q, b)
}

/// Solves the population DA-ERM normal equations for the multivariate toy.
/// The returned weights satisfy `||Q w + b||_inf <= 1e-10`.
pub fn multivariate_solution(p: &MultivariateToyParams) -> Result<Vec<f64>, OracleError> {
    p.validate()?;
    let (q, b) = multivariate_normal_equations(p);
    let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
    solve_with_partial_pivoting(q, rhs)
}

/// Dense LU solve with partial pivoting. Near-singular systems fail with a
/// cheap condition estimate (pivot magnitude ratio).
pub fn solve_with_partial_pivoting(
    mut a: Vec<Vec<f64>>,
    mut rhs: Vec<f64>,
) -> Result<Vec<f64>, OracleError> {
    let n = rhs.len();
    debug_assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        let pivot = a[pivot_row][col];
        if pivot.abs() < 1e-12 * scale {
            let cond = if min_pivot.is_finite() && pivot.abs() > 0.0 {
                max_pivot / pivot.abs()
            } else {
                f64::INFINITY
            };
            return Err(OracleError::SingularSystem {
                cond_estimate: cond,
            });
        }
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        max_pivot = max_pivot.max(pivot.abs());
        min_pivot = min_pivot.min(pivot.abs());

        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    // back substitution
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Upper bound on the mean regularizer value at a DAIR optimum for balanced
/// K-class classification with cross-entropy: `ln(K) / lambda`.
pub fn prop32_bound(k: usize, lambda: f64) -> Result<f64, OracleError> {
    if k < 2 {
        return Err(OracleError::BadClassCount { k });
    }
    if !(lambda > 0.0) {
        return Err(OracleError::UnboundedLambda { lambda });
    }
    Ok((k as f64).ln() / lambda)
}
