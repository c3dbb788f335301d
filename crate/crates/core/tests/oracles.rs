//! Closed-form oracle checks: frozen values, stationarity identities, and
//! cross-checks between independent algebraic routes.

use dair_core::oracle::{
    da_erm_weights, dair_limit_weights, multivariate_normal_equations, multivariate_solution,
    population_da_erm_gradient, population_da_erm_objective, population_weight_decay_gradient,
    prop32_bound, solve_with_partial_pivoting, test_loss, weight_decay_weights,
    MultivariateToyParams, ToyRegressionParams,
};

fn assert_close(a: f64, b: f64, tol: f64, ctx: &str) {
    assert!((a - b).abs() <= tol, "{ctx}: {a} vs {b} (tol {tol})");
}

#[test]
fn da_erm_reference_point() {
    let p = ToyRegressionParams::reference();
    let (w1, w2) = da_erm_weights(&p).unwrap();
    // exact rationals at this point: w1 = 0.5125 / 1.075, w2 = 0.75 / 1.075
    assert_close(w1, 0.5125 / 1.075, 1e-15, "w1 exact");
    assert_close(w2, 0.75 / 1.075, 1e-15, "w2 exact");
    assert_close(w1, 0.476744, 1e-6, "w1 literal");
    assert_close(w2, 0.697674, 1e-6, "w2 literal");

    // stationarity identity 2 w1 + (1 + a) w2 - 2 = 0
    let identity = 2.0 * w1 + (1.0 + p.a) * w2 - 2.0;
    assert!(identity.abs() <= 1e-12, "stationarity identity: {identity}");

    // and the population gradient vanishes there
    let (g1, g2) = population_da_erm_gradient((w1, w2), &p);
    assert!(g1.abs() <= 1e-12 && g2.abs() <= 1e-12, "gradient ({g1}, {g2})");
}

#[test]
fn da_erm_infinite_augmenter_noise_recovers_optimum() {
    let p = ToyRegressionParams {
        var_n: 1e12,
        ..ToyRegressionParams::reference()
    };
    let (w1, w2) = da_erm_weights(&p).unwrap();
    assert_close(w1, 1.0, 1e-6, "w1 at huge noise");
    assert_close(w2, 0.0, 1e-6, "w2 at huge noise");
}

#[test]
fn da_erm_a_minus_one_zeroes_w2() {
    let p = ToyRegressionParams {
        a: -1.0,
        ..ToyRegressionParams::reference()
    };
    let (_, w2) = da_erm_weights(&p).unwrap();
    assert_eq!(w2, 0.0, "numerator factor (a + 1) vanishes exactly");
}

#[test]
fn dair_limit_and_test_losses() {
    let p = ToyRegressionParams::reference();
    assert_eq!(dair_limit_weights(), (1.0, 0.0));
    assert_close(test_loss((1.0, 0.0), &p), p.var_eps, 1e-15, "optimal test loss");

    // DA-ERM test loss via two independent routes:
    // route A: plug the closed-form weights into (w1-1)^2 var_x + var_eps
    let w = da_erm_weights(&p).unwrap();
    let route_a = test_loss(w, &p);
    // route B: var_eps + (a+1)^4 var_eps^2 var_x / denom^2
    let denom = (1.0 - p.a).powi(2) * p.var_x
        + 2.0 * (1.0 + p.a * p.a) * p.var_eps
        + 2.0 * p.var_n;
    let route_b = p.var_eps
        + (p.a + 1.0).powi(4) * p.var_eps * p.var_eps * p.var_x / (denom * denom);
    assert_close(route_a, route_b, 1e-14, "two algebraic routes");
    // exact rational at this point: 1937 / 3698
    assert_close(route_a, 1937.0 / 3698.0, 1e-14, "frozen reference value");
    assert_close(route_a, 0.5238, 1e-4, "headline value");

    // pure spurious overfit (0, 1): var_x + var_eps
    assert_close(test_loss((0.0, 1.0), &p), 1.25, 1e-15, "overfit test loss");

    // DA-ERM never beats the limit solution
    assert!(route_a >= p.var_eps);
}

#[test]
fn weight_decay_reduces_and_shrinks() {
    let p0 = ToyRegressionParams::reference();
    let base = da_erm_weights(&p0).unwrap();
    let wd0 = weight_decay_weights(&p0).unwrap();
    assert_close(wd0.0, base.0, 1e-12, "gamma 0 reduces, w1");
    assert_close(wd0.1, base.1, 1e-12, "gamma 0 reduces, w2");

    let p_inf = ToyRegressionParams {
        gamma: 1e12,
        ..p0
    };
    let wd = weight_decay_weights(&p_inf).unwrap();
    assert!(wd.0.abs() < 1e-9 && wd.1.abs() < 1e-9, "infinite shrinkage");
}

#[test]
fn weight_decay_reference_gamma_one() {
    let p = ToyRegressionParams {
        gamma: 1.0,
        ..ToyRegressionParams::reference()
    };
    let w = weight_decay_weights(&p).unwrap();
    // exact rationals at this point
    assert_close(w.0, 67.0 / 153.0, 1e-14, "w1");
    assert_close(w.1, 70.0 / 153.0, 1e-14, "w2");
    // regularized stationarity holds to 1e-10
    let (g1, g2) = population_weight_decay_gradient(w, &p);
    assert!(g1.abs() <= 1e-10 && g2.abs() <= 1e-10, "({g1}, {g2})");
}

#[test]
fn weight_decay_stationarity_across_parameters() {
    // the closed form must satisfy the regularized stationarity condition
    // everywhere, not just at the reference point
    let grid = [
        (0.5, 1.0, 0.25, 0.1, 1.0),
        (-0.3, 2.0, 0.5, 0.0, 0.7),
        (1.7, 0.4, 1.3, 2.0, 3.0),
        (0.0, 1.0, 1.0, 1.0, 0.0),
    ];
    for (a, vx, ve, vn, g) in grid {
        let p = ToyRegressionParams {
            a,
            var_x: vx,
            var_eps: ve,
            var_n: vn,
            gamma: g,
        };
        let w = weight_decay_weights(&p).unwrap();
        let (g1, g2) = population_weight_decay_gradient(w, &p);
        assert!(
            g1.abs() <= 1e-10 && g2.abs() <= 1e-10,
            "stationarity at {p:?}: ({g1}, {g2})"
        );
    }
}

#[test]
fn weight_decay_never_reaches_the_limit_solution() {
    // for finite gamma, finite var_n, and (a+1) var_eps != 0 the ridge
    // solution stays away from (1, 0)
    for gamma in [0.0, 0.5, 2.0, 50.0] {
        let p = ToyRegressionParams {
            gamma,
            ..ToyRegressionParams::reference()
        };
        let (w1, w2) = weight_decay_weights(&p).unwrap();
        assert!(
            (w1 - 1.0).abs() > 1e-6 || w2.abs() > 1e-6,
            "gamma {gamma} closed the gap unexpectedly"
        );
    }
}

#[test]
fn multivariate_zero_directions_give_unit_solution() {
    let p = MultivariateToyParams {
        d: 3,
        v_train: vec![0.0, 0.0],
        u_aug: vec![0.0, 0.0],
        var_x: 1.0,
        var_eps: 0.25,
        var_n_train: 0.3,
        var_n_aug: 0.1,
    };
    let w = multivariate_solution(&p).unwrap();
    for i in 0..3 {
        assert_close(w[i], 1.0, 1e-12, "original coordinate");
    }
    for i in 3..5 {
        assert_close(w[i], 0.0, 1e-12, "spurious coordinate");
    }
}

#[test]
fn multivariate_reduces_to_scalar_oracle() {
    let scalar = ToyRegressionParams::reference();
    let p = MultivariateToyParams {
        d: 1,
        v_train: vec![1.0],
        u_aug: vec![scalar.a],
        var_x: scalar.var_x,
        var_eps: scalar.var_eps,
        var_n_train: 0.0,
        var_n_aug: scalar.var_n,
    };
    let w = multivariate_solution(&p).unwrap();
    let (w1, w2) = da_erm_weights(&scalar).unwrap();
    assert_close(w[0], w1, 1e-10, "w1 agreement");
    assert_close(w[1], w2, 1e-10, "w2 agreement");
}

#[test]
fn multivariate_infinite_train_noise_kills_spurious() {
    let p = MultivariateToyParams {
        d: 2,
        v_train: vec![0.8, -0.4],
        u_aug: vec![0.2, 0.3],
        var_x: 1.0,
        var_eps: 0.25,
        var_n_train: 1e12,
        var_n_aug: 0.0,
    };
    let w = multivariate_solution(&p).unwrap();
    assert!(w[2].abs() < 1e-6 && w[3].abs() < 1e-6, "{w:?}");
}

#[test]
fn multivariate_residual_is_tiny() {
    let p = MultivariateToyParams {
        d: 4,
        v_train: vec![0.7, -1.1, 0.3],
        u_aug: vec![0.2, 0.5, -0.6],
        var_x: 1.3,
        var_eps: 0.45,
        var_n_train: 0.05,
        var_n_aug: 0.15,
    };
    let w = multivariate_solution(&p).unwrap();
    let (q, b) = multivariate_normal_equations(&p);
    let n = w.len();
    let mut max_resid = 0.0f64;
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..n {
            acc += q[i][j] * w[j];
        }
        max_resid = max_resid.max(acc.abs());
    }
    assert!(max_resid <= 1e-10, "||Q w + b||_inf = {max_resid}");
}

#[test]
fn multivariate_matches_numeric_minimizer() {
    // gradient descent on the population objective written out directly
    let p = MultivariateToyParams {
        d: 2,
        v_train: vec![0.7],
        u_aug: vec![0.3],
        var_x: 1.0,
        var_eps: 0.25,
        var_n_train: 0.05,
        var_n_aug: 0.1,
    };
    let obj_grad = |w: &[f64]| {
        let (d, k) = (p.d, 1usize);
        let mut grad = vec![0.0; d + k];
        for (dirs, var_n) in [(&p.v_train, p.var_n_train), (&p.u_aug, p.var_n_aug)] {
            let c: f64 = dirs
                .iter()
                .zip(&w[d..])
                .map(|(v, wi)| v * wi)
                .sum::<f64>();
            // var_x * sum_i (w_i + c - 1)^2 + var_eps (c - 1)^2 + var_n ||w2||^2
            for i in 0..d {
                grad[i] += 2.0 * p.var_x * (w[i] + c - 1.0);
            }
            let mut dc = 0.0;
            for i in 0..d {
                dc += 2.0 * p.var_x * (w[i] + c - 1.0);
            }
            dc += 2.0 * p.var_eps * (c - 1.0);
            for j in 0..k {
                grad[d + j] += dc * dirs[j] + 2.0 * var_n * w[d + j];
            }
        }
        grad
    };
    let mut w = vec![0.0; 3];
    for _ in 0..200_000 {
        let g = obj_grad(&w);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= 0.05 * gi;
        }
    }
    let closed = multivariate_solution(&p).unwrap();
    for (a, b) in w.iter().zip(&closed) {
        assert_close(*a, *b, 1e-8, "numeric vs closed form");
    }
}

#[test]
fn singular_system_reports_condition() {
    let singular = vec![
        vec![1.0, 2.0],
        vec![2.0, 4.0],
    ];
    let err = solve_with_partial_pivoting(singular, vec![1.0, 2.0]).unwrap_err();
    assert!(err.to_string().contains("condition"), "{err}");
}

#[test]
fn prop32_examples() {
    assert_close(prop32_bound(10, 100.0).unwrap(), 0.023026, 1e-6, "ln10/100");
    assert_close(prop32_bound(2, 2.0f64.ln()).unwrap(), 1.0, 1e-12, "K=2, lambda=ln2");
    assert!(prop32_bound(10, 0.0).is_err());
    assert!(prop32_bound(1, 1.0).is_err());

    // monotone decreasing in lambda
    let mut last = f64::INFINITY;
    for lam in [0.5, 1.0, 5.0, 50.0, 500.0] {
        let b = prop32_bound(10, lam).unwrap();
        assert!(b < last, "bound must decrease");
        last = b;
    }
}

#[test]
fn population_gd_agrees_with_closed_form() {
    // small version of the oracle-vs-optimizer property; the acceptance
    // suite sweeps 20 random parameter settings
    let p = ToyRegressionParams::reference();
    let mut w = (0.0, 0.0);
    for _ in 0..100_000 {
        let g = population_da_erm_gradient(w, &p);
        w = (w.0 - 0.1 * g.0, w.1 - 0.1 * g.1);
    }
    let closed = da_erm_weights(&p).unwrap();
    assert_close(w.0, closed.0, 1e-8, "gd w1");
    assert_close(w.1, closed.1, 1e-8, "gd w2");
    assert!(
        population_da_erm_objective(closed, &p)
            <= population_da_erm_objective((0.5, 0.5), &p)
    );
}
