//! Finite-difference gradient verification.

use crate::error::ExecError;
use crate::exec::{backward, forward};
use crate::graph::Graph;
use crate::param::ParamSet;
use crate::tensor::Tensor;

/// Compares an analytic gradient against central finite differences of a
/// scalar objective, coordinate by coordinate.
///
/// Returns the maximum over all parameters of
/// `|analytic - central| / (|central| + 1e-12)`. A set with no parameters
/// yields 0 (vacuous maximum). `step` must lie in `(0, 1e-3]`; a non-finite
/// objective at a perturbed point fails, identifying the parameter index.
pub fn grad_check_fn(
    mut objective: impl FnMut(&ParamSet) -> Result<f64, ExecError>,
    analytic: &ParamSet,
    params: &ParamSet,
    step: f64,
) -> Result<f64, ExecError> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(ExecError::BadStep(step));
    }
    let mut worst = 0.0f64;
    let mut side = |p: &mut ParamSet, name: &str, i: usize, v: f64| -> Result<f64, ExecError> {
        p.get_mut(name).unwrap().data_mut()[i] = v;
        let f = objective(p)?;
        if !f.is_finite() {
            return Err(ExecError::NonFiniteObjective {
                name: name.to_string(),
                index: i,
            });
        }
        Ok(f)
    };

    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut work = params.clone();
    for name in &names {
        let n = params.get(name).unwrap().numel();
        for i in 0..n {
            let center = params.get(name).unwrap().data()[i];
            let plus = side(&mut work, name, i, center + step)?;
            let minus = side(&mut work, name, i, center - step)?;
            work.get_mut(name).unwrap().data_mut()[i] = center;

            let central = (plus - minus) / (2.0 * step);
            let ad = analytic.get(name).unwrap().data()[i];
            let rel = (ad - central).abs() / (central.abs() + 1e-12);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

/// [`grad_check_fn`] specialized to a graph objective: the analytic gradient
/// comes from one reverse pass, the numeric one from re-running `forward` at
/// perturbed parameters.
pub fn grad_check_graph(
    graph: &Graph,
    inputs: &[(&str, &Tensor)],
    params: &ParamSet,
    step: f64,
) -> Result<f64, ExecError> {
    let (_, tape) = forward(graph, inputs, params)?;
    let analytic = backward(graph, &tape, params, 1.0)?;
    grad_check_fn(
        |p| Ok(forward(graph, inputs, p)?.0.item()),
        &analytic,
        params,
        step,
    )
}
