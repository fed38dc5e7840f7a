//! Finite-difference gradient verification.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor};

/// Compare the analytic gradient of a scalar-valued function against central
/// finite differences, coordinate by coordinate.
///
/// Returns `max_i |g_analytic_i - g_numeric_i| / max(1, |g_numeric_i|)`.
/// `f` is evaluated `2·dim + 1` times; `eps` must lie in `[1e-7, 1e-3]`,
/// the well-conditioned window for central differences at double precision.
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &Tensor) -> Result<Tensor>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }

    // Analytic gradient on a fresh recording graph.
    let probe = Tensor::param_from_vec(x.shape(), x.data().to_vec())?;
    let mut graph = Graph::new();
    let loss = f(&mut graph, &probe)?;
    let loss_value = loss.item()?;
    if !loss_value.is_finite() {
        return Err(Error::Numerical(
            "function is non-finite at the evaluation point".into(),
        ));
    }
    graph.backward(&loss)?;
    let analytic = probe.grad_or_zeros();

    let eval = |data: Vec<f64>| -> Result<f64> {
        let point = Tensor::from_vec(x.shape(), data)?;
        let mut graph = Graph::no_grad();
        let out = f(&mut graph, &point)?;
        let v = out.item()?;
        if !v.is_finite() {
            return Err(Error::Numerical(
                "function is non-finite near the evaluation point".into(),
            ));
        }
        Ok(v)
    };

    let mut max_rel = 0.0_f64;
    let base = x.data();
    for i in 0..base.len() {
        let mut plus = base.to_vec();
        plus[i] += eps;
        let mut minus = base.to_vec();
        minus[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
