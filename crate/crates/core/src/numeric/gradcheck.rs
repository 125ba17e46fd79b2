//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over all checked coordinates of
    /// `|analytic - numeric| / max(1, |numeric|)`.
    pub max_rel_error: f64,
    /// Same quantity restricted to each parameter tensor.
    pub per_param: Vec<f64>,
    pub coordinates_checked: usize,
}

/// Differentiates `f` with the tape, then compares against central
/// differences. `f` records a scalar loss given leaf vars for `params`.
///
/// At most `max_coords` coordinates per tensor are perturbed, spread evenly
/// over the tensor; `None` checks every coordinate.
pub fn finite_diff_check<T, F>(
    f: F,
    params: &[Tensor<T>],
    eps: f64,
    max_coords: Option<usize>,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let value = |ps: &[Tensor<T>]| -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };
    compare_gradients(value, params, &analytic, eps, max_coords)
}

/// Compares externally supplied `analytic` gradients against central
/// differences of `value`.
pub fn compare_gradients<T, F>(
    mut value: F,
    params: &[Tensor<T>],
    analytic: &[Tensor<T>],
    eps: f64,
    max_coords: Option<usize>,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&[Tensor<T>]) -> Result<T>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Usage(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::dim("one analytic gradient per parameter required"));
    }
    let mut work: Vec<Tensor<T>> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    let mut checked = 0;
    let h = T::of(eps);

    for (pi, param) in params.iter().enumerate() {
        if analytic[pi].shape() != param.shape() {
            return Err(Error::dim(format!("gradient shape mismatch for parameter {pi}")));
        }
        let n = param.len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        for c in coords {
            let original = param.data()[c];
            work[pi].data_mut()[c] = original + h;
            let plus = value(&work)?;
            work[pi].data_mut()[c] = original - h;
            let minus = value(&work)?;
            work[pi].data_mut()[c] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("objective not finite near parameter {pi}[{c}]")));
            }
            let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * eps);
            let exact = analytic[pi].data()[c].as_f64();
            let err = (exact - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
            checked += 1;
        }
        per_param.push(worst);
    }

    Ok(GradCheckReport {
        max_rel_error: per_param.iter().copied().fold(0.0, f64::max),
        per_param,
        coordinates_checked: checked,
    })
}
