//! Central finite-difference verification of reverse-mode gradients.

use super::params::ParameterStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(max |numeric|, max |analytic|, 1e-12)`.
    pub max_relative_error: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Relative infinity-norm discrepancy between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(1e-12, f64::max);
    diff / scale
}

fn scalar_output(tape: &Tape, y: Var) -> Result<f64> {
    tape.value(y).item()
}

/// Checks the gradient of a scalar function of one tensor input.
pub fn gradient_check<F>(f: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |values: Vec<f64>, grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let input = Tensor::new(x.shape().to_vec(), values)?.with_requires_grad(grad);
        let xv = tape.leaf(input)?;
        let y = f(&mut tape, xv)?;
        let out = scalar_output(&tape, y)?;
        if !grad {
            return Ok((out, None));
        }
        tape.backward(y)?;
        let g = tape.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);
        Ok((out, Some(g)))
    };
    let analytic = eval(x.values().to_vec(), true)?.1.unwrap_or_default();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.values().to_vec();
        let mut minus = plus.clone();
        plus[i] += eps;
        minus[i] -= eps;
        let (fp, _) = eval(plus, false)?;
        let (fm, _) = eval(minus, false)?;
        numeric.push((fp - fm) / (2.0 * eps));
    }
    let err = relative_error(&analytic, &numeric);
    Ok(GradCheckReport {
        max_relative_error: err,
        checked: numeric.len(),
        passed: err <= tol,
    })
}

/// Checks parameter gradients of a scalar function of a parameter store.
///
/// At most `per_param` coordinates of each tensor are probed, spread evenly.
pub fn gradient_check_params<F>(
    store: &ParameterStore,
    f: F,
    eps: f64,
    tol: f64,
    per_param: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var>,
{
    if per_param == 0 {
        return Err(Error::invalid("per_param must be positive"));
    }
    let mut tape = Tape::new();
    let y = f(&mut tape, store)?;
    tape.backward(y)?;
    let mut work = store.clone();
    work.zero_grads();
    work.accumulate_grads(&tape);

    let value_at = |s: &ParameterStore| -> Result<f64> {
        let mut t = Tape::new();
        let y = f(&mut t, s)?;
        scalar_output(&t, y)
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for name in &names {
        let len = store.require(name)?.len();
        let grad = work
            .require(name)?
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; len]);
        let stride = (len / per_param).max(1);
        for i in (0..len).step_by(stride).take(per_param) {
            let mut probe = store.clone();
            let base = probe.require(name)?.values()[i];
            probe.get_mut(name).expect("present").values_mut()[i] = base + eps;
            let fp = value_at(&probe)?;
            probe.get_mut(name).expect("present").values_mut()[i] = base - eps;
            let fm = value_at(&probe)?;
            analytic.push(grad[i]);
            numeric.push((fp - fm) / (2.0 * eps));
        }
    }
    let err = relative_error(&analytic, &numeric);
    Ok(GradCheckReport {
        max_relative_error: err,
        checked: numeric.len(),
        passed: err <= tol,
    })
}
