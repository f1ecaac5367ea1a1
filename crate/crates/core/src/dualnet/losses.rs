//! Training objectives. The tape versions take flattened batches and return
//! the batch-averaged loss; the matrix versions evaluate a single instance
//! through the same code.

use ndarray::Array2;

use crate::csi::AngleDelayCsi;
use crate::decomposition::SignMatrix;
use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Unary, Var};

/// Guard of `sqrt(max(1 - c^2, eps))`.
pub const SQRT_EPS: f64 = 1e-12;

fn constant(tape: &mut Tape, like: Var, values: &[f64]) -> Result<Var> {
    if values.len() != tape.values(like).len() {
        return Err(Error::invalid(format!(
            "target holds {} values, prediction {}",
            values.len(),
            tape.values(like).len()
        )));
    }
    tape.constant(Tensor::new(tape.shape(like).to_vec(), values.to_vec())?)
}

fn mean_sum_squares(tape: &mut Tape, d: Var, batch: usize) -> Result<Var> {
    let s = tape.sum_squares(d)?;
    tape.scale(s, 1.0 / batch.max(1) as f64)
}

/// `||m_hat - m||_F^2`.
pub fn magnitude_loss_t(tape: &mut Tape, mag_hat: Var, mag: &[f64], batch: usize) -> Result<Var> {
    let t = constant(tape, mag_hat, mag)?;
    let d = tape.sub(mag_hat, t)?;
    mean_sum_squares(tape, d, batch)
}

/// `||Re H - m_hat cos_hat||^2 + ||Im H - m_hat s sqrt(1 - cos_hat^2)||^2`.
pub fn smdp_loss_t(
    tape: &mut Tape,
    mag_hat: Var,
    cos_hat: Var,
    re: &[f64],
    im: &[f64],
    signs: &[f64],
    batch: usize,
) -> Result<Var> {
    let real = tape.mul(mag_hat, cos_hat)?;
    let tr = constant(tape, real, re)?;
    let dr = tape.sub(real, tr)?;
    let root = tape.unary(cos_hat, Unary::SqrtOneMinusSquare(SQRT_EPS))?;
    let sine = tape.mul_const(root, signs)?;
    let imag = tape.mul(mag_hat, sine)?;
    let ti = constant(tape, imag, im)?;
    let di = tape.sub(imag, ti)?;
    let a = tape.sum_squares(dr)?;
    let b = tape.sum_squares(di)?;
    let s = tape.add(a, b)?;
    tape.scale(s, 1.0 / batch.max(1) as f64)
}

/// Complex MSE of `m_hat e^{j phase_hat}` against `H`.
pub fn naive_loss_t(
    tape: &mut Tape,
    mag_hat: Var,
    phase_hat: Var,
    re: &[f64],
    im: &[f64],
    batch: usize,
) -> Result<Var> {
    let c = tape.unary(phase_hat, Unary::Cos)?;
    let s = tape.unary(phase_hat, Unary::Sin)?;
    let real = tape.mul(mag_hat, c)?;
    let imag = tape.mul(mag_hat, s)?;
    let tr = constant(tape, real, re)?;
    let ti = constant(tape, imag, im)?;
    let dr = tape.sub(real, tr)?;
    let di = tape.sub(imag, ti)?;
    let a = tape.sum_squares(dr)?;
    let b = tape.sum_squares(di)?;
    let sum = tape.add(a, b)?;
    tape.scale(sum, 1.0 / batch.max(1) as f64)
}

/// `|| (phase - phase_hat) * |H| ||_F^2` with the raw radian difference.
pub fn mdpp_loss_t(tape: &mut Tape, phase_hat: Var, phase: &[f64], mag: &[f64], batch: usize) -> Result<Var> {
    let t = constant(tape, phase_hat, phase)?;
    let d = tape.sub(t, phase_hat)?;
    if mag.len() != phase.len() {
        return Err(Error::invalid("magnitude and phase lengths differ"));
    }
    let w = tape.mul_const(d, mag)?;
    mean_sum_squares(tape, w, batch)
}

/// Squared error of a `[b, 2, q, n]` real/imaginary estimate against the
/// per-sample planes `re` and `im`.
pub fn complex_loss_t(tape: &mut Tape, out: Var, re: &[f64], im: &[f64], batch: usize) -> Result<Var> {
    let plane = re.len() / batch.max(1);
    if re.len() != im.len() || plane * batch != re.len() {
        return Err(Error::invalid("real and imaginary targets disagree with the batch"));
    }
    let mut target = Vec::with_capacity(2 * re.len());
    for b in 0..batch {
        target.extend_from_slice(&re[b * plane..(b + 1) * plane]);
        target.extend_from_slice(&im[b * plane..(b + 1) * plane]);
    }
    let t = constant(tape, out, &target)?;
    let d = tape.sub(out, t)?;
    mean_sum_squares(tape, d, batch)
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn leaf(tape: &mut Tape, a: &Array2<f64>) -> Result<Var> {
    tape.constant(Tensor::new(vec![a.len()], flat(a))?)
}

fn check_dims(dims: &[(usize, usize)]) -> Result<()> {
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::invalid(format!("matrix shapes differ: {dims:?}")));
    }
    Ok(())
}

fn parts(h: &AngleDelayCsi) -> (Vec<f64>, Vec<f64>) {
    h.entries().iter().map(|z| (z.re, z.im)).unzip()
}

pub fn loss_magnitude(mag_hat: &Array2<f64>, mag: &Array2<f64>) -> Result<f64> {
    check_dims(&[mag_hat.dim(), mag.dim()])?;
    let mut tape = Tape::new();
    let m = leaf(&mut tape, mag_hat)?;
    let l = magnitude_loss_t(&mut tape, m, &flat(mag), 1)?;
    tape.value(l).item()
}

pub fn loss_smdp(h: &AngleDelayCsi, mag_hat: &Array2<f64>, cos_hat: &Array2<f64>, signs: &SignMatrix) -> Result<f64> {
    check_dims(&[h.entries().dim(), mag_hat.dim(), cos_hat.dim(), signs.dim()])?;
    let (re, im) = parts(h);
    let mut tape = Tape::new();
    let m = leaf(&mut tape, mag_hat)?;
    let c = leaf(&mut tape, cos_hat)?;
    let l = smdp_loss_t(&mut tape, m, c, &re, &im, &flat(&signs.as_f64()), 1)?;
    tape.value(l).item()
}

pub fn loss_naive(h: &AngleDelayCsi, mag_hat: &Array2<f64>, phase_hat: &Array2<f64>) -> Result<f64> {
    check_dims(&[h.entries().dim(), mag_hat.dim(), phase_hat.dim()])?;
    let (re, im) = parts(h);
    let mut tape = Tape::new();
    let m = leaf(&mut tape, mag_hat)?;
    let p = leaf(&mut tape, phase_hat)?;
    let l = naive_loss_t(&mut tape, m, p, &re, &im, 1)?;
    tape.value(l).item()
}

pub fn loss_mdpp(phase_hat: &Array2<f64>, phase: &Array2<f64>, mag: &Array2<f64>) -> Result<f64> {
    check_dims(&[phase_hat.dim(), phase.dim(), mag.dim()])?;
    let mut tape = Tape::new();
    let p = leaf(&mut tape, phase_hat)?;
    let l = mdpp_loss_t(&mut tape, p, &flat(phase), &flat(mag), 1)?;
    tape.value(l).item()
}
