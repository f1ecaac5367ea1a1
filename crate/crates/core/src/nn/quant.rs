//! Scalar quantizer kernels shared by the tape ops and payload packing.

use crate::error::{Error, Result};

/// `tanh` through a single `exp`; agrees with `f64::tanh` to a few ulp
/// and is markedly cheaper.
pub fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_ssq_params(bits: u32, alpha: f64) -> Result<()> {
    if !(1..=30).contains(&bits) {
        return Err(Error::invalid(format!("quantizer bits must be in 1..=30, got {bits}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("SSQ sharpness must be positive, got {alpha}")));
    }
    Ok(())
}

/// Soft staircase `(1/L) sum_i sigmoid(alpha (x - i/2^k))`, `L = 2^k - 1`,
/// returned with its derivative.
pub fn ssq_soft_with_slope(x: f64, bits: u32, alpha: f64) -> (f64, f64) {
    let levels = (1u64 << bits) - 1;
    let step = 1.0 / (1u64 << bits) as f64;
    let (mut v, mut d) = (0.0, 0.0);
    for i in 1..=levels {
        let s = sigmoid(alpha * (x - i as f64 * step));
        v += s;
        d += alpha * s * (1.0 - s);
    }
    let l = levels as f64;
    (v / l, d / l)
}

/// Batched form of [`ssq_soft_with_slope`]. With `e_i = exp(alpha i/2^k)`
/// tabulated, each sigmoid is `1 / (1 + exp(-alpha x) e_i)`, one `exp` per
/// input instead of one per level.
pub(crate) struct SsqKernel {
    bits: u32,
    alpha: f64,
    table: Option<Vec<f64>>,
}

impl SsqKernel {
    const MAX_TABLE: u64 = 1 << 12;

    pub(crate) fn new(bits: u32, alpha: f64) -> Self {
        let levels = (1u64 << bits) - 1;
        let table = (levels <= Self::MAX_TABLE && alpha <= 700.0).then(|| {
            let step = 1.0 / (1u64 << bits) as f64;
            (1..=levels).map(|i| (alpha * i as f64 * step).exp()).collect()
        });
        Self { bits, alpha, table }
    }

    pub(crate) fn eval(&self, x: f64) -> (f64, f64) {
        let Some(table) = &self.table else {
            return ssq_soft_with_slope(x, self.bits, self.alpha);
        };
        let a = (-self.alpha * x).exp();
        let (mut v, mut d) = (0.0, 0.0);
        for &e in table {
            let s = 1.0 / (1.0 + a * e);
            v += s;
            d += s * (1.0 - s);
        }
        let l = table.len() as f64;
        (v / l, self.alpha * d / l)
    }
}

pub fn ssq_soft(x: f64, bits: u32, alpha: f64) -> f64 {
    ssq_soft_with_slope(x, bits, alpha).0
}

/// Index of the nearest of the `2^k` levels `{0, 1/L, ..., 1}`.
pub fn level_index(x: f64, bits: u32) -> u32 {
    let l = ((1u64 << bits) - 1) as f64;
    (x.clamp(0.0, 1.0) * l).round() as u32
}

pub fn level_value(index: u32, bits: u32) -> f64 {
    index as f64 / ((1u64 << bits) - 1) as f64
}

/// Hard uniform quantizer onto `{0, 1/L, ..., 1}`.
pub fn ssq_hard(x: f64, bits: u32) -> f64 {
    level_value(level_index(x, bits), bits)
}

/// One-bit threshold; `0.5` maps to 1.
pub fn blq(x: f64) -> f64 {
    if x >= 0.5 {
        1.0
    } else {
        0.0
    }
}
