use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `round(cr * entries)`: codeword length of a branch.
pub fn codeword_len(cr: f64, entries: usize) -> usize {
    (cr * entries as f64).round() as usize
}

/// `ceil(r_s * entries)`, insensitive to floating-point noise in the product.
pub fn selected_count(r_s: f64, entries: usize) -> usize {
    let exact = r_s * entries as f64;
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.ceil()
    };
    (count as usize).min(entries)
}

/// Phase feedback overhead: cosine codeword bits plus partial sign bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitBudget {
    pub cr_pha: f64,
    pub k_pha: u32,
    pub r_s: f64,
    pub q_t: usize,
    pub n_b: usize,
    pub codeword_bits: u64,
    pub sign_bits: u64,
    pub total_bits: u64,
}

impl BitBudget {
    pub fn bits_per_entry(&self) -> f64 {
        self.total_bits as f64 / (self.q_t * self.n_b) as f64
    }
}

/// `round(cr_pha * q_t * n_b) * k_pha + ceil(r_s * q_t * n_b)`.
pub fn phase_bit_budget(cr_pha: f64, k_pha: u32, r_s: f64, q_t: usize, n_b: usize) -> Result<BitBudget> {
    if !(cr_pha > 0.0 && cr_pha <= 1.0) {
        return Err(Error::invalid(format!("cr_pha must be in (0, 1], got {cr_pha}")));
    }
    if !(r_s > 0.0 && r_s <= 1.0) {
        return Err(Error::invalid(format!("r_s must be in (0, 1], got {r_s}")));
    }
    if k_pha == 0 || q_t == 0 || n_b == 0 {
        return Err(Error::invalid("k_pha, q_t and n_b must be positive"));
    }
    let entries = q_t * n_b;
    let codeword_bits = codeword_len(cr_pha, entries) as u64 * u64::from(k_pha);
    let sign_bits = selected_count(r_s, entries) as u64;
    Ok(BitBudget {
        cr_pha,
        k_pha,
        r_s,
        q_t,
        n_b,
        codeword_bits,
        sign_bits,
        total_bits: codeword_bits + sign_bits,
    })
}
