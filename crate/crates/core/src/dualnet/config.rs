use serde::{Deserialize, Serialize};

use crate::decomposition::{codeword_len, phase_bit_budget, BitBudget, MdpqTable};
use crate::error::{Error, Result};
use crate::nn::CoreKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerKind {
    /// Sum-of-sigmoid staircase with `k` bits per codeword value.
    Ssq,
    /// One bit per codeword value; the phase codeword is `k` times longer.
    Blq,
}

/// How the downlink phase is fed back and learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMethod {
    /// Cosine codeword plus partial sine signs, trained on the sinusoidal
    /// magnitude-weighted loss.
    Smdp,
    /// Raw phase in, `cos`/`sin` out, trained on complex MSE.
    Naive,
    /// Raw phase in and out, trained on magnitude-weighted radian error.
    Mdpp,
    /// No phase network: phases quantized with magnitude-dependent bit
    /// allocation.
    Mdpq,
}

impl PhaseMethod {
    pub fn label(self) -> &'static str {
        match self {
            PhaseMethod::Smdp => "smdp",
            PhaseMethod::Naive => "naive",
            PhaseMethod::Mdpp => "mdpp",
            PhaseMethod::Mdpq => "mdpq",
        }
    }

    pub fn uses_phase_network(self) -> bool {
        self != PhaseMethod::Mdpq
    }

    /// Bits per phase codeword value in the matched-budget baselines.
    pub fn baseline_bits(self) -> u32 {
        match self {
            PhaseMethod::Mdpp => 10,
            _ => 8,
        }
    }
}

/// Which magnitude ranking the receiver uses to place partial sign bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignPlacement {
    /// The receiver's own magnitude estimate.
    Recovered,
    /// The true downlink magnitude (ablation only).
    Genie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameworkConfig {
    pub cr_mag: f64,
    pub k_mag: u32,
    pub cr_pha: f64,
    pub k_pha: u32,
    pub r_s: f64,
    /// Leading delay rows kept by the truncation.
    pub q_f: usize,
    /// Trailing delay rows kept by the truncation.
    pub q_l: usize,
    pub n_b: usize,
    pub core_kind: CoreKind,
    pub quantizer_kind: QuantizerKind,
    pub phase_method: PhaseMethod,
    pub sign_placement: SignPlacement,
    /// Feed the sign-transmission mask to the phase decoder as a third channel.
    pub mask_channel: bool,
    pub ssq_alpha: f64,
    pub kernel: usize,
    pub seed: u64,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl FrameworkConfig {
    /// `Q_t = 16`, `N_b = 64`, `CR_PHA = 1/8`.
    pub fn paper() -> Self {
        Self {
            cr_mag: 0.25,
            k_mag: 8,
            cr_pha: 1.0 / 8.0,
            k_pha: 8,
            r_s: 0.25,
            q_f: 12,
            q_l: 4,
            n_b: 64,
            core_kind: CoreKind::Ccnn,
            quantizer_kind: QuantizerKind::Ssq,
            phase_method: PhaseMethod::Smdp,
            sign_placement: SignPlacement::Recovered,
            mask_channel: false,
            ssq_alpha: 50.0,
            kernel: 7,
            seed: 0,
        }
    }

    /// `Q_t = 8`, `N_b = 32`.
    pub fn desk() -> Self {
        Self {
            q_f: 6,
            q_l: 2,
            n_b: 32,
            ..Self::paper()
        }
    }

    /// Settings paired with `cr_pha` in the loss comparison: `r_s = 0.25` at
    /// 1/8 and `0.125` at 1/16.
    pub fn with_phase_ratio(mut self, cr_pha: f64) -> Self {
        self.cr_pha = cr_pha;
        self.r_s = if cr_pha <= 1.0 / 16.0 + 1e-12 { 0.125 } else { 0.25 };
        self
    }

    pub fn q_t(&self) -> usize {
        self.q_f + self.q_l
    }

    pub fn entries(&self) -> usize {
        self.q_t() * self.n_b
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cr_mag", self.cr_mag), ("cr_pha", self.cr_pha), ("r_s", self.r_s)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.k_mag == 0 || self.k_pha == 0 || self.k_mag > 16 || self.k_pha > 16 {
            return Err(Error::invalid("quantizer bits must be in 1..=16"));
        }
        if self.q_t() == 0 || self.n_b == 0 {
            return Err(Error::invalid("q_t and n_b must be positive"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel must be odd, got {}", self.kernel)));
        }
        if !(self.ssq_alpha.is_finite() && self.ssq_alpha > 0.0) {
            return Err(Error::invalid("ssq_alpha must be positive"));
        }
        if self.mag_codeword_len() == 0 || (self.phase_method.uses_phase_network() && self.phase_codeword_len()? == 0) {
            return Err(Error::invalid("compression ratio leaves an empty codeword"));
        }
        Ok(())
    }

    pub fn mag_codeword_len(&self) -> usize {
        codeword_len(self.cr_mag, self.entries())
    }

    /// Cosine-branch budget at the configured `(cr_pha, k_pha, r_s)`.
    pub fn smdp_budget(&self) -> Result<BitBudget> {
        phase_bit_budget(self.cr_pha, self.k_pha, self.r_s, self.q_t(), self.n_b)
    }

    /// Bits carried by one phase codeword value.
    pub fn phase_value_bits(&self) -> u32 {
        match (self.phase_method, self.quantizer_kind) {
            (_, QuantizerKind::Blq) => 1,
            (PhaseMethod::Smdp, QuantizerKind::Ssq) => self.k_pha,
            (m, QuantizerKind::Ssq) => m.baseline_bits(),
        }
    }

    /// Number of phase codeword values. Baselines without sign feedback get
    /// `floor(B / k)` values, with `B` the SMDP budget, so every method
    /// spends at most the same bits.
    pub fn phase_codeword_len(&self) -> Result<usize> {
        let base = match self.phase_method {
            PhaseMethod::Smdp => codeword_len(self.cr_pha, self.entries()),
            PhaseMethod::Naive | PhaseMethod::Mdpp => {
                (self.smdp_budget()?.total_bits / u64::from(self.phase_method.baseline_bits())) as usize
            }
            PhaseMethod::Mdpq => 0,
        };
        Ok(match self.quantizer_kind {
            QuantizerKind::Blq => base * self.bits_per_blq_value() as usize,
            QuantizerKind::Ssq => base,
        })
    }

    fn bits_per_blq_value(&self) -> u32 {
        match self.phase_method {
            PhaseMethod::Smdp => self.k_pha,
            m => m.baseline_bits(),
        }
    }

    pub fn sends_signs(&self) -> bool {
        self.phase_method == PhaseMethod::Smdp
    }

    pub fn sign_bit_count(&self) -> usize {
        if self.sends_signs() {
            crate::decomposition::selected_count(self.r_s, self.entries())
        } else {
            0
        }
    }

    pub fn mdpq_table(&self) -> Result<MdpqTable> {
        MdpqTable::reference(self.cr_pha)
    }

    /// Exact phase feedback bits for this configuration. MDPQ spends a
    /// data-independent number of bits given its table.
    pub fn phase_bits(&self) -> Result<u64> {
        match self.phase_method {
            PhaseMethod::Mdpq => {
                let table = self.mdpq_table()?;
                let flat = ndarray::Array2::from_shape_fn((self.q_t(), self.n_b), |(r, c)| (r * self.n_b + c) as f64);
                let mag = crate::decomposition::MagnitudeMatrix::new(flat)?;
                Ok(crate::decomposition::mdpq_bits_per_entry(&mag, &table)
                    .iter()
                    .map(|b| u64::from(*b))
                    .sum())
            }
            _ => {
                Ok(self.phase_codeword_len()? as u64 * u64::from(self.phase_value_bits())
                    + self.sign_bit_count() as u64)
            }
        }
    }

    pub fn mag_bits(&self) -> u64 {
        self.mag_codeword_len() as u64 * u64::from(self.k_mag)
    }
}
