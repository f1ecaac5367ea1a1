use super::transform::SpatialFrequencyCsi;
use crate::error::{Error, Result};

/// Reported value when the estimate is exact.
pub const DEFAULT_NMSE_FLOOR_DB: f64 = -120.0;

/// Mean per-sample normalized squared error, in dB:
/// `10 log10( (1/D) sum_d ||est_d - truth_d||^2 / ||truth_d||^2 )`.
///
/// The average over `D` makes values comparable across test-set sizes; the
/// un-averaged sum would be larger by `10 log10(D)`.
pub fn nmse_db(truth: &[SpatialFrequencyCsi], estimate: &[SpatialFrequencyCsi]) -> Result<f64> {
    nmse_db_with_floor(truth, estimate, DEFAULT_NMSE_FLOOR_DB)
}

pub fn nmse_db_with_floor(
    truth: &[SpatialFrequencyCsi],
    estimate: &[SpatialFrequencyCsi],
    floor_db: f64,
) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::invalid("nmse of an empty sample list"));
    }
    if truth.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "{} truth samples vs {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let mut total = 0.0;
    for (d, (t, e)) in truth.iter().zip(estimate).enumerate() {
        if t.entries().dim() != e.entries().dim() {
            return Err(Error::invalid(format!("sample {d}: shape mismatch")));
        }
        let norm = t.frobenius_sq();
        if norm == 0.0 {
            return Err(Error::invalid(format!("sample {d}: zero-norm truth")));
        }
        let err: f64 = t
            .entries()
            .iter()
            .zip(e.entries().iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        total += err / norm;
    }
    Ok(ratio_to_db(total / truth.len() as f64, floor_db))
}

pub(crate) fn ratio_to_db(ratio: f64, floor_db: f64) -> f64 {
    if ratio <= 0.0 {
        return floor_db;
    }
    (10.0 * ratio.log10()).max(floor_db)
}
