//! Magnitude-dependent phase quantization: entries are binned by the rank of
//! their magnitude within the matrix, and each bin quantizes its phases
//! uniformly with a fixed number of bits.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::signs::MagnitudeMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpqTable {
    cdf_thresholds: Vec<f64>,
    bits_per_bin: Vec<u32>,
}

impl MdpqTable {
    pub fn new(cdf_thresholds: Vec<f64>, bits_per_bin: Vec<u32>) -> Result<Self> {
        if cdf_thresholds.is_empty() || cdf_thresholds.len() != bits_per_bin.len() {
            return Err(Error::invalid(
                "thresholds and bit counts must be non-empty and equal length",
            ));
        }
        if cdf_thresholds[0] != 0.0 {
            return Err(Error::invalid("first CDF threshold must be 0"));
        }
        if cdf_thresholds.windows(2).any(|w| w[0] >= w[1]) || cdf_thresholds.iter().any(|t| *t > 1.0) {
            return Err(Error::invalid("CDF thresholds must ascend strictly within [0, 1]"));
        }
        if bits_per_bin.iter().any(|b| *b > 30) {
            return Err(Error::invalid("at most 30 bits per phase"));
        }
        Ok(Self {
            cdf_thresholds,
            bits_per_bin,
        })
    }

    /// Reference allocations at the two studied phase compression ratios:
    /// bins start at CDF 0, 0.5, 0.7, 0.8 and 0.9.
    pub fn reference(cr_pha: f64) -> Result<Self> {
        let thresholds = vec![0.0, 0.5, 0.7, 0.8, 0.9];
        if (cr_pha - 1.0 / 8.0).abs() < 1e-12 {
            Self::new(thresholds, vec![0, 0, 0, 3, 7])
        } else if (cr_pha - 1.0 / 16.0).abs() < 1e-12 {
            Self::new(thresholds, vec![0, 0, 0, 0, 5])
        } else {
            Err(Error::invalid(format!("no reference MDPQ table for cr_pha = {cr_pha}")))
        }
    }

    pub fn cdf_thresholds(&self) -> &[f64] {
        &self.cdf_thresholds
    }

    pub fn bits_per_bin(&self) -> &[u32] {
        &self.bits_per_bin
    }
}

/// Bits assigned to each entry. The entry at position `p` of the ascending
/// magnitude order (ties by row-major index) has CDF value `p / len` and
/// falls in the last bin whose threshold does not exceed it.
pub fn mdpq_bits_per_entry(magnitude: &MagnitudeMatrix, table: &MdpqTable) -> Array2<u32> {
    let flat: Vec<f64> = magnitude.values().iter().copied().collect();
    let n = flat.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut bits = vec![0u32; n];
    for (pos, &i) in order.iter().enumerate() {
        let cdf = pos as f64 / n as f64;
        let bin = table.cdf_thresholds.iter().rposition(|t| *t <= cdf).unwrap_or(0);
        bits[i] = table.bits_per_bin[bin];
    }
    Array2::from_shape_vec(magnitude.dim(), bits).expect("shape preserved")
}

fn quantize(phase: f64, bits: u32) -> u64 {
    let levels = 1u64 << bits;
    let wrapped = (phase + PI).rem_euclid(2.0 * PI);
    ((wrapped / (2.0 * PI) * levels as f64).floor() as u64).min(levels - 1)
}

fn dequantize(index: u64, bits: u32) -> f64 {
    let step = 2.0 * PI / (1u64 << bits) as f64;
    -PI + (index as f64 + 0.5) * step
}

/// Row-major bit stream; entries in 0-bit bins are skipped, each index is
/// written most-significant bit first.
pub fn mdpq_encode(phase: &Array2<f64>, magnitude: &MagnitudeMatrix, table: &MdpqTable) -> Result<Vec<bool>> {
    if phase.dim() != magnitude.dim() {
        return Err(Error::invalid("phase and magnitude shapes differ"));
    }
    let alloc = mdpq_bits_per_entry(magnitude, table);
    let mut out = Vec::new();
    for (&p, &b) in phase.iter().zip(alloc.iter()) {
        if b == 0 {
            continue;
        }
        if !p.is_finite() {
            return Err(Error::invalid("non-finite phase"));
        }
        let q = quantize(p, b);
        out.extend((0..b).rev().map(|k| (q >> k) & 1 == 1));
    }
    Ok(out)
}

/// Inverse of [`mdpq_encode`] given the same magnitude matrix. Entries in
/// 0-bit bins decode to phase 0.
pub fn mdpq_decode(bits: &[bool], magnitude: &MagnitudeMatrix, table: &MdpqTable) -> Result<Array2<f64>> {
    let alloc = mdpq_bits_per_entry(magnitude, table);
    let expected: u64 = alloc.iter().map(|b| u64::from(*b)).sum();
    if bits.len() as u64 != expected {
        return Err(Error::format(
            bits.len().min(expected as usize) as u64,
            format!("MDPQ stream has {} bits, allocation needs {expected}", bits.len()),
        ));
    }
    let mut cursor = bits.iter();
    Ok(alloc.mapv(|b| {
        if b == 0 {
            return 0.0;
        }
        let q = (0..b).fold(0u64, |acc, _| (acc << 1) | u64::from(*cursor.next().unwrap()));
        dequantize(q, b)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circular_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    }

    fn random_instance(seed: u64, n: usize) -> (Array2<f64>, MagnitudeMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = Array2::from_shape_fn((n, n), |_| rng.gen_range(-PI..PI));
        let mag = MagnitudeMatrix::new(Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..3.0))).unwrap();
        (phase, mag)
    }

    #[test]
    fn zero_table_gives_empty_stream() {
        let (phase, mag) = random_instance(1, 4);
        let table = MdpqTable::new(vec![0.0, 0.5], vec![0, 0]).unwrap();
        let bits = mdpq_encode(&phase, &mag, &table).unwrap();
        assert!(bits.is_empty());
        let back = mdpq_decode(&bits, &mag, &table).unwrap();
        assert!(back.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn top_decile_entry_gets_seven_bits() {
        // 20 entries, magnitudes 0..19: the entry with magnitude 19 sits at
        // CDF 0.95
        let mag = MagnitudeMatrix::new(Array2::from_shape_fn((4, 5), |(r, c)| (r * 5 + c) as f64)).unwrap();
        let table = MdpqTable::reference(1.0 / 8.0).unwrap();
        let alloc = mdpq_bits_per_entry(&mag, &table);
        assert_eq!(alloc[[3, 4]], 7);
        let phase = Array2::from_shape_fn((4, 5), |(r, c)| -3.0 + 0.29 * (r * 5 + c) as f64);
        let back = mdpq_decode(&mdpq_encode(&phase, &mag, &table).unwrap(), &mag, &table).unwrap();
        assert!(circular_distance(back[[3, 4]], phase[[3, 4]]) <= PI / 128.0);
    }

    #[test]
    fn stream_length_matches_brute_force_bin_count() {
        let (phase, mag) = random_instance(7, 8);
        let table = MdpqTable::reference(1.0 / 8.0).unwrap();
        // brute force: the k-th smallest magnitude has CDF k/64
        let mut sorted: Vec<f64> = mag.values().iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let expected: usize = sorted
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let cdf = k as f64 / 64.0;
                if cdf >= 0.9 {
                    7
                } else if cdf >= 0.8 {
                    3
                } else {
                    0
                }
            })
            .sum();
        // k = 52..=57 carry 3 bits, k = 58..=63 carry 7 bits
        assert_eq!(expected, 6 * 7 + 6 * 3);
        assert_eq!(mdpq_encode(&phase, &mag, &table).unwrap().len(), expected);
    }

    #[test]
    fn error_bounded_by_half_step() {
        for seed in 0..20 {
            let (phase, mag) = random_instance(seed, 6);
            let table = MdpqTable::new(vec![0.0, 0.3, 0.6], vec![1, 2, 5]).unwrap();
            let alloc = mdpq_bits_per_entry(&mag, &table);
            let back = mdpq_decode(&mdpq_encode(&phase, &mag, &table).unwrap(), &mag, &table).unwrap();
            for ((p, q), b) in phase.iter().zip(back.iter()).zip(alloc.iter()) {
                assert!(circular_distance(*p, *q) <= PI / (1u64 << b) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let (phase, mag) = random_instance(3, 4);
        let table = MdpqTable::reference(1.0 / 16.0).unwrap();
        let mut bits = mdpq_encode(&phase, &mag, &table).unwrap();
        bits.push(true);
        assert!(matches!(mdpq_decode(&bits, &mag, &table), Err(Error::Format { .. })));
    }

    #[test]
    fn table_validation() {
        assert!(MdpqTable::new(vec![0.1, 0.5], vec![1, 2]).is_err());
        assert!(MdpqTable::new(vec![0.0, 0.5, 0.5], vec![1, 2, 3]).is_err());
        assert!(MdpqTable::new(vec![0.0], vec![1, 2]).is_err());
        assert!(MdpqTable::reference(0.3).is_err());
    }
}
