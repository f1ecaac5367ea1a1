use ndarray::Array2;
use num_complex::Complex64;

use super::budget::selected_count;
use crate::csi::AngleDelayCsi;
use crate::error::{Error, Result};

/// Slack allowed on cosine inputs before they are rejected.
const COSINE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMatrix(Array2<f64>);

impl MagnitudeMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("magnitudes must be finite and non-negative"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineMatrix(Array2<f64>);

impl CosineMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if !values.iter().all(|v| (-1.0..=1.0).contains(v)) {
            return Err(Error::invalid("cosine entries must lie in [-1, 1]"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Signs of the sine components plus the mask of entries actually fed back.
/// Entries outside the mask hold the default `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatrix {
    signs: Array2<i8>,
    transmitted: Array2<bool>,
}

impl SignMatrix {
    pub fn new(signs: Array2<i8>, transmitted: Array2<bool>) -> Result<Self> {
        if signs.dim() != transmitted.dim() {
            return Err(Error::invalid("sign and mask shapes differ"));
        }
        if !signs.iter().all(|s| *s == 1 || *s == -1) {
            return Err(Error::invalid("signs must be +1 or -1"));
        }
        if signs.iter().zip(transmitted.iter()).any(|(s, t)| !*t && *s != 1) {
            return Err(Error::invalid("untransmitted signs must be +1"));
        }
        Ok(Self { signs, transmitted })
    }

    /// All entries transmitted.
    pub fn full(signs: Array2<i8>) -> Result<Self> {
        let mask = Array2::from_elem(signs.dim(), true);
        Self::new(signs, mask)
    }

    pub fn signs(&self) -> &Array2<i8> {
        &self.signs
    }

    pub fn transmitted(&self) -> &Array2<bool> {
        &self.transmitted
    }

    pub fn dim(&self) -> (usize, usize) {
        self.signs.dim()
    }

    pub fn transmitted_count(&self) -> usize {
        self.transmitted.iter().filter(|t| **t).count()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.signs.mapv(f64::from)
    }
}

/// Splits each entry into magnitude, cosine of its phase, and the sign of the
/// sine. Zero entries map to cosine 1 and sign +1.
pub fn decompose(h: &AngleDelayCsi) -> (MagnitudeMatrix, CosineMatrix, SignMatrix) {
    let e = h.entries();
    let mag = e.mapv(|z| z.norm());
    let cos = e.mapv(|z| {
        let m = z.norm();
        if m > 0.0 {
            (z.re / m).clamp(-1.0, 1.0)
        } else {
            1.0
        }
    });
    let sign = e.mapv(|z| if z.im < 0.0 { -1i8 } else { 1 });
    (
        MagnitudeMatrix(mag),
        CosineMatrix(cos),
        SignMatrix::full(sign).expect("valid by construction"),
    )
}

/// Row-major indices sorted by descending magnitude; ties keep ascending
/// index order.
pub fn rank_order(magnitude: &MagnitudeMatrix) -> Vec<usize> {
    let flat: Vec<f64> = magnitude.0.iter().copied().collect();
    let mut idx: Vec<usize> = (0..flat.len()).collect();
    idx.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]));
    idx
}

fn check_ratio(r_s: f64) -> Result<()> {
    if !(r_s > 0.0 && r_s <= 1.0) {
        return Err(Error::invalid(format!("sign ratio must be in (0, 1], got {r_s}")));
    }
    Ok(())
}

/// Keeps the signs of the `ceil(r_s * len)` largest-magnitude entries and
/// resets the rest to `+1`.
pub fn select_signs(sign: &SignMatrix, magnitude: &MagnitudeMatrix, r_s: f64) -> Result<SignMatrix> {
    check_ratio(r_s)?;
    if sign.dim() != magnitude.dim() {
        return Err(Error::invalid("sign and magnitude shapes differ"));
    }
    let n = magnitude.0.len();
    let keep = selected_count(r_s, n);
    let cols = magnitude.0.ncols();
    let mut signs = Array2::from_elem(sign.dim(), 1i8);
    let mut mask = Array2::from_elem(sign.dim(), false);
    for &i in rank_order(magnitude).iter().take(keep) {
        let at = (i / cols, i % cols);
        signs[at] = sign.signs[at];
        mask[at] = true;
    }
    SignMatrix::new(signs, mask)
}

/// Sign bits of the `ceil(r_s * len)` entries ranked largest by `ranking`,
/// in rank order. A set bit means a negative sine.
pub fn sign_bits(sign: &SignMatrix, ranking: &MagnitudeMatrix, r_s: f64) -> Result<Vec<bool>> {
    check_ratio(r_s)?;
    if sign.dim() != ranking.dim() {
        return Err(Error::invalid("sign and magnitude shapes differ"));
    }
    let keep = selected_count(r_s, ranking.0.len());
    let flat: Vec<i8> = sign.signs.iter().copied().collect();
    Ok(rank_order(ranking)
        .into_iter()
        .take(keep)
        .map(|i| flat[i] < 0)
        .collect())
}

/// Receiver-side inverse of [`sign_bits`]: assigns the bits to the entries
/// ranked largest by `ranking`, which is the receiver's own magnitude
/// estimate (or the true magnitude in genie mode).
pub fn place_sign_bits(bits: &[bool], ranking: &MagnitudeMatrix) -> Result<SignMatrix> {
    let n = ranking.0.len();
    if bits.len() > n {
        return Err(Error::invalid(format!("{} sign bits for {n} entries", bits.len())));
    }
    let cols = ranking.0.ncols();
    let mut signs = Array2::from_elem(ranking.dim(), 1i8);
    let mut mask = Array2::from_elem(ranking.dim(), false);
    for (&i, &bit) in rank_order(ranking).iter().zip(bits) {
        let at = (i / cols, i % cols);
        signs[at] = if bit { -1 } else { 1 };
        mask[at] = true;
    }
    SignMatrix::new(signs, mask)
}

/// `magnitude * (cos + j * sign * sqrt(1 - cos^2))`.
pub fn recombine(
    magnitude: &MagnitudeMatrix,
    cosine: &Array2<f64>,
    sign: &SignMatrix,
    q_f: usize,
    q_l: usize,
) -> Result<AngleDelayCsi> {
    if magnitude.dim() != cosine.dim() || magnitude.dim() != sign.dim() {
        return Err(Error::invalid("recombine inputs have different shapes"));
    }
    if let Some(c) = cosine.iter().find(|c| !(c.abs() <= 1.0 + COSINE_SLACK)) {
        return Err(Error::invalid(format!("cosine {c} outside [-1, 1]")));
    }
    let mut out = Array2::zeros(magnitude.dim());
    ndarray::Zip::from(&mut out)
        .and(&magnitude.0)
        .and(cosine)
        .and(&sign.signs)
        .for_each(|o, &m, &c, &s| {
            let c = c.clamp(-1.0, 1.0);
            let sine = f64::from(s) * (1.0 - c * c).sqrt();
            *o = Complex64::new(m * c, m * sine);
        });
    AngleDelayCsi::new(out, q_f, q_l)
}
