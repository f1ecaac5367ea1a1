//! Spatial-frequency ↔ angle-delay transforms.
//!
//! Conventions: the delay transform is an inverse DFT over the subcarrier
//! axis scaled by `1/n_f`; the angle transform is an unnormalized forward
//! DFT over the antenna axis. Without truncation the Frobenius norm scales by
//! exactly `sqrt(n_b / n_f)`.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Channel matrix indexed by (subcarrier, antenna).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFrequencyCsi {
    entries: Array2<Complex64>,
}

impl SpatialFrequencyCsi {
    pub fn new(entries: Array2<Complex64>) -> Result<Self> {
        let (n_f, n_b) = entries.dim();
        if n_f == 0 || n_b == 0 {
            return Err(Error::invalid(format!(
                "spatial-frequency CSI must be non-empty, got {n_f}x{n_b}"
            )));
        }
        if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::invalid("spatial-frequency CSI has non-finite entries"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<Complex64> {
        self.entries
    }

    pub fn n_f(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.entries.ncols()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Truncated angle-delay matrix: the first `q_f` delay rows followed by the
/// last `q_l` delay rows of the full transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDelayCsi {
    entries: Array2<Complex64>,
    q_f: usize,
    q_l: usize,
}

impl AngleDelayCsi {
    pub fn new(entries: Array2<Complex64>, q_f: usize, q_l: usize) -> Result<Self> {
        let (q_t, n_b) = entries.dim();
        if q_t != q_f + q_l {
            return Err(Error::invalid(format!(
                "angle-delay rows {q_t} != q_f + q_l = {}",
                q_f + q_l
            )));
        }
        if q_t == 0 || n_b == 0 {
            return Err(Error::invalid("angle-delay CSI must be non-empty"));
        }
        if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::invalid("angle-delay CSI has non-finite entries"));
        }
        Ok(Self { entries, q_f, q_l })
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn q_f(&self) -> usize {
        self.q_f
    }

    pub fn q_l(&self) -> usize {
        self.q_l
    }

    pub fn q_t(&self) -> usize {
        self.q_f + self.q_l
    }

    pub fn n_b(&self) -> usize {
        self.entries.ncols()
    }
}

fn fft_along(data: &mut Array2<Complex64>, axis: Axis, direction: FftDirection) {
    let len = data.len_of(axis);
    let fft = FftPlanner::new().plan_fft(len, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for mut lane in data.lanes_mut(axis) {
        buf.iter_mut().zip(lane.iter()).for_each(|(b, v)| *b = *v);
        fft.process(&mut buf);
        lane.iter_mut().zip(buf.iter()).for_each(|(v, b)| *v = *b);
    }
}

/// Transforms to the angle-delay domain and keeps the first `q_f` and last
/// `q_l` delay rows.
pub fn to_angle_delay(h_sf: &SpatialFrequencyCsi, q_f: usize, q_l: usize) -> Result<AngleDelayCsi> {
    let n_f = h_sf.n_f();
    if q_f + q_l > n_f {
        return Err(Error::invalid(format!("q_f + q_l = {} exceeds n_f = {n_f}", q_f + q_l)));
    }
    if q_f + q_l == 0 {
        return Err(Error::invalid("q_f + q_l must be at least 1"));
    }
    let mut full = h_sf.entries.clone();
    fft_along(&mut full, Axis(0), FftDirection::Inverse);
    let scale = 1.0 / n_f as f64;
    full.mapv_inplace(|z| z * scale);
    fft_along(&mut full, Axis(1), FftDirection::Forward);

    let n_b = h_sf.n_b();
    let mut out = Array2::zeros((q_f + q_l, n_b));
    for r in 0..q_f {
        out.row_mut(r).assign(&full.row(r));
    }
    for r in 0..q_l {
        out.row_mut(q_f + r).assign(&full.row(n_f - q_l + r));
    }
    AngleDelayCsi::new(out, q_f, q_l)
}

/// Zero-pads back to `n_f` delay rows and inverts both transforms.
pub fn from_angle_delay(h_ad: &AngleDelayCsi, n_f: usize) -> Result<SpatialFrequencyCsi> {
    let (q_f, q_l, n_b) = (h_ad.q_f, h_ad.q_l, h_ad.n_b());
    if q_f + q_l > n_f {
        return Err(Error::invalid(format!("q_t = {} exceeds n_f = {n_f}", q_f + q_l)));
    }
    let mut full = Array2::zeros((n_f, n_b));
    for r in 0..q_f {
        full.row_mut(r).assign(&h_ad.entries.row(r));
    }
    for r in 0..q_l {
        full.row_mut(n_f - q_l + r).assign(&h_ad.entries.row(q_f + r));
    }
    fft_along(&mut full, Axis(0), FftDirection::Forward);
    fft_along(&mut full, Axis(1), FftDirection::Inverse);
    let scale = 1.0 / n_b as f64;
    full.mapv_inplace(|z| z * scale);
    SpatialFrequencyCsi::new(full)
}
