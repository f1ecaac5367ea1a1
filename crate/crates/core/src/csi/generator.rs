//! Synthetic clustered-multipath channel pairs.
//!
//! Each cluster contributes a single path with a delay drawn from an
//! exponential distribution (mean `delay_spread_s`), a uniform angle of
//! departure in `[-pi/2, pi/2)`, and a Rayleigh power weighted by an
//! exponential power-delay profile. Uplink and downlink share delays, angles
//! and gain magnitudes; each link draws its own path phases. The shared
//! geometry is what makes the uplink magnitude useful side information for
//! the downlink.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use super::transform::SpatialFrequencyCsi;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModelConfig {
    pub n_f: usize,
    pub n_b: usize,
    pub n_clusters: usize,
    pub ul_carrier_hz: f64,
    pub dl_carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub delay_spread_s: f64,
    pub rng_seed: u64,
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        Self {
            n_f: 256,
            n_b: 64,
            n_clusters: 13,
            ul_carrier_hz: 2.0e9,
            dl_carrier_hz: 2.1e9,
            bandwidth_hz: 20.0e6,
            delay_spread_s: 100.0e-9,
            rng_seed: 0,
        }
    }
}

impl ChannelModelConfig {
    /// Small preset used for desk-scale experiments.
    pub fn desk() -> Self {
        Self {
            n_f: 64,
            n_b: 32,
            delay_spread_s: 50.0e-9,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 || self.n_b == 0 {
            return Err(Error::invalid("n_f and n_b must be positive"));
        }
        if self.n_clusters == 0 {
            return Err(Error::invalid("n_clusters must be at least 1"));
        }
        let positive = [
            ("ul_carrier_hz", self.ul_carrier_hz),
            ("dl_carrier_hz", self.dl_carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("delay_spread_s", self.delay_spread_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_f as f64
    }

    /// Rng stream for sample `index`; samples can be drawn in any order.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index);
        rng
    }
}

/// Downlink and uplink realizations of the same propagation geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSamplePair {
    pub downlink: SpatialFrequencyCsi,
    pub uplink: SpatialFrequencyCsi,
}

impl CsiSamplePair {
    pub fn new(downlink: SpatialFrequencyCsi, uplink: SpatialFrequencyCsi) -> Result<Self> {
        if downlink.entries().dim() != uplink.entries().dim() {
            return Err(Error::invalid(format!(
                "downlink {:?} and uplink {:?} shapes differ",
                downlink.entries().dim(),
                uplink.entries().dim()
            )));
        }
        Ok(Self { downlink, uplink })
    }
}

struct Path {
    delay_s: f64,
    sin_angle: f64,
    gain: f64,
}

fn draw_paths<R: Rng + ?Sized>(cfg: &ChannelModelConfig, rng: &mut R) -> Vec<Path> {
    let delay = Exp::new(1.0 / cfg.delay_spread_s).expect("validated delay spread");
    let mut paths: Vec<Path> = (0..cfg.n_clusters)
        .map(|_| {
            let delay_s: f64 = delay.sample(rng);
            let angle = rng.gen_range(-PI / 2.0..PI / 2.0);
            let fading: f64 = Exp1.sample(rng);
            Path {
                delay_s,
                sin_angle: angle.sin(),
                gain: (-delay_s / cfg.delay_spread_s).exp() * fading,
            }
        })
        .collect();
    let total: f64 = paths.iter().map(|p| p.gain).sum();
    if total > 0.0 {
        for p in &mut paths {
            p.gain = (p.gain / total).sqrt();
        }
    }
    paths
}

fn synthesize(cfg: &ChannelModelConfig, paths: &[Path], phases: &[f64]) -> Array2<Complex64> {
    let df = cfg.subcarrier_spacing_hz();
    let mut h = Array2::zeros((cfg.n_f, cfg.n_b));
    for (p, &phase) in paths.iter().zip(phases) {
        let g = Complex64::from_polar(p.gain, phase);
        let steering: Vec<Complex64> = (0..cfg.n_b)
            .map(|b| Complex64::from_polar(1.0, -PI * b as f64 * p.sin_angle))
            .collect();
        for f in 0..cfg.n_f {
            let delay_term = g * Complex64::from_polar(1.0, -2.0 * PI * p.delay_s * f as f64 * df);
            for (b, s) in steering.iter().enumerate() {
                h[[f, b]] += delay_term * s;
            }
        }
    }
    h
}

/// Draws one downlink/uplink pair. Deterministic for a given rng state.
pub fn generate_channel_pair<R: Rng + ?Sized>(cfg: &ChannelModelConfig, rng: &mut R) -> Result<CsiSamplePair> {
    cfg.validate()?;
    loop {
        let paths = draw_paths(cfg, rng);
        let dl_phases: Vec<f64> = (0..paths.len()).map(|_| rng.gen_range(-PI..PI)).collect();
        let ul_phases: Vec<f64> = (0..paths.len()).map(|_| rng.gen_range(-PI..PI)).collect();
        let dl = SpatialFrequencyCsi::new(synthesize(cfg, &paths, &dl_phases))?;
        let ul = SpatialFrequencyCsi::new(synthesize(cfg, &paths, &ul_phases))?;
        // zero-norm draws are regenerated from the next rng output
        if dl.frobenius_sq() > 0.0 && ul.frobenius_sq() > 0.0 {
            return CsiSamplePair::new(dl, ul);
        }
    }
}

/// Pearson correlation between two equally shaped real matrices.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    cov / (va.sqrt() * vb.sqrt())
}
