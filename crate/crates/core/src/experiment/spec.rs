//! Text configuration for experiments and dataset generation.
//!
//! Both files are TOML. Every section is optional; omitted keys take the
//! paper preset, or the desk preset when one is requested. Unknown keys are
//! rejected with the offending key and line.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::csi::ChannelModelConfig;
use crate::dualnet::{FrameworkConfig, PhaseMethod, QuantizerKind};
use crate::error::{Error, Result};
use crate::nn::CoreKind;
use crate::training::TrainConfig;

/// Which preset fills keys the file leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

/// Where an experiment's samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// A `CSID` file; when absent the samples are generated from `[channel]`.
    pub path: Option<PathBuf>,
    pub n_samples: usize,
    pub n_train: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            n_samples: 5000,
            n_train: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Phase compression ratios of the loss comparison.
    pub cr_pha: Vec<f64>,
    pub methods: Vec<PhaseMethod>,
    pub cores: Vec<CoreKind>,
    pub quantizers: Vec<QuantizerKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cr_pha: vec![1.0 / 8.0, 1.0 / 16.0],
            methods: vec![
                PhaseMethod::Smdp,
                PhaseMethod::Mdpp,
                PhaseMethod::Naive,
                PhaseMethod::Mdpq,
            ],
            cores: vec![CoreKind::Dnn, CoreKind::Cnn, CoreKind::Ccnn],
            quantizers: vec![QuantizerKind::Ssq, QuantizerKind::Blq],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub channel: ChannelModelConfig,
    pub framework: FrameworkConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let (channel, framework, train) = match preset {
            Preset::Paper => (
                ChannelModelConfig::default(),
                FrameworkConfig::paper(),
                TrainConfig::paper(),
            ),
            Preset::Desk => (ChannelModelConfig::desk(), FrameworkConfig::desk(), TrainConfig::desk()),
        };
        Self {
            scenario: "default".into(),
            output_dir: None,
            data: DataConfig::default(),
            channel,
            framework,
            train,
            sweep: SweepConfig::default(),
        }
    }

    pub fn parse(text: &str, preset: Preset) -> Result<Self> {
        let spec: Self = parse_over(text, &Self::preset(preset))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, preset)
    }

    /// Sets the seed of model initialization and batch shuffling.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.framework.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.framework.validate()?;
        self.train.validate()?;
        if self.channel.n_b != self.framework.n_b {
            return Err(Error::invalid(format!(
                "channel n_b = {} but framework n_b = {}",
                self.channel.n_b, self.framework.n_b
            )));
        }
        if self.framework.q_t() > self.channel.n_f {
            return Err(Error::invalid(format!(
                "q_t = {} exceeds n_f = {}",
                self.framework.q_t(),
                self.channel.n_f
            )));
        }
        if self.data.path.is_none() && (self.data.n_train == 0 || self.data.n_train >= self.data.n_samples) {
            return Err(Error::invalid("data needs 0 < n_train < n_samples"));
        }
        let s = &self.sweep;
        if s.cr_pha.is_empty() || s.methods.is_empty() || s.cores.is_empty() || s.quantizers.is_empty() {
            return Err(Error::invalid("every sweep axis needs at least one entry"));
        }
        Ok(())
    }
}

/// Flat configuration of `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub n_samples: usize,
    pub n_train: usize,
    pub n_f: usize,
    pub n_b: usize,
    pub n_clusters: usize,
    pub ul_carrier_hz: f64,
    pub dl_carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub delay_spread_s: f64,
    pub seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl GenDataConfig {
    pub fn preset(preset: Preset) -> Self {
        let c = match preset {
            Preset::Paper => ChannelModelConfig::default(),
            Preset::Desk => ChannelModelConfig::desk(),
        };
        let data = DataConfig::default();
        Self {
            n_samples: data.n_samples,
            n_train: data.n_train,
            n_f: c.n_f,
            n_b: c.n_b,
            n_clusters: c.n_clusters,
            ul_carrier_hz: c.ul_carrier_hz,
            dl_carrier_hz: c.dl_carrier_hz,
            bandwidth_hz: c.bandwidth_hz,
            delay_spread_s: c.delay_spread_s,
            seed: c.rng_seed,
        }
    }

    pub fn parse(text: &str, preset: Preset) -> Result<Self> {
        let cfg: Self = parse_over(text, &Self::preset(preset))?;
        cfg.channel().validate()?;
        if cfg.n_train > cfg.n_samples {
            return Err(Error::invalid("n_train exceeds n_samples"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, preset)
    }

    pub fn channel(&self) -> ChannelModelConfig {
        ChannelModelConfig {
            n_f: self.n_f,
            n_b: self.n_b,
            n_clusters: self.n_clusters,
            ul_carrier_hz: self.ul_carrier_hz,
            dl_carrier_hz: self.dl_carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
            delay_spread_s: self.delay_spread_s,
            rng_seed: self.seed,
        }
    }
}

/// Deserializes `text` with `base` supplying every omitted key.
///
/// The text is first checked on its own so that errors carry the source
/// position; the merge with `base` then cannot fail on unknown keys.
fn parse_over<T: Serialize + DeserializeOwned>(text: &str, base: &T) -> Result<T> {
    let file: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    toml::from_str::<T>(text).map_err(|e| parse_error(text, &e))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::invalid(e.to_string()))?;
    merge(&mut merged, file);
    T::deserialize(toml::Value::Table(merged)).map_err(|e| parse_error(text, &e))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn parse_error(text: &str, err: &toml::de::Error) -> Error {
    let message = err.message().to_string();
    let backticked = message.split('`').nth(1).map(str::to_string);
    let (key, line) = match err.span() {
        Some(span) => {
            let start = span.start.min(text.len());
            let line_no = text[..start].matches('\n').count() + 1;
            let line_text = text.lines().nth(line_no - 1).unwrap_or("");
            let key = match line_text.split_once('=') {
                Some((k, _)) => k.trim().trim_matches('"').to_string(),
                None => line_text.trim().trim_matches(['[', ']']).to_string(),
            };
            (key, line_no)
        }
        None => (String::new(), 0),
    };
    let key = if key.is_empty() {
        backticked.unwrap_or_default()
    } else {
        key
    };
    Error::Parse { key, line, message }
}
