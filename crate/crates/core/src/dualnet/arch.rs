//! Layer layout of every sub-network, derived from a [`FrameworkConfig`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FrameworkConfig, PhaseMethod};
use crate::error::Result;
use crate::nn::{Activation, CoreKind, ParameterStore, Stack};

const CORE_CHANNELS: [usize; 4] = [16, 8, 4, 1];
const COMBINER_CHANNELS: [usize; 4] = [16, 8, 4, 2];
pub(crate) const LEAKY: Activation = Activation::LeakyLinear(0.3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubNetwork {
    MagEncoder,
    MagDecoder,
    PhaseEncoder,
    PhaseDecoder,
    Combiner,
}

impl SubNetwork {
    pub const ALL: [SubNetwork; 5] = [
        SubNetwork::MagEncoder,
        SubNetwork::MagDecoder,
        SubNetwork::PhaseEncoder,
        SubNetwork::PhaseDecoder,
        SubNetwork::Combiner,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            SubNetwork::MagEncoder => "mag_enc",
            SubNetwork::MagDecoder => "mag_dec",
            SubNetwork::PhaseEncoder => "pha_enc",
            SubNetwork::PhaseDecoder => "pha_dec",
            SubNetwork::Combiner => "comb",
        }
    }

    pub fn is_magnitude(self) -> bool {
        matches!(self, SubNetwork::MagEncoder | SubNetwork::MagDecoder)
    }

    /// Sub-network owning a parameter name.
    pub fn of_param(name: &str) -> Option<SubNetwork> {
        let head = name.split('.').next()?;
        Self::ALL.into_iter().find(|s| s.prefix() == head)
    }
}

/// Fully connected layer `n_in -> n_out` stored as `{name}.weight`/`.bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
}

impl DenseSpec {
    fn new(name: &str, n_in: usize, n_out: usize) -> Self {
        Self {
            name: name.to_string(),
            n_in,
            n_out,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        store.insert_glorot(
            format!("{}.weight", self.name),
            vec![self.n_out, self.n_in],
            self.n_in,
            self.n_out,
            rng,
        )?;
        store.insert_zeros(format!("{}.bias", self.name), vec![self.n_out])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub q_t: usize,
    pub n_b: usize,
    pub mag_enc: Stack,
    pub mag_enc_fc: DenseSpec,
    pub mag_dec_fc: DenseSpec,
    pub mag_dec: Stack,
    pub pha_enc: Option<Stack>,
    pub pha_enc_fc: Option<DenseSpec>,
    pub pha_dec_fc: Option<DenseSpec>,
    pub pha_dec: Option<Stack>,
    pub comb: Stack,
}

impl Architecture {
    pub fn new(cfg: &FrameworkConfig) -> Result<Self> {
        cfg.validate()?;
        let (q_t, n_b, k) = (cfg.q_t(), cfg.n_b, cfg.kernel);
        let n = cfg.entries();
        let m_mag = cfg.mag_codeword_len();
        // The magnitude branch is shared by every phase variant and always
        // uses circular convolutions.
        let mag_enc = Stack::core("mag_enc.core", CoreKind::Ccnn, k, 1, &CORE_CHANNELS, &[LEAKY; 4])?;
        let mag_dec = Stack::core(
            "mag_dec.core",
            CoreKind::Ccnn,
            k,
            2,
            &CORE_CHANNELS,
            &[LEAKY, LEAKY, LEAKY, Activation::Abs],
        )?;
        let (pha_enc, pha_enc_fc, pha_dec_fc, pha_dec) = if cfg.phase_method.uses_phase_network() {
            let len = cfg.phase_codeword_len()?;
            let side = 1 + usize::from(cfg.sends_signs()) + usize::from(cfg.sends_signs() && cfg.mask_channel);
            let last = if cfg.phase_method == PhaseMethod::Smdp {
                Activation::Tanh
            } else {
                Activation::None
            };
            (
                Some(Stack::core(
                    "pha_enc.core",
                    cfg.core_kind,
                    k,
                    1,
                    &CORE_CHANNELS,
                    &[Activation::Tanh; 4],
                )?),
                Some(DenseSpec::new("pha_enc.fc", n, len)),
                Some(DenseSpec::new("pha_dec.fc", len, n)),
                Some(Stack::core(
                    "pha_dec.core",
                    cfg.core_kind,
                    k,
                    side,
                    &CORE_CHANNELS,
                    &[LEAKY, LEAKY, LEAKY, last],
                )?),
            )
        } else {
            (None, None, None, None)
        };
        let mut comb = Stack::core(
            "comb.core",
            cfg.core_kind,
            k,
            2,
            &COMBINER_CHANNELS,
            &[LEAKY, LEAKY, LEAKY, Activation::None],
        )?;
        if let Some(last) = comb.layers.last_mut() {
            last.zero_init = true;
        }
        Ok(Self {
            q_t,
            n_b,
            mag_enc,
            mag_enc_fc: DenseSpec::new("mag_enc.fc", n, m_mag),
            mag_dec_fc: DenseSpec::new("mag_dec.fc", m_mag, n),
            mag_dec,
            pha_enc,
            pha_enc_fc,
            pha_dec_fc,
            pha_dec,
            comb,
        })
    }

    /// Parameter count of one sub-network, computed from the layer specs.
    pub fn num_parameters(&self, sub: SubNetwork) -> usize {
        let (h, w) = (self.q_t, self.n_b);
        let stack = |s: &Option<Stack>| s.as_ref().map_or(0, |s| s.num_parameters(h, w));
        let dense = |d: &Option<DenseSpec>| d.as_ref().map_or(0, DenseSpec::num_parameters);
        match sub {
            SubNetwork::MagEncoder => self.mag_enc.num_parameters(h, w) + self.mag_enc_fc.num_parameters(),
            SubNetwork::MagDecoder => self.mag_dec.num_parameters(h, w) + self.mag_dec_fc.num_parameters(),
            SubNetwork::PhaseEncoder => stack(&self.pha_enc) + dense(&self.pha_enc_fc),
            SubNetwork::PhaseDecoder => stack(&self.pha_dec) + dense(&self.pha_dec_fc),
            SubNetwork::Combiner => self.comb.num_parameters(h, w),
        }
    }

    /// Phase encoder plus phase decoder.
    pub fn phase_branch_parameters(&self) -> usize {
        self.num_parameters(SubNetwork::PhaseEncoder) + self.num_parameters(SubNetwork::PhaseDecoder)
    }

    pub fn total_parameters(&self) -> usize {
        SubNetwork::ALL.iter().map(|s| self.num_parameters(*s)).sum()
    }

    /// Seeded initialization; each sub-network draws from its own stream so
    /// changing one sub-network leaves the others' weights unchanged.
    pub fn init(&self, seed: u64) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        let (h, w) = (self.q_t, self.n_b);
        for (i, sub) in SubNetwork::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            match sub {
                SubNetwork::MagEncoder => {
                    self.mag_enc.init(&mut store, h, w, &mut rng)?;
                    self.mag_enc_fc.init(&mut store, &mut rng)?;
                }
                SubNetwork::MagDecoder => {
                    self.mag_dec_fc.init(&mut store, &mut rng)?;
                    self.mag_dec.init(&mut store, h, w, &mut rng)?;
                }
                SubNetwork::PhaseEncoder => {
                    if let (Some(s), Some(d)) = (&self.pha_enc, &self.pha_enc_fc) {
                        s.init(&mut store, h, w, &mut rng)?;
                        d.init(&mut store, &mut rng)?;
                    }
                }
                SubNetwork::PhaseDecoder => {
                    if let (Some(s), Some(d)) = (&self.pha_dec, &self.pha_dec_fc) {
                        d.init(&mut store, &mut rng)?;
                        s.init(&mut store, h, w, &mut rng)?;
                    }
                }
                SubNetwork::Combiner => self.comb.init(&mut store, h, w, &mut rng)?,
            }
        }
        Ok(store)
    }
}
