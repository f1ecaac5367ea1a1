//! Layer descriptions and the four-layer core stacks used by every
//! sub-network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tape::{Padding, Tape, Unary, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    CircularConv,
    LinearConv,
    Dense,
}

/// Which layer family fills the core stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreKind {
    /// Circular convolutions.
    Ccnn,
    /// Zero-padded convolutions.
    Cnn,
    /// Fully connected layers over the flattened image.
    Dnn,
}

impl CoreKind {
    pub fn layer_kind(self) -> LayerKind {
        match self {
            CoreKind::Ccnn => LayerKind::CircularConv,
            CoreKind::Cnn => LayerKind::LinearConv,
            CoreKind::Dnn => LayerKind::Dense,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CoreKind::Ccnn => "ccnn",
            CoreKind::Cnn => "cnn",
            CoreKind::Dnn => "dnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    LeakyLinear(f64),
    Abs,
    None,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Tanh => tape.unary(x, Unary::Tanh),
            Activation::Sigmoid => tape.unary(x, Unary::Sigmoid),
            Activation::LeakyLinear(a) => tape.unary(x, Unary::LeakyLinear(a)),
            Activation::Abs => tape.unary(x, Unary::Abs),
            Activation::None => Ok(x),
        }
    }
}

/// One layer acting on `[b, c_in, h, w]` images.
///
/// Dense layers flatten the image, map `c_in*h*w` inputs to `c_out*h*w`
/// outputs and restore the image shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub activation: Activation,
    /// Zero-initialize the weights instead of Glorot.
    pub zero_init: bool,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, kernel: usize, c_in: usize, c_out: usize, activation: Activation) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::invalid("layer channels must be positive"));
        }
        if kind != LayerKind::Dense && (kernel == 0 || kernel.is_multiple_of(2)) {
            return Err(Error::invalid(format!("kernel size must be odd, got {kernel}")));
        }
        Ok(Self {
            kind,
            kernel,
            c_in,
            c_out,
            activation,
            zero_init: false,
        })
    }

    fn weight_shape(&self, h: usize, w: usize) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense => vec![self.c_out * h * w, self.c_in * h * w],
            _ => vec![self.c_out, self.c_in, self.kernel, self.kernel],
        }
    }

    fn bias_len(&self, h: usize, w: usize) -> usize {
        match self.kind {
            LayerKind::Dense => self.c_out * h * w,
            _ => self.c_out,
        }
    }

    pub fn num_parameters(&self, h: usize, w: usize) -> usize {
        self.weight_shape(h, w).iter().product::<usize>() + self.bias_len(h, w)
    }

    pub fn init<R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore,
        prefix: &str,
        h: usize,
        w: usize,
        rng: &mut R,
    ) -> Result<()> {
        let shape = self.weight_shape(h, w);
        let (fan_in, fan_out) = match self.kind {
            LayerKind::Dense => (shape[1], shape[0]),
            _ => (
                self.c_in * self.kernel * self.kernel,
                self.c_out * self.kernel * self.kernel,
            ),
        };
        let wname = format!("{prefix}.weight");
        if self.zero_init {
            store.insert_zeros(wname, shape)?;
        } else {
            store.insert_glorot(wname, shape, fan_in, fan_out, rng)?;
        }
        store.insert_zeros(format!("{prefix}.bias"), vec![self.bias_len(h, w)])
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParameterStore, prefix: &str, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let [b, c, h, w] = shape[..] else {
            return Err(Error::invalid(format!(
                "layer input must be [b, c, h, w], got {shape:?}"
            )));
        };
        if c != self.c_in {
            return Err(Error::invalid(format!("layer expects {} channels, got {c}", self.c_in)));
        }
        let weight = tape.param(store, &format!("{prefix}.weight"))?;
        let bias = tape.param(store, &format!("{prefix}.bias"))?;
        let y = match self.kind {
            LayerKind::CircularConv | LayerKind::LinearConv => {
                let padding = if self.kind == LayerKind::CircularConv {
                    Padding::Circular
                } else {
                    Padding::Zero
                };
                let y = tape.conv2d(x, weight, padding)?;
                tape.channel_bias(y, bias)?
            }
            LayerKind::Dense => {
                let flat = tape.reshape(x, vec![b, c * h * w])?;
                let y = tape.dense(flat, weight, bias)?;
                tape.reshape(y, vec![b, self.c_out, h, w])?
            }
        };
        self.activation.apply(tape, y)
    }
}

/// A sequence of layers whose parameters live under `prefix.{index}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub prefix: String,
    pub layers: Vec<LayerSpec>,
}

impl Stack {
    /// `channels.len()` layers of the given kind; `activations[i]` follows
    /// layer `i`.
    pub fn core(
        prefix: impl Into<String>,
        kind: CoreKind,
        kernel: usize,
        c_in: usize,
        channels: &[usize],
        activations: &[Activation],
    ) -> Result<Self> {
        if channels.len() != activations.len() || channels.is_empty() {
            return Err(Error::invalid("core stack needs one activation per layer"));
        }
        let mut layers = Vec::with_capacity(channels.len());
        let mut c = c_in;
        let last = channels.len() - 1;
        for (i, (&out, &act)) in channels.iter().zip(activations).enumerate() {
            // Dense cores keep one plane per hidden layer.
            let width = if kind == CoreKind::Dnn && i < last { 1 } else { out };
            layers.push(LayerSpec::new(kind.layer_kind(), kernel, c, width, act)?);
            c = width;
        }
        Ok(Self {
            prefix: prefix.into(),
            layers,
        })
    }

    pub fn c_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.c_out)
    }

    pub fn num_parameters(&self, h: usize, w: usize) -> usize {
        self.layers.iter().map(|l| l.num_parameters(h, w)).sum()
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParameterStore, h: usize, w: usize, rng: &mut R) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            l.init(store, &format!("{}.{i}", self.prefix), h, w, rng)?;
        }
        Ok(())
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let mut y = x;
        for (i, l) in self.layers.iter().enumerate() {
            y = l.apply(tape, store, &format!("{}.{i}", self.prefix), y)?;
        }
        Ok(y)
    }
}
