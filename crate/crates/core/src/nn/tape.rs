//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! Every op appends a node holding its output; `backward` walks the tape in
//! reverse and accumulates gradients into leaf nodes that require them.
//! Outputs are checked for NaN/Inf as they are produced.

use super::fft::{mac, mac_conj, Fft2, Spectra};
use super::quant;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Boundary handling of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Wrap-around: the input is treated as a torus.
    Circular,
    /// Zero padding of `(k - 1) / 2` on every side.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    /// Identity for non-negative inputs, slope `alpha` below zero.
    LeakyLinear(f64),
    Abs,
    Cos,
    Sin,
    /// `sqrt(max(1 - x^2, 0))`; the derivative is zeroed where
    /// `1 - x^2 <= eps`.
    SqrtOneMinusSquare(f64),
}

struct ConvCache {
    x: Var,
    k: Var,
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    ks: usize,
    th: usize,
    tw: usize,
    x_spec: Spectra,
    k_spec: Spectra,
}

enum Op {
    Leaf,
    Conv(Box<ConvCache>),
    ChannelBias { x: Var, bias: Var, channels: usize },
    Dense { x: Var, w: Var, b: Var },
    Reshape(Var),
    Concat { a: Var, b: Var, batch: usize },
    SliceChannels { x: Var, start: usize, batch: usize },
    Unary { x: Var, f: Unary },
    Ssq { x: Var, slope: Vec<f64> },
    StraightThrough(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    SumSquares(Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{name} produced non-finite value {} at index {i}",
            values[i]
        )));
    }
    Ok(())
}

fn add_into(adj: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut adj[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Batch, channel and spatial sizes of a 3-D `[c, h, w]` or 4-D
/// `[b, c, h, w]` shape.
fn image_dims(shape: &[usize]) -> Option<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Some((1, c, h, w)),
        [b, c, h, w] => Some((b, c, h, w)),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        check_finite(name, value.values())?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn values(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.values()
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Leaf whose gradient is tracked according to `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Result<Var> {
        let rg = tensor.requires_grad();
        self.push("leaf", tensor, Op::Leaf, rg)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Result<Var> {
        self.push("constant", tensor.with_requires_grad(false), Op::Leaf, false)
    }

    /// Copies a named parameter onto the tape as a differentiable leaf.
    pub fn param(&mut self, store: &super::ParameterStore, name: &str) -> Result<Var> {
        let t = store.require(name)?;
        let mut value = Tensor::new(t.shape().to_vec(), t.values().to_vec())?;
        value = value.with_requires_grad(true);
        let v = self.push(name, value, Op::Leaf, true)?;
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    /// `(name, gradient)` for every parameter leaf that received a gradient.
    pub fn param_grads(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.nodes.iter().filter_map(|n| match (&n.param, n.value.grad()) {
            (Some(name), Some(g)) => Some((name.as_str(), g)),
            _ => None,
        })
    }

    /// 2-D cross-correlation of `[b, c_in, h, w]` (or `[c_in, h, w]`) with
    /// `[c_out, c_in, k, k]` kernels; output spatial size equals the input's.
    pub fn conv2d(&mut self, x: Var, k: Var, padding: Padding) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ksh = self.shape(k).to_vec();
        let (batch, c_in, h, w) =
            image_dims(&xs).ok_or_else(|| Error::invalid(format!("conv input must be 3-D or 4-D, got {xs:?}")))?;
        let [c_out, kc, ks, ks2] = ksh[..] else {
            return Err(Error::invalid(format!("conv kernel must be 4-D, got {ksh:?}")));
        };
        if kc != c_in || ks != ks2 || ks % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel {ksh:?} incompatible with input {xs:?} (square odd kernel required)"
            )));
        }
        let (th, tw) = match padding {
            Padding::Circular => (h, w),
            Padding::Zero => (h + ks - 1, w + ks - 1),
        };
        let fft = Fft2::plan(th, tw);
        let s = fft.bins();
        let center = (ks / 2) as isize;
        let kv = self.values(k);
        let mut k_spec = Spectra::zeros(c_out * c_in, s);
        let mut torus = vec![0.0; th * tw];
        for pair in 0..c_out * c_in {
            torus.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..ks {
                let r = (a as isize - center).rem_euclid(th as isize) as usize;
                for b in 0..ks {
                    let c = (b as isize - center).rem_euclid(tw as isize) as usize;
                    torus[r * tw + c] += kv[(pair * ks + a) * ks + b];
                }
            }
            fft.forward_into(&torus, &mut k_spec, pair);
        }
        let xv = self.values(x);
        let mut x_spec = Spectra::zeros(batch * c_in, s);
        for plane in 0..batch * c_in {
            embed(&xv[plane * h * w..(plane + 1) * h * w], h, w, tw, &mut torus);
            fft.forward_into(&torus, &mut x_spec, plane);
        }
        let mut out = vec![0.0; batch * c_out * h * w];
        let (mut acc_re, mut acc_im) = (vec![0.0; s], vec![0.0; s]);
        for b in 0..batch {
            for o in 0..c_out {
                acc_re.fill(0.0);
                acc_im.fill(0.0);
                for i in 0..c_in {
                    mac_conj(
                        (&mut acc_re, &mut acc_im),
                        x_spec.plane(b * c_in + i),
                        k_spec.plane(o * c_in + i),
                    );
                }
                fft.inverse_from(&acc_re, &acc_im, &mut torus);
                crop(&torus, h, w, tw, &mut out[(b * c_out + o) * h * w..][..h * w]);
            }
        }
        let mut shape = xs.clone();
        shape[xs.len() - 3] = c_out;
        let rg = self.rg(x) || self.rg(k);
        let cache = ConvCache {
            x,
            k,
            batch,
            c_in,
            c_out,
            h,
            w,
            ks,
            th,
            tw,
            x_spec,
            k_spec,
        };
        self.push("conv2d", Tensor::new(shape, out)?, Op::Conv(Box::new(cache)), rg)
    }

    /// Adds a per-channel bias to a 3-D or 4-D image tensor.
    pub fn channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, c, h, w) =
            image_dims(&xs).ok_or_else(|| Error::invalid(format!("bias input must be an image, got {xs:?}")))?;
        if self.shape(bias) != [c] {
            return Err(Error::invalid(format!(
                "bias shape {:?} does not match {c} channels",
                self.shape(bias)
            )));
        }
        let bv = self.values(bias);
        let mut out = self.values(x).to_vec();
        for b in 0..batch {
            for ch in 0..c {
                for v in &mut out[(b * c + ch) * h * w..][..h * w] {
                    *v += bv[ch];
                }
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        self.push(
            "channel_bias",
            Tensor::new(xs, out)?,
            Op::ChannelBias { x, bias, channels: c },
            rg,
        )
    }

    /// Affine map of `[n]` or `[b, n]` inputs by `[m, n]` weights and `[m]`
    /// bias.
    pub fn dense(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, n) = match xs[..] {
            [n] => (1, n),
            [b, n] => (b, n),
            _ => return Err(Error::invalid(format!("dense input must be 1-D or 2-D, got {xs:?}"))),
        };
        let [m, wn] = ws[..] else {
            return Err(Error::invalid(format!("dense weights must be 2-D, got {ws:?}")));
        };
        if wn != n || self.shape(bias) != [m] {
            return Err(Error::invalid(format!(
                "dense weights {ws:?} / bias {:?} incompatible with input {xs:?}",
                self.shape(bias)
            )));
        }
        let (xv, wv, bv) = (self.values(x), self.values(w), self.values(bias));
        let mut out = vec![0.0; batch * m];
        for b in 0..batch {
            let xr = &xv[b * n..(b + 1) * n];
            for (j, o) in out[b * m..(b + 1) * m].iter_mut().enumerate() {
                let wr = &wv[j * n..(j + 1) * n];
                *o = bv[j] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let shape = if xs.len() == 1 { vec![m] } else { vec![batch, m] };
        let rg = self.rg(x) || self.rg(w) || self.rg(bias);
        self.push("dense", Tensor::new(shape, out)?, Op::Dense { x, w, b: bias }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = Tensor::new(self.shape(x).to_vec(), self.values(x).to_vec())?.reshaped(shape)?;
        let rg = self.rg(x);
        self.push("reshape", t, Op::Reshape(x), rg)
    }

    /// Concatenates two `[b, c, h, w]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (da, db) = (image_dims(&sa), image_dims(&sb));
        let (Some((ba, ca, h, w)), Some((bb, cb, hb, wb))) = (da, db) else {
            return Err(Error::invalid("concat needs image tensors"));
        };
        if sa.len() != sb.len() || ba != bb || h != hb || w != wb {
            return Err(Error::invalid(format!("cannot concat {sa:?} with {sb:?}")));
        }
        let p = h * w;
        let (av, bv) = (self.values(a), self.values(b));
        let mut out = Vec::with_capacity(ba * (ca + cb) * p);
        for i in 0..ba {
            out.extend_from_slice(&av[i * ca * p..(i + 1) * ca * p]);
            out.extend_from_slice(&bv[i * cb * p..(i + 1) * cb * p]);
        }
        let mut shape = sa.clone();
        shape[sa.len() - 3] = ca + cb;
        let rg = self.rg(a) || self.rg(b);
        self.push("concat", Tensor::new(shape, out)?, Op::Concat { a, b, batch: ba }, rg)
    }

    /// Channels `start..start + len` of a `[b, c, h, w]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, c, h, w) = image_dims(&xs).ok_or_else(|| Error::invalid("slice needs an image tensor"))?;
        if start + len > c || len == 0 {
            return Err(Error::invalid(format!("channel slice {start}..{} of {c}", start + len)));
        }
        let p = h * w;
        let xv = self.values(x);
        let mut out = Vec::with_capacity(batch * len * p);
        for b in 0..batch {
            out.extend_from_slice(&xv[(b * c + start) * p..(b * c + start + len) * p]);
        }
        let mut shape = xs.clone();
        shape[xs.len() - 3] = len;
        let rg = self.rg(x);
        self.push(
            "slice",
            Tensor::new(shape, out)?,
            Op::SliceChannels { x, start, batch },
            rg,
        )
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Result<Var> {
        let xs = self.values(x).iter();
        let out: Vec<f64> = match f {
            Unary::Tanh => xs.map(|&v| quant::tanh(v)).collect(),
            Unary::Sigmoid => xs.map(|&v| quant::sigmoid(v)).collect(),
            Unary::LeakyLinear(a) => xs.map(|&v| if v >= 0.0 { v } else { a * v }).collect(),
            Unary::Abs => xs.map(|&v| v.abs()).collect(),
            Unary::Cos => xs.map(|&v| v.cos()).collect(),
            Unary::Sin => xs.map(|&v| v.sin()).collect(),
            Unary::SqrtOneMinusSquare(_) => xs.map(|&v| (1.0 - v * v).max(0.0).sqrt()).collect(),
        };
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x);
        self.push("unary", t, Op::Unary { x, f }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn leaky_linear(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.unary(x, Unary::LeakyLinear(alpha))
    }

    /// Soft sum-of-sigmoids staircase with `2^bits` plateaus.
    pub fn ssq(&mut self, x: Var, bits: u32, alpha: f64) -> Result<Var> {
        quant::check_ssq_params(bits, alpha)?;
        let kernel = quant::SsqKernel::new(bits, alpha);
        let (vals, slope): (Vec<f64>, Vec<f64>) = self.values(x).iter().map(|&v| kernel.eval(v)).unzip();
        let t = Tensor::new(self.shape(x).to_vec(), vals)?;
        let rg = self.rg(x);
        self.push("ssq", t, Op::Ssq { x, slope }, rg)
    }

    /// Hard uniform quantization onto `2^bits` levels in `[0, 1]`; carries
    /// no gradient.
    pub fn quantize_hard(&mut self, x: Var, bits: u32) -> Result<Var> {
        quant::check_ssq_params(bits, 1.0)?;
        let vals = self.values(x).iter().map(|&v| quant::ssq_hard(v, bits)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), vals)?;
        self.push("quantize_hard", t, Op::Leaf, false)
    }

    /// One-bit threshold at 0.5 with a straight-through gradient on `[0, 1]`.
    pub fn blq(&mut self, x: Var) -> Result<Var> {
        let vals = self.values(x).iter().map(|&v| quant::blq(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), vals)?;
        let rg = self.rg(x);
        self.push("blq", t, Op::StraightThrough(x), rg)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::invalid(format!(
                "{name}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok((Tensor::new(self.shape(a).to_vec(), out)?, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.values(x).iter().map(|v| v * c).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x);
        self.push("scale", t, Op::Scale(x, c), rg)
    }

    /// Elementwise product with fixed coefficients.
    pub fn mul_const(&mut self, x: Var, c: &[f64]) -> Result<Var> {
        if c.len() != self.values(x).len() {
            return Err(Error::invalid("mul_const length mismatch"));
        }
        let out = self.values(x).iter().zip(c).map(|(v, k)| v * k).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x);
        self.push("mul_const", t, Op::MulConst(x, c.to_vec()), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.values(x).iter().map(|v| v * v).sum();
        let rg = self.rg(x);
        self.push("sum_squares", Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.values(x).iter().sum();
        let rg = self.rg(x);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Reverse pass from a scalar output. Gradients accumulate on leaves
    /// across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if self.values(out).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(out)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(i, g, &mut adj, &mut leaf_grads)?;
        }
        for (i, g) in leaf_grads {
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn backward_node(
        &self,
        i: usize,
        g: Vec<f64>,
        adj: &mut [Option<Vec<f64>>],
        leaf_grads: &mut Vec<(usize, Vec<f64>)>,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let y = node.value.values();
        match &node.op {
            Op::Leaf => leaf_grads.push((i, g)),
            Op::Conv(c) => self.conv_backward(c, &g, adj),
            &Op::ChannelBias { x, bias, channels } => {
                if self.rg(bias) {
                    let plane = self.plane_len(x);
                    let mut gb = vec![0.0; channels];
                    for (j, chunk) in g.chunks(plane).enumerate() {
                        gb[j % channels] += chunk.iter().sum::<f64>();
                    }
                    add_into(adj, bias, gb);
                }
                if self.rg(x) {
                    add_into(adj, x, g);
                }
            }
            &Op::Dense { x, w, b } => {
                let n = *self.shape(w).last().unwrap();
                let m = self.shape(w)[0];
                let batch = g.len() / m;
                let (xv, wv) = (self.values(x), self.values(w));
                if self.rg(x) {
                    let mut gx = vec![0.0; batch * n];
                    for bi in 0..batch {
                        let gx_row = &mut gx[bi * n..(bi + 1) * n];
                        for j in 0..m {
                            let gj = g[bi * m + j];
                            if gj != 0.0 {
                                for (a, wv) in gx_row.iter_mut().zip(&wv[j * n..(j + 1) * n]) {
                                    *a += gj * wv;
                                }
                            }
                        }
                    }
                    add_into(adj, x, gx);
                }
                if self.rg(w) {
                    let mut gw = vec![0.0; m * n];
                    for bi in 0..batch {
                        let xr = &xv[bi * n..(bi + 1) * n];
                        for j in 0..m {
                            let gj = g[bi * m + j];
                            if gj != 0.0 {
                                for (a, xv) in gw[j * n..(j + 1) * n].iter_mut().zip(xr) {
                                    *a += gj * xv;
                                }
                            }
                        }
                    }
                    add_into(adj, w, gw);
                }
                if self.rg(b) {
                    let mut gb = vec![0.0; m];
                    for row in g.chunks(m) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    add_into(adj, b, gb);
                }
            }
            &Op::Reshape(x) => add_into(adj, x, g),
            &Op::Concat { a, b, batch } => {
                let (na, nb) = (self.values(a).len() / batch, self.values(b).len() / batch);
                let mut ga = Vec::with_capacity(na * batch);
                let mut gb = Vec::with_capacity(nb * batch);
                for chunk in g.chunks(na + nb) {
                    ga.extend_from_slice(&chunk[..na]);
                    gb.extend_from_slice(&chunk[na..]);
                }
                if self.rg(a) {
                    add_into(adj, a, ga);
                }
                if self.rg(b) {
                    add_into(adj, b, gb);
                }
            }
            &Op::SliceChannels { x, start, batch } => {
                let per = self.values(x).len() / batch;
                let len = g.len() / batch;
                let plane = self.plane_len(x);
                let mut gx = vec![0.0; per * batch];
                for bi in 0..batch {
                    gx[bi * per + start * plane..][..len].copy_from_slice(&g[bi * len..(bi + 1) * len]);
                }
                add_into(adj, x, gx);
            }
            &Op::Unary { x, f } => {
                let xv = self.values(x);
                let gx = g
                    .iter()
                    .zip(xv)
                    .zip(y)
                    .map(|((g, &x), &y)| {
                        g * match f {
                            Unary::Tanh => 1.0 - y * y,
                            Unary::Sigmoid => y * (1.0 - y),
                            Unary::LeakyLinear(a) => {
                                if x >= 0.0 {
                                    1.0
                                } else {
                                    a
                                }
                            }
                            Unary::Abs => {
                                if x > 0.0 {
                                    1.0
                                } else if x < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Cos => -x.sin(),
                            Unary::Sin => x.cos(),
                            Unary::SqrtOneMinusSquare(eps) => {
                                if 1.0 - x * x > eps {
                                    -x / y
                                } else {
                                    0.0
                                }
                            }
                        }
                    })
                    .collect();
                add_into(adj, x, gx);
            }
            Op::Ssq { x, slope } => {
                let gx = g.iter().zip(slope).map(|(g, s)| g * s).collect();
                add_into(adj, *x, gx);
            }
            &Op::StraightThrough(x) => {
                let gx = g
                    .iter()
                    .zip(self.values(x))
                    .map(|(g, v)| if (0.0..=1.0).contains(v) { *g } else { 0.0 })
                    .collect();
                add_into(adj, x, gx);
            }
            &Op::Add(a, b) => {
                if self.rg(a) {
                    add_into(adj, a, g.clone());
                }
                if self.rg(b) {
                    add_into(adj, b, g);
                }
            }
            &Op::Sub(a, b) => {
                if self.rg(a) {
                    add_into(adj, a, g.clone());
                }
                if self.rg(b) {
                    add_into(adj, b, g.iter().map(|v| -v).collect());
                }
            }
            &Op::Mul(a, b) => {
                if self.rg(a) {
                    add_into(adj, a, g.iter().zip(self.values(b)).map(|(g, v)| g * v).collect());
                }
                if self.rg(b) {
                    add_into(adj, b, g.iter().zip(self.values(a)).map(|(g, v)| g * v).collect());
                }
            }
            &Op::Scale(x, c) => add_into(adj, x, g.iter().map(|v| v * c).collect()),
            Op::MulConst(x, c) => add_into(adj, *x, g.iter().zip(c).map(|(g, k)| g * k).collect()),
            &Op::SumSquares(x) => add_into(adj, x, self.values(x).iter().map(|v| 2.0 * v * g[0]).collect()),
            &Op::Sum(x) => add_into(adj, x, vec![g[0]; self.values(x).len()]),
        }
        Ok(())
    }

    fn plane_len(&self, x: Var) -> usize {
        let s = self.shape(x);
        s[s.len() - 2] * s[s.len() - 1]
    }

    fn conv_backward(&self, c: &ConvCache, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let fft = Fft2::plan(c.th, c.tw);
        let s = fft.bins();
        let hw = c.h * c.w;
        let mut torus = vec![0.0; c.th * c.tw];
        let mut g_spec = Spectra::zeros(c.batch * c.c_out, s);
        for plane in 0..c.batch * c.c_out {
            embed(&g[plane * hw..(plane + 1) * hw], c.h, c.w, c.tw, &mut torus);
            fft.forward_into(&torus, &mut g_spec, plane);
        }
        let (mut acc_re, mut acc_im) = (vec![0.0; s], vec![0.0; s]);
        if self.rg(c.x) {
            let mut gx = vec![0.0; c.batch * c.c_in * hw];
            for b in 0..c.batch {
                for i in 0..c.c_in {
                    acc_re.fill(0.0);
                    acc_im.fill(0.0);
                    for o in 0..c.c_out {
                        mac(
                            (&mut acc_re, &mut acc_im),
                            g_spec.plane(b * c.c_out + o),
                            c.k_spec.plane(o * c.c_in + i),
                        );
                    }
                    fft.inverse_from(&acc_re, &acc_im, &mut torus);
                    crop(&torus, c.h, c.w, c.tw, &mut gx[(b * c.c_in + i) * hw..][..hw]);
                }
            }
            add_into(adj, c.x, gx);
        }
        if self.rg(c.k) {
            let ks = c.ks;
            let center = (ks / 2) as isize;
            let mut gk = vec![0.0; c.c_out * c.c_in * ks * ks];
            for o in 0..c.c_out {
                for i in 0..c.c_in {
                    acc_re.fill(0.0);
                    acc_im.fill(0.0);
                    for b in 0..c.batch {
                        mac_conj(
                            (&mut acc_re, &mut acc_im),
                            c.x_spec.plane(b * c.c_in + i),
                            g_spec.plane(b * c.c_out + o),
                        );
                    }
                    fft.inverse_from(&acc_re, &acc_im, &mut torus);
                    let pair = o * c.c_in + i;
                    for a in 0..ks {
                        let r = (a as isize - center).rem_euclid(c.th as isize) as usize;
                        for bb in 0..ks {
                            let col = (bb as isize - center).rem_euclid(c.tw as isize) as usize;
                            gk[(pair * ks + a) * ks + bb] = torus[r * c.tw + col];
                        }
                    }
                }
            }
            add_into(adj, c.k, gk);
        }
    }
}

/// Places an `h x w` plane at the top-left of a torus of width `tw`
/// (identity when the torus has the plane's size).
fn embed(plane: &[f64], h: usize, w: usize, tw: usize, torus: &mut [f64]) {
    if tw == w && torus.len() == plane.len() {
        torus.copy_from_slice(plane);
        return;
    }
    torus.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..h {
        torus[r * tw..r * tw + w].copy_from_slice(&plane[r * w..(r + 1) * w]);
    }
}

fn crop(torus: &[f64], h: usize, w: usize, tw: usize, out: &mut [f64]) {
    if tw == w && torus.len() == out.len() {
        out.copy_from_slice(torus);
        return;
    }
    for r in 0..h {
        out[r * w..(r + 1) * w].copy_from_slice(&torus[r * tw..r * tw + w]);
    }
}
