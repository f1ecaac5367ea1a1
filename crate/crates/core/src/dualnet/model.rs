use ndarray::Array2;
use num_complex::Complex64;

use super::arch::{Architecture, DenseSpec, SubNetwork};
use super::config::{FrameworkConfig, PhaseMethod, QuantizerKind, SignPlacement};
use super::losses::{complex_loss_t, magnitude_loss_t, mdpp_loss_t, naive_loss_t, smdp_loss_t, SQRT_EPS};
use super::payload::FeedbackPayload;
use crate::csi::{from_angle_delay, nmse_db, to_angle_delay, AngleDelayCsi, CsiSamplePair};
use crate::decomposition::{
    decompose, mdpq_decode, mdpq_encode, place_sign_bits, sign_bits, CosineMatrix, MagnitudeMatrix, SignMatrix,
};
use crate::error::{Error, Result};
use crate::nn::{quant, ParameterStore, Tape, Tensor, Unary, Var};

/// Quantizer behaviour: `Soft` keeps gradients, `Hard` is what is deployed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    Soft,
    Hard,
}

/// One sample in network units: magnitudes and Cartesian parts are divided
/// by the model's amplitude scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub h: AngleDelayCsi,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub mag: Vec<f64>,
    pub cos: Vec<f64>,
    /// `+1` / `-1` sign of the sine of every entry.
    pub signs: Vec<f64>,
    pub phase: Vec<f64>,
    pub ul_mag: Vec<f64>,
}

/// Receiver-side quantities that stay fixed during phase training.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Inputs {
    pub mag_hat: Vec<f64>,
    pub signs: Vec<f64>,
    pub mask: Vec<f64>,
    /// Dequantized phases of the MDPQ baseline; empty for learned methods.
    pub mdpq_phase: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Overrides the configured sign ratio.
    pub r_s: Option<f64>,
    pub sign_placement: Option<SignPlacement>,
    /// Skip the learned refinement and return the analytic recombination.
    pub bypass_combiner: bool,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            r_s: None,
            sign_placement: None,
            bypass_combiner: false,
            batch_size: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub estimate: AngleDelayCsi,
    pub mag_hat: Array2<f64>,
    pub payload: FeedbackPayload,
}

#[derive(Debug, Clone)]
pub struct DualNetModel {
    config: FrameworkConfig,
    arch: Architecture,
    params: ParameterStore,
    amplitude_scale: f64,
    magnitude_trained: bool,
}

fn image_var(tape: &mut Tape, b: usize, c: usize, q: usize, n: usize, values: Vec<f64>) -> Result<Var> {
    tape.constant(Tensor::new(vec![b, c, q, n], values)?)
}

fn concat<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    rows.flat_map(|r| r.iter().copied()).collect()
}

impl DualNetModel {
    pub fn new(config: FrameworkConfig) -> Result<Self> {
        let arch = Architecture::new(&config)?;
        let params = arch.init(config.seed)?;
        Ok(Self {
            config,
            arch,
            params,
            amplitude_scale: 1.0,
            magnitude_trained: false,
        })
    }

    /// Rebuilds a model from stored parts, checking every parameter against
    /// the architecture.
    pub fn from_parts(
        config: FrameworkConfig,
        params: ParameterStore,
        amplitude_scale: f64,
        magnitude_trained: bool,
    ) -> Result<Self> {
        let mut model = Self::new(config)?;
        if params.len() != model.params.len() {
            return Err(Error::InvalidState(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (name, t) in model.params.iter_mut() {
            let src = params.require(name)?;
            if src.shape() != t.shape() {
                return Err(Error::InvalidState(format!(
                    "parameter {name}: shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            t.values_mut().copy_from_slice(src.values());
        }
        model.set_amplitude_scale(amplitude_scale)?;
        model.magnitude_trained = magnitude_trained;
        Ok(model)
    }

    pub fn config(&self) -> &FrameworkConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn amplitude_scale(&self) -> f64 {
        self.amplitude_scale
    }

    pub fn set_amplitude_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("amplitude scale must be positive, got {scale}")));
        }
        self.amplitude_scale = scale;
        Ok(())
    }

    pub fn magnitude_trained(&self) -> bool {
        self.magnitude_trained
    }

    pub fn mark_magnitude_trained(&mut self) {
        self.magnitude_trained = true;
    }

    pub fn num_parameters(&self, sub: SubNetwork) -> usize {
        self.arch.num_parameters(sub)
    }

    /// Sets the amplitude scale to the largest truncated angle-delay
    /// magnitude over `samples`.
    pub fn fit_amplitude_scale(&mut self, samples: &[CsiSamplePair]) -> Result<()> {
        let mut peak = 0.0f64;
        for s in samples {
            let h = to_angle_delay(&s.downlink, self.config.q_f, self.config.q_l)?;
            peak = h.entries().iter().map(|z| z.norm()).fold(peak, f64::max);
        }
        self.set_amplitude_scale(peak)
    }

    /// Copies the magnitude branch, amplitude scale and training flag from a
    /// compatible model.
    pub fn adopt_magnitude(&mut self, other: &DualNetModel) -> Result<()> {
        let (a, b) = (&self.config, &other.config);
        if (a.q_f, a.q_l, a.n_b, a.k_mag, a.kernel) != (b.q_f, b.q_l, b.n_b, b.k_mag, b.kernel) || a.cr_mag != b.cr_mag
        {
            return Err(Error::invalid("magnitude branches have different shapes"));
        }
        let names: Vec<String> = self
            .params
            .names()
            .filter(|n| SubNetwork::of_param(n).is_some_and(SubNetwork::is_magnitude))
            .map(str::to_string)
            .collect();
        for name in names {
            let src = other.params.require(&name)?.values().to_vec();
            self.params
                .get_mut(&name)
                .expect("own parameter")
                .values_mut()
                .copy_from_slice(&src);
        }
        self.amplitude_scale = other.amplitude_scale;
        self.magnitude_trained = other.magnitude_trained;
        Ok(())
    }

    fn dims(&self) -> (usize, usize) {
        (self.config.q_t(), self.config.n_b)
    }

    fn check_shape(&self, dim: (usize, usize), what: &str) -> Result<()> {
        if dim != self.dims() {
            return Err(Error::invalid(format!(
                "{what} has shape {dim:?}, model expects {:?}",
                self.dims()
            )));
        }
        Ok(())
    }

    /// Truncated downlink and uplink of one pair in network units.
    pub fn prepare(&self, sample: &CsiSamplePair) -> Result<PreparedSample> {
        let h = to_angle_delay(&sample.downlink, self.config.q_f, self.config.q_l)?;
        let ul = to_angle_delay(&sample.uplink, self.config.q_f, self.config.q_l)?;
        let ul_mag = MagnitudeMatrix::new(ul.entries().mapv(|z| z.norm()))?;
        self.prepare_parts(h, &ul_mag)
    }

    pub fn prepare_parts(&self, h: AngleDelayCsi, ul_mag: &MagnitudeMatrix) -> Result<PreparedSample> {
        self.check_shape(h.entries().dim(), "angle-delay CSI")?;
        self.check_shape(ul_mag.dim(), "uplink magnitude")?;
        if (h.q_f(), h.q_l()) != (self.config.q_f, self.config.q_l) {
            return Err(Error::invalid("truncation split differs from the model's"));
        }
        let inv = 1.0 / self.amplitude_scale;
        let (mag, cos, sign) = decompose(&h);
        let e = h.entries();
        Ok(PreparedSample {
            re: e.iter().map(|z| z.re * inv).collect(),
            im: e.iter().map(|z| z.im * inv).collect(),
            mag: mag.values().iter().map(|m| m * inv).collect(),
            cos: cos.values().iter().copied().collect(),
            signs: sign.as_f64().iter().copied().collect(),
            phase: e.iter().map(|z| z.arg()).collect(),
            ul_mag: ul_mag.values().iter().map(|m| m * inv).collect(),
            h,
        })
    }

    fn fc(tape: &mut Tape, params: &ParameterStore, spec: &DenseSpec, x: Var) -> Result<Var> {
        let w = tape.param(params, &format!("{}.weight", spec.name))?;
        let b = tape.param(params, &format!("{}.bias", spec.name))?;
        tape.dense(x, w, b)
    }

    fn quantize(&self, tape: &mut Tape, x: Var, bits: u32, kind: QuantizerKind, mode: QuantMode) -> Result<Var> {
        match (kind, mode) {
            (QuantizerKind::Blq, _) => tape.blq(x),
            (QuantizerKind::Ssq, QuantMode::Soft) => tape.ssq(x, bits, self.config.ssq_alpha),
            (QuantizerKind::Ssq, QuantMode::Hard) => tape.quantize_hard(x, bits),
        }
    }

    fn flatten(tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        tape.reshape(x, vec![s[0], s[1..].iter().product()])
    }

    fn unflatten(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let b = tape.shape(x)[0];
        let (q, n) = self.dims();
        tape.reshape(x, vec![b, 1, q, n])
    }

    /// `[b, 1, q, n]` scaled magnitudes to `[b, M]` codeword values.
    pub fn mag_encode_t(&self, params: &ParameterStore, tape: &mut Tape, x: Var, mode: QuantMode) -> Result<Var> {
        let y = self.arch.mag_enc.apply(tape, params, x)?;
        let y = Self::flatten(tape, y)?;
        let y = Self::fc(tape, params, &self.arch.mag_enc_fc, y)?;
        let y = tape.unary(y, Unary::Sigmoid)?;
        self.quantize(tape, y, self.config.k_mag, QuantizerKind::Ssq, mode)
    }

    /// Codeword plus uplink magnitudes to the scaled downlink magnitude
    /// estimate.
    pub fn mag_decode_t(&self, params: &ParameterStore, tape: &mut Tape, code: Var, ul: Var) -> Result<Var> {
        let y = Self::fc(tape, params, &self.arch.mag_dec_fc, code)?;
        let y = self.unflatten(tape, y)?;
        let y = tape.concat_channels(y, ul)?;
        self.arch.mag_dec.apply(tape, params, y)
    }

    fn phase_nets(&self) -> Result<(&crate::nn::Stack, &DenseSpec, &DenseSpec, &crate::nn::Stack)> {
        match (
            &self.arch.pha_enc,
            &self.arch.pha_enc_fc,
            &self.arch.pha_dec_fc,
            &self.arch.pha_dec,
        ) {
            (Some(a), Some(b), Some(c), Some(d)) => Ok((a, b, c, d)),
            _ => Err(Error::InvalidState("configuration has no phase network".into())),
        }
    }

    pub fn phase_encode_t(&self, params: &ParameterStore, tape: &mut Tape, x: Var, mode: QuantMode) -> Result<Var> {
        let (enc, enc_fc, _, _) = self.phase_nets()?;
        let y = enc.apply(tape, params, x)?;
        let y = Self::flatten(tape, y)?;
        let y = Self::fc(tape, params, enc_fc, y)?;
        let y = tape.unary(y, Unary::Sigmoid)?;
        self.quantize(
            tape,
            y,
            self.config.phase_value_bits(),
            self.config.quantizer_kind,
            mode,
        )
    }

    /// `side` images are stacked after the expanded codeword.
    pub fn phase_decode_t(&self, params: &ParameterStore, tape: &mut Tape, code: Var, side: &[Var]) -> Result<Var> {
        let (_, _, dec_fc, dec) = self.phase_nets()?;
        let y = Self::fc(tape, params, dec_fc, code)?;
        let mut y = self.unflatten(tape, y)?;
        for &s in side {
            y = tape.concat_channels(y, s)?;
        }
        dec.apply(tape, params, y)
    }

    /// Residual refinement of a `[b, 2, q, n]` real/imaginary estimate.
    pub fn combine_t(&self, params: &ParameterStore, tape: &mut Tape, init: Var) -> Result<Var> {
        let r = self.arch.comb.apply(tape, params, init)?;
        tape.add(init, r)
    }

    fn stack2(&self, tape: &mut Tape, re: Var, im: Var) -> Result<Var> {
        tape.concat_channels(re, im)
    }

    /// Stage-1 objective: magnitude MSE with soft quantization.
    pub fn magnitude_objective(
        &self,
        params: &ParameterStore,
        tape: &mut Tape,
        batch: &[&PreparedSample],
    ) -> Result<Var> {
        let (q, n) = self.dims();
        let b = batch.len();
        let x = image_var(tape, b, 1, q, n, concat(batch.iter().map(|s| s.mag.as_slice())))?;
        let ul = image_var(tape, b, 1, q, n, concat(batch.iter().map(|s| s.ul_mag.as_slice())))?;
        let code = self.mag_encode_t(params, tape, x, QuantMode::Soft)?;
        let m = self.mag_decode_t(params, tape, code, ul)?;
        magnitude_loss_t(tape, m, &concat(batch.iter().map(|s| s.mag.as_slice())), b)
    }

    /// Deployment-mode magnitude estimates, `[b][q*n]` in network units.
    pub fn estimate_magnitudes(&self, batch: &[&PreparedSample]) -> Result<Vec<Vec<f64>>> {
        let (codes, _) = self.mag_codes(batch)?;
        self.decode_magnitudes(&codes, batch)
    }

    fn mag_codes(&self, batch: &[&PreparedSample]) -> Result<(Vec<Vec<f64>>, usize)> {
        let (q, n) = self.dims();
        let mut tape = Tape::new();
        let x = image_var(
            &mut tape,
            batch.len(),
            1,
            q,
            n,
            concat(batch.iter().map(|s| s.mag.as_slice())),
        )?;
        let code = self.mag_encode_t(&self.params, &mut tape, x, QuantMode::Hard)?;
        let m = tape.shape(code)[1];
        Ok((tape.values(code).chunks(m).map(<[f64]>::to_vec).collect(), m))
    }

    fn decode_magnitudes(&self, codes: &[Vec<f64>], batch: &[&PreparedSample]) -> Result<Vec<Vec<f64>>> {
        let (q, n) = self.dims();
        let b = batch.len();
        let mut tape = Tape::new();
        let m = codes.first().map_or(0, Vec::len);
        let code = tape.constant(Tensor::new(vec![b, m], concat(codes.iter().map(Vec::as_slice)))?)?;
        let ul = image_var(&mut tape, b, 1, q, n, concat(batch.iter().map(|s| s.ul_mag.as_slice())))?;
        let out = self.mag_decode_t(&self.params, &mut tape, code, ul)?;
        Ok(tape.values(out).chunks(q * n).map(<[f64]>::to_vec).collect())
    }

    fn matrix(&self, v: &[f64]) -> Result<Array2<f64>> {
        Array2::from_shape_vec(self.dims(), v.to_vec()).map_err(|e| Error::invalid(e.to_string()))
    }

    /// Sign bits the transmitter sends: true signs of the `ceil(r_s * n)`
    /// largest true magnitudes, in rank order.
    fn transmit_signs(&self, s: &PreparedSample, r_s: f64) -> Result<Vec<bool>> {
        let signs = SignMatrix::full(self.matrix(&s.signs)?.mapv(|v| if v < 0.0 { -1i8 } else { 1 }))?;
        sign_bits(&signs, &MagnitudeMatrix::new(self.matrix(&s.mag)?)?, r_s)
    }

    fn receive_signs(
        &self,
        bits: &[bool],
        mag_hat: &[f64],
        s: &PreparedSample,
        placement: SignPlacement,
    ) -> Result<SignMatrix> {
        let ranking = match placement {
            SignPlacement::Recovered => MagnitudeMatrix::new(self.matrix(mag_hat)?)?,
            SignPlacement::Genie => MagnitudeMatrix::new(self.matrix(&s.mag)?)?,
        };
        place_sign_bits(bits, &ranking)
    }

    fn mdpq_phases(&self, s: &PreparedSample) -> Result<(Vec<bool>, Vec<f64>)> {
        // Bin allocation follows the true magnitude ranks at both ends.
        let table = self.config.mdpq_table()?;
        let mag = MagnitudeMatrix::new(self.matrix(&s.mag)?)?;
        let bits = mdpq_encode(&self.matrix(&s.phase)?, &mag, &table)?;
        let phase = mdpq_decode(&bits, &mag, &table)?;
        Ok((bits, phase.iter().copied().collect()))
    }

    /// Fixed receiver-side inputs for phase training, computed with the
    /// deployed magnitude branch.
    pub fn stage2_inputs(&self, batch: &[&PreparedSample]) -> Result<Vec<Stage2Inputs>> {
        let mag_hat = self.estimate_magnitudes(batch)?;
        batch
            .iter()
            .zip(mag_hat)
            .map(|(s, m)| {
                let (signs, mask) = if self.config.sends_signs() {
                    let bits = self.transmit_signs(s, self.config.r_s)?;
                    let placed = self.receive_signs(&bits, &m, s, self.config.sign_placement)?;
                    (
                        placed.as_f64().iter().copied().collect(),
                        placed.transmitted().iter().map(|&t| f64::from(u8::from(t))).collect(),
                    )
                } else {
                    (Vec::new(), Vec::new())
                };
                let mdpq_phase = if self.config.phase_method == PhaseMethod::Mdpq {
                    self.mdpq_phases(s)?.1
                } else {
                    Vec::new()
                };
                Ok(Stage2Inputs {
                    mag_hat: m,
                    signs,
                    mask,
                    mdpq_phase,
                })
            })
            .collect()
    }

    fn phase_input(&self, s: &PreparedSample) -> Vec<f64> {
        match self.config.phase_method {
            PhaseMethod::Smdp => s.cos.clone(),
            _ => s.phase.iter().map(|p| p / std::f64::consts::PI).collect(),
        }
    }

    fn side_images(&self, tape: &mut Tape, signs: Vec<f64>, mask: Vec<f64>, b: usize) -> Result<Vec<Var>> {
        let (q, n) = self.dims();
        let mut side = Vec::new();
        if self.config.sends_signs() {
            side.push(image_var(tape, b, 1, q, n, signs)?);
            if self.config.mask_channel {
                side.push(image_var(tape, b, 1, q, n, mask)?);
            }
        }
        Ok(side)
    }

    /// Phase-branch output, method loss and analytic initial estimate for
    /// magnitude estimate `m`.
    #[allow(clippy::too_many_arguments)]
    fn phase_terms(
        &self,
        params: &ParameterStore,
        tape: &mut Tape,
        batch: &[&PreparedSample],
        m: Var,
        signs: Vec<f64>,
        mask: Vec<f64>,
        mdpq_phase: Vec<f64>,
        mode: QuantMode,
    ) -> Result<(Option<Var>, Var, Var)> {
        let (q, n) = self.dims();
        let b = batch.len();
        let re = concat(batch.iter().map(|s| s.re.as_slice()));
        let im = concat(batch.iter().map(|s| s.im.as_slice()));
        if self.config.phase_method == PhaseMethod::Mdpq {
            let c: Vec<f64> = mdpq_phase.iter().map(|p| p.cos()).collect();
            let s: Vec<f64> = mdpq_phase.iter().map(|p| p.sin()).collect();
            let r0 = tape.mul_const(m, &c)?;
            let i0 = tape.mul_const(m, &s)?;
            return Ok((None, r0, i0));
        }
        let x = image_var(
            tape,
            b,
            1,
            q,
            n,
            concat(
                batch
                    .iter()
                    .map(|s| self.phase_input(s))
                    .collect::<Vec<_>>()
                    .iter()
                    .map(Vec::as_slice),
            ),
        )?;
        let code = self.phase_encode_t(params, tape, x, mode)?;
        let side = self.side_images(tape, signs.clone(), mask, b)?;
        let out = self.phase_decode_t(params, tape, code, &side)?;
        match self.config.phase_method {
            PhaseMethod::Smdp => {
                let loss = smdp_loss_t(tape, m, out, &re, &im, &signs, b)?;
                let r0 = tape.mul(m, out)?;
                let root = tape.unary(out, Unary::SqrtOneMinusSquare(SQRT_EPS))?;
                let sine = tape.mul_const(root, &signs)?;
                let i0 = tape.mul(m, sine)?;
                Ok((Some(loss), r0, i0))
            }
            method => {
                let loss = if method == PhaseMethod::Naive {
                    naive_loss_t(tape, m, out, &re, &im, b)?
                } else {
                    let phase = concat(batch.iter().map(|s| s.phase.as_slice()));
                    let mag = concat(batch.iter().map(|s| s.mag.as_slice()));
                    mdpp_loss_t(tape, out, &phase, &mag, b)?
                };
                let c = tape.unary(out, Unary::Cos)?;
                let s = tape.unary(out, Unary::Sin)?;
                let r0 = tape.mul(m, c)?;
                let i0 = tape.mul(m, s)?;
                Ok((Some(loss), r0, i0))
            }
        }
    }

    /// Stage-2 objective: the method's loss on the phase branch plus complex
    /// MSE of the combiner, whose input is detached from the phase branch.
    pub fn phase_objective(
        &self,
        params: &ParameterStore,
        tape: &mut Tape,
        batch: &[&PreparedSample],
        inputs: &[&Stage2Inputs],
    ) -> Result<Var> {
        if batch.len() != inputs.len() {
            return Err(Error::invalid("batch and stage-2 inputs differ in length"));
        }
        let (q, n) = self.dims();
        let b = batch.len();
        let m = image_var(tape, b, 1, q, n, concat(inputs.iter().map(|i| i.mag_hat.as_slice())))?;
        let (method_loss, r0, i0) = self.phase_terms(
            params,
            tape,
            batch,
            m,
            concat(inputs.iter().map(|i| i.signs.as_slice())),
            concat(inputs.iter().map(|i| i.mask.as_slice())),
            concat(inputs.iter().map(|i| i.mdpq_phase.as_slice())),
            QuantMode::Soft,
        )?;
        let init = self.stack2(tape, r0, i0)?;
        let detached = tape.constant(tape.value(init).clone().with_requires_grad(false))?;
        let out = self.combine_t(params, tape, detached)?;
        let re = concat(batch.iter().map(|s| s.re.as_slice()));
        let im = concat(batch.iter().map(|s| s.im.as_slice()));
        let comb_loss = complex_loss_t(tape, out, &re, &im, b)?;
        match method_loss {
            Some(l) => tape.add(l, comb_loss),
            None => Ok(comb_loss),
        }
    }

    /// Single end-to-end objective through every sub-network with soft
    /// quantizers: complex MSE of the final estimate plus the method loss on
    /// the live magnitude estimate.
    pub fn end_to_end_objective(
        &self,
        params: &ParameterStore,
        tape: &mut Tape,
        batch: &[&PreparedSample],
    ) -> Result<Var> {
        let (q, n) = self.dims();
        let b = batch.len();
        let x = image_var(tape, b, 1, q, n, concat(batch.iter().map(|s| s.mag.as_slice())))?;
        let ul = image_var(tape, b, 1, q, n, concat(batch.iter().map(|s| s.ul_mag.as_slice())))?;
        let code = self.mag_encode_t(params, tape, x, QuantMode::Soft)?;
        let m = self.mag_decode_t(params, tape, code, ul)?;
        let mag_hat: Vec<f64> = tape.values(m).to_vec();
        let (mut signs, mut mask, mut mdpq) = (Vec::new(), Vec::new(), Vec::new());
        for (i, s) in batch.iter().enumerate() {
            if self.config.sends_signs() {
                let bits = self.transmit_signs(s, self.config.r_s)?;
                let placed = self.receive_signs(
                    &bits,
                    &mag_hat[i * q * n..(i + 1) * q * n],
                    s,
                    self.config.sign_placement,
                )?;
                signs.extend(placed.as_f64().iter().copied());
                mask.extend(placed.transmitted().iter().map(|&t| f64::from(u8::from(t))));
            }
            if self.config.phase_method == PhaseMethod::Mdpq {
                mdpq.extend(self.mdpq_phases(s)?.1);
            }
        }
        let (method_loss, r0, i0) = self.phase_terms(params, tape, batch, m, signs, mask, mdpq, QuantMode::Soft)?;
        let init = self.stack2(tape, r0, i0)?;
        let out = self.combine_t(params, tape, init)?;
        let re = concat(batch.iter().map(|s| s.re.as_slice()));
        let im = concat(batch.iter().map(|s| s.im.as_slice()));
        let l = complex_loss_t(tape, out, &re, &im, b)?;
        match method_loss {
            Some(ml) => tape.add(l, ml),
            None => Ok(l),
        }
    }

    fn index_of(&self, v: f64, bits: u32, kind: QuantizerKind) -> u32 {
        match kind {
            QuantizerKind::Blq => u32::from(v >= 0.5),
            QuantizerKind::Ssq => quant::level_index(v, bits),
        }
    }

    fn value_of(&self, idx: u32, bits: u32, kind: QuantizerKind) -> f64 {
        match kind {
            QuantizerKind::Blq => f64::from(idx),
            QuantizerKind::Ssq => quant::level_value(idx, bits),
        }
    }

    /// Deployment-mode feedback and reconstruction of a batch. The receiver
    /// works only from the payload and the uplink magnitudes (plus the true
    /// ranking in genie mode and for the MDPQ bin allocation).
    pub fn forward_batch(&self, batch: &[&PreparedSample], opts: &EvalOptions) -> Result<Vec<Reconstruction>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let cfg = &self.config;
        let (q, n) = self.dims();
        let b = batch.len();
        let r_s = opts.r_s.unwrap_or(cfg.r_s);
        let placement = opts.sign_placement.unwrap_or(cfg.sign_placement);
        let pha_kind = cfg.quantizer_kind;
        let pha_bits = cfg.phase_value_bits();

        // Transmitter.
        let (mag_codes, _) = self.mag_codes(batch)?;
        let phase_codes: Vec<Vec<u32>> = if cfg.phase_method.uses_phase_network() {
            let mut tape = Tape::new();
            let x = image_var(
                &mut tape,
                b,
                1,
                q,
                n,
                concat(
                    batch
                        .iter()
                        .map(|s| self.phase_input(s))
                        .collect::<Vec<_>>()
                        .iter()
                        .map(Vec::as_slice),
                ),
            )?;
            let code = self.phase_encode_t(&self.params, &mut tape, x, QuantMode::Hard)?;
            let l = tape.shape(code)[1];
            tape.values(code)
                .chunks(l)
                .map(|c| c.iter().map(|&v| self.index_of(v, pha_bits, pha_kind)).collect())
                .collect()
        } else {
            batch
                .iter()
                .map(|s| Ok(self.mdpq_phases(s)?.0.into_iter().map(u32::from).collect()))
                .collect::<Result<_>>()?
        };
        let mut payloads = Vec::with_capacity(b);
        for (i, s) in batch.iter().enumerate() {
            let sign_bits = if cfg.sends_signs() {
                self.transmit_signs(s, r_s)?
            } else {
                Vec::new()
            };
            payloads.push(FeedbackPayload {
                mag_codeword: mag_codes[i].iter().map(|&v| quant::level_index(v, cfg.k_mag)).collect(),
                mag_bits: cfg.k_mag,
                phase_codeword: phase_codes[i].clone(),
                phase_bits: if cfg.phase_method.uses_phase_network() {
                    pha_bits
                } else {
                    1
                },
                sign_bits,
            });
        }

        // Receiver.
        let rx_mag: Vec<Vec<f64>> = payloads
            .iter()
            .map(|p| {
                p.mag_codeword
                    .iter()
                    .map(|&i| quant::level_value(i, cfg.k_mag))
                    .collect()
            })
            .collect();
        let mag_hat = self.decode_magnitudes(&rx_mag, batch)?;
        let (mut signs, mut mask) = (Vec::new(), Vec::new());
        if cfg.sends_signs() {
            for ((p, m), s) in payloads.iter().zip(&mag_hat).zip(batch) {
                let placed = self.receive_signs(&p.sign_bits, m, s, placement)?;
                signs.extend(placed.as_f64().iter().copied());
                mask.extend(placed.transmitted().iter().map(|&t| f64::from(u8::from(t))));
            }
        }
        let mut tape = Tape::new();
        let m = image_var(&mut tape, b, 1, q, n, concat(mag_hat.iter().map(Vec::as_slice)))?;
        let (r0, i0) = if cfg.phase_method.uses_phase_network() {
            let l = payloads[0].phase_codeword.len();
            let vals = concat(
                payloads
                    .iter()
                    .map(|p| {
                        p.phase_codeword
                            .iter()
                            .map(|&i| self.value_of(i, pha_bits, pha_kind))
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
                    .iter()
                    .map(Vec::as_slice),
            );
            let code = tape.constant(Tensor::new(vec![b, l], vals)?)?;
            let side = self.side_images(&mut tape, signs.clone(), mask, b)?;
            let out = self.phase_decode_t(&self.params, &mut tape, code, &side)?;
            let outv = tape.values(out).to_vec();
            let mv = tape.values(m).to_vec();
            if cfg.phase_method == PhaseMethod::Smdp {
                let r0: Vec<f64> = mv.iter().zip(&outv).map(|(m, c)| m * c).collect();
                let i0: Vec<f64> = mv
                    .iter()
                    .zip(&outv)
                    .zip(&signs)
                    .map(|((m, c), s)| m * s * (1.0 - c * c).max(0.0).sqrt())
                    .collect();
                (r0, i0)
            } else {
                (
                    mv.iter().zip(&outv).map(|(m, t)| m * t.cos()).collect(),
                    mv.iter().zip(&outv).map(|(m, t)| m * t.sin()).collect(),
                )
            }
        } else {
            let table = cfg.mdpq_table()?;
            let mut r0 = Vec::with_capacity(b * q * n);
            let mut i0 = Vec::with_capacity(b * q * n);
            for ((p, s), mh) in payloads.iter().zip(batch).zip(&mag_hat) {
                let bits: Vec<bool> = p.phase_codeword.iter().map(|&v| v == 1).collect();
                let phase = mdpq_decode(&bits, &MagnitudeMatrix::new(self.matrix(&s.mag)?)?, &table)?;
                for (m, ph) in mh.iter().zip(phase.iter()) {
                    r0.push(m * ph.cos());
                    i0.push(m * ph.sin());
                }
            }
            (r0, i0)
        };
        let plane = q * n;
        let mut init = Vec::with_capacity(2 * b * plane);
        for i in 0..b {
            init.extend_from_slice(&r0[i * plane..(i + 1) * plane]);
            init.extend_from_slice(&i0[i * plane..(i + 1) * plane]);
        }
        let out = if opts.bypass_combiner {
            init
        } else {
            let x = image_var(&mut tape, b, 2, q, n, init)?;
            let y = self.combine_t(&self.params, &mut tape, x)?;
            tape.values(y).to_vec()
        };
        let scale = self.amplitude_scale;
        payloads
            .into_iter()
            .enumerate()
            .map(|(i, payload)| {
                let re = &out[2 * i * plane..(2 * i + 1) * plane];
                let im = &out[(2 * i + 1) * plane..(2 * i + 2) * plane];
                let entries =
                    Array2::from_shape_fn((q, n), |(r, c)| Complex64::new(re[r * n + c], im[r * n + c]) * scale);
                Ok(Reconstruction {
                    estimate: AngleDelayCsi::new(entries, cfg.q_f, cfg.q_l)?,
                    mag_hat: self.matrix(&mag_hat[i])?.mapv(|v| v * scale),
                    payload,
                })
            })
            .collect()
    }

    /// Deployment-mode feedback of one sample.
    pub fn forward(&self, h: &AngleDelayCsi, ul_mag: &MagnitudeMatrix) -> Result<(AngleDelayCsi, FeedbackPayload)> {
        let p = self.prepare_parts(h.clone(), ul_mag)?;
        let mut r = self.forward_batch(&[&p], &EvalOptions::default())?;
        let r = r.pop().expect("one sample");
        Ok((r.estimate, r.payload))
    }

    /// NMSE in dB of the reconstructed spatial-frequency downlink over
    /// `samples`.
    pub fn evaluate(&self, samples: &[CsiSamplePair], opts: &EvalOptions) -> Result<EvalReport> {
        if samples.is_empty() {
            return Err(Error::invalid("evaluation needs at least one sample"));
        }
        let n_f = samples[0].downlink.n_f();
        let mut truth = Vec::with_capacity(samples.len());
        let mut est = Vec::with_capacity(samples.len());
        let (mut mag_err, mut mag_norm) = (0.0, 0.0);
        for chunk in samples.chunks(opts.batch_size.max(1)) {
            let prepared = chunk.iter().map(|s| self.prepare(s)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&PreparedSample> = prepared.iter().collect();
            for (r, (s, p)) in self
                .forward_batch(&refs, opts)?
                .into_iter()
                .zip(chunk.iter().zip(&prepared))
            {
                let true_mag = p.h.entries().mapv(|z| z.norm());
                mag_err += (&r.mag_hat - &true_mag).mapv(|d| d * d).sum() / true_mag.mapv(|v| v * v).sum();
                mag_norm += 1.0;
                est.push(from_angle_delay(&r.estimate, n_f)?);
                truth.push(s.downlink.clone());
            }
        }
        Ok(EvalReport {
            nmse_db: nmse_db(&truth, &est)?,
            magnitude_nmse_db: crate::csi::ratio_to_db(mag_err / mag_norm, crate::csi::DEFAULT_NMSE_FLOOR_DB),
            samples: samples.len(),
        })
    }

    /// Deployment-mode magnitude codeword of one matrix (values on the
    /// `2^k_mag` grid).
    pub fn mag_encode(&self, mag: &MagnitudeMatrix) -> Result<Vec<f64>> {
        self.check_shape(mag.dim(), "magnitude")?;
        let (q, n) = self.dims();
        let mut tape = Tape::new();
        let x = image_var(
            &mut tape,
            1,
            1,
            q,
            n,
            mag.values().iter().map(|v| v / self.amplitude_scale).collect(),
        )?;
        let c = self.mag_encode_t(&self.params, &mut tape, x, QuantMode::Hard)?;
        Ok(tape.values(c).to_vec())
    }

    pub fn mag_decode(&self, codeword: &[f64], ul_mag: &MagnitudeMatrix) -> Result<MagnitudeMatrix> {
        self.check_shape(ul_mag.dim(), "uplink magnitude")?;
        if codeword.len() != self.config.mag_codeword_len() {
            return Err(Error::invalid(format!(
                "magnitude codeword has {} values, expected {}",
                codeword.len(),
                self.config.mag_codeword_len()
            )));
        }
        let (q, n) = self.dims();
        let mut tape = Tape::new();
        let code = tape.constant(Tensor::new(vec![1, codeword.len()], codeword.to_vec())?)?;
        let ul = image_var(
            &mut tape,
            1,
            1,
            q,
            n,
            ul_mag.values().iter().map(|v| v / self.amplitude_scale).collect(),
        )?;
        let m = self.mag_decode_t(&self.params, &mut tape, code, ul)?;
        MagnitudeMatrix::new(self.matrix(tape.values(m))?.mapv(|v| v * self.amplitude_scale))
    }

    fn require_smdp(&self) -> Result<()> {
        if self.config.phase_method != PhaseMethod::Smdp {
            return Err(Error::InvalidState(format!(
                "cosine-domain phase ops need the smdp method, model uses {}",
                self.config.phase_method.label()
            )));
        }
        Ok(())
    }

    /// Deployment-mode phase codeword of a cosine matrix.
    pub fn phase_encode(&self, cos: &CosineMatrix) -> Result<Vec<f64>> {
        self.require_smdp()?;
        self.check_shape(cos.dim(), "cosine")?;
        let (q, n) = self.dims();
        let mut tape = Tape::new();
        let x = image_var(&mut tape, 1, 1, q, n, cos.values().iter().copied().collect())?;
        let c = self.phase_encode_t(&self.params, &mut tape, x, QuantMode::Hard)?;
        Ok(tape.values(c).to_vec())
    }

    pub fn phase_decode(&self, codeword: &[f64], signs: &SignMatrix) -> Result<CosineMatrix> {
        self.require_smdp()?;
        self.check_shape(signs.dim(), "sign matrix")?;
        let expected = self.config.phase_codeword_len()?;
        if codeword.len() != expected {
            return Err(Error::invalid(format!(
                "phase codeword has {} values, expected {expected}",
                codeword.len()
            )));
        }
        let mut tape = Tape::new();
        let code = tape.constant(Tensor::new(vec![1, codeword.len()], codeword.to_vec())?)?;
        let side = self.side_images(
            &mut tape,
            signs.as_f64().iter().copied().collect(),
            signs.transmitted().iter().map(|&t| f64::from(u8::from(t))).collect(),
            1,
        )?;
        let c = self.phase_decode_t(&self.params, &mut tape, code, &side)?;
        CosineMatrix::new(self.matrix(tape.values(c))?)
    }

    /// Pythagorean recombination refined by the combiner.
    pub fn combine(
        &self,
        mag_hat: &MagnitudeMatrix,
        cos_hat: &CosineMatrix,
        signs: &SignMatrix,
    ) -> Result<AngleDelayCsi> {
        self.check_shape(mag_hat.dim(), "magnitude")?;
        self.check_shape(cos_hat.dim(), "cosine")?;
        self.check_shape(signs.dim(), "sign matrix")?;
        let (q, n) = self.dims();
        let inv = 1.0 / self.amplitude_scale;
        let mut init = Vec::with_capacity(2 * q * n);
        init.extend(mag_hat.values().iter().zip(cos_hat.values()).map(|(m, c)| m * inv * c));
        init.extend(
            mag_hat
                .values()
                .iter()
                .zip(cos_hat.values())
                .zip(signs.signs())
                .map(|((m, c), &s)| m * inv * f64::from(s) * (1.0 - c * c).max(0.0).sqrt()),
        );
        let mut tape = Tape::new();
        let x = image_var(&mut tape, 1, 2, q, n, init)?;
        let y = self.combine_t(&self.params, &mut tape, x)?;
        let v = tape.values(y);
        let entries = Array2::from_shape_fn((q, n), |(r, c)| {
            Complex64::new(v[r * n + c], v[q * n + r * n + c]) * self.amplitude_scale
        });
        AngleDelayCsi::new(entries, self.config.q_f, self.config.q_l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub nmse_db: f64,
    /// NMSE of the recovered angle-delay magnitudes.
    pub magnitude_nmse_db: f64,
    pub samples: usize,
}
