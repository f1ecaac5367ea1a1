//! Acceptance criteria 1 through 9, one PASS/FAIL line each.
//!
//! Criteria 6 to 8 share one desk-scale run: stage 1 on 4,000 training
//! samples, then five stage-2 cells (SMDP, MDPP, naive, CNN+SSQ, CCNN+BLQ)
//! for 100 epochs each. On a single core this takes over an hour. Set
//! `DUALNET_SKIP_DESK=1` to report those three as skipped.
//!
//! The report does not fail `cargo test` by itself, since the desk-scale
//! orderings are empirical. Set `DUALNET_ACCEPTANCE_STRICT=1` to exit with
//! failure when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dualnet_core::csi::{
    encode_dataset, from_angle_delay, generate_dataset, nmse_db, to_angle_delay, AngleDelayCsi, ChannelModelConfig,
    SpatialFrequencyCsi,
};
use dualnet_core::decomposition::{decompose, phase_bit_budget, SignMatrix};
use dualnet_core::dualnet::{
    loss_smdp, Architecture, DualNetModel, EvalOptions, FrameworkConfig, PhaseMethod, PreparedSample, QuantizerKind,
    SignPlacement,
};
use dualnet_core::experiment::{
    compare_losses, load_data, rows_to_csv, run_cells, train_magnitude, ExperimentSpec, Preset,
};
use dualnet_core::nn::{
    gradient_check, gradient_check_params, CoreKind, Padding, Tape, Tensor, TensorArchive, Unary, Var,
};
use dualnet_core::training::{
    checkpoint_from_archive, checkpoint_to_archive, train_stage, Stage, TrainConfig, TrainState, Trainer,
};
use dualnet_core::Result;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMDP_IDENTITY_RTOL: f64 = 1e-10;
const SMDP_IDENTITY_BUDGET: Duration = Duration::from_secs(1);
const GRAD_TOL: f64 = 1e-4;
const GRAD_TOL_SSQ: f64 = 1e-3;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const ROUND_TRIP_DB: f64 = -100.0;
const CONV_TOL: f64 = 1e-12;
const TRANSFORM_BUDGET: Duration = Duration::from_secs(10);
const NAIVE_MARGIN_DB: f64 = 1.0;
const DESK_RUNTIME_TARGET: Duration = Duration::from_secs(30 * 60);
const PARAM_RATIO: f64 = 5.0;
const SIGN_RATIO_SLACK_DB: f64 = 1.0;

struct Verdict {
    pass: Option<bool>,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass: Some(pass),
            detail,
        }
    }

    fn skipped(detail: &str) -> Self {
        Self {
            pass: None,
            detail: detail.to_string(),
        }
    }
}

fn random_csi(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> AngleDelayCsi {
    let m = Array2::from_shape_fn((rows, cols), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    AngleDelayCsi::new(m, rows, 0).unwrap()
}

fn smdp_identity() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let h = random_csi(4, 8, &mut rng);
        let mag_hat = Array2::from_shape_fn((4, 8), |_| rng.gen_range(0.0..2.0));
        let cos_hat = Array2::from_shape_fn((4, 8), |_| rng.gen_range(-1.0..1.0));
        let (_, _, sign) = decompose(&h);
        let signs = SignMatrix::full(sign.signs().clone())?;
        let direct: f64 = h
            .entries()
            .iter()
            .zip(mag_hat.iter().zip(cos_hat.iter()).zip(signs.signs()))
            .map(|(z, ((m, c), s))| (z - Complex64::new(m * c, m * f64::from(*s) * (1.0 - c * c).sqrt())).norm_sqr())
            .sum();
        let loss = loss_smdp(&h, &mag_hat, &cos_hat, &signs)?;
        worst = worst.max((loss - direct).abs() / direct);
    }
    let took = start.elapsed();
    Ok(Verdict::new(
        worst <= SMDP_IDENTITY_RTOL && took < SMDP_IDENTITY_BUDGET,
        format!("max relative deviation {worst:.2e} over 1000 instances in {took:.2?}"),
    ))
}

fn bit_budgets() -> Result<Verdict> {
    let low = phase_bit_budget(1.0 / 16.0, 8, 0.125, 16, 64)?;
    let high = phase_bit_budget(1.0 / 8.0, 8, 0.25, 16, 64)?;
    Ok(Verdict::new(
        low.total_bits == 640
            && high.total_bits == 1280
            && low.bits_per_entry() == 0.625
            && high.bits_per_entry() == 1.25,
        format!(
            "{} bits ({} per entry) and {} bits ({} per entry)",
            low.total_bits,
            low.bits_per_entry(),
            high.total_bits,
            high.bits_per_entry()
        ),
    ))
}

fn codeword_counts() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, cos, _) = decompose(&random_csi(16, 64, &mut rng));
    let ssq = DualNetModel::new(FrameworkConfig::paper())?.phase_encode(&cos)?;
    let blq_model = DualNetModel::new(FrameworkConfig {
        quantizer_kind: QuantizerKind::Blq,
        ..FrameworkConfig::paper()
    })?;
    let blq = blq_model.phase_encode(&cos)?;
    let binary = blq.iter().all(|v| *v == 0.0 || *v == 1.0);
    Ok(Verdict::new(
        ssq.len() == 128 && blq.len() == 1024 && binary,
        format!(
            "{} codewords with SSQ, {} one-bit codewords with BLQ",
            ssq.len(),
            blq.len()
        ),
    ))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect()).unwrap()
}

type Probe = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

fn op_probes(rng: &mut ChaCha8Rng) -> Vec<(String, Tensor, Probe, f64)> {
    let mut out: Vec<(String, Tensor, Probe, f64)> = Vec::new();
    let x = random_tensor(&[2, 2, 4, 5], rng);
    for (name, p) in [("conv circular", Padding::Circular), ("conv zero", Padding::Zero)] {
        let k = random_tensor(&[3, 2, 7, 7], rng);
        let kk = k.clone();
        out.push((
            format!("{name} (input)"),
            x.clone(),
            Box::new(move |t, x| {
                let kv = t.constant(kk.clone())?;
                let y = t.conv2d(x, kv, p)?;
                t.sum_squares(y)
            }),
            GRAD_TOL,
        ));
        let xx = x.clone();
        out.push((
            format!("{name} (kernel)"),
            k,
            Box::new(move |t, k| {
                let xv = t.constant(xx.clone())?;
                let y = t.conv2d(xv, k, p)?;
                t.sum_squares(y)
            }),
            GRAD_TOL,
        ));
    }
    let other = random_tensor(&[2, 2, 4, 5], rng);
    for f in [
        Unary::Tanh,
        Unary::Sigmoid,
        Unary::LeakyLinear(0.3),
        Unary::Abs,
        Unary::Cos,
        Unary::Sin,
        Unary::SqrtOneMinusSquare(1e-12),
    ] {
        let o = other.clone();
        out.push((
            format!("{f:?}"),
            x.clone(),
            Box::new(move |t, x| {
                let y = t.unary(x, f)?;
                let ov = t.constant(o.clone())?;
                let m = t.mul(y, ov)?;
                t.sum_squares(m)
            }),
            GRAD_TOL,
        ));
    }
    let o = other.clone();
    let c: Vec<f64> = (0..x.len()).map(|i| 0.05 * i as f64 - 1.0).collect();
    out.push((
        "add/sub/mul/scale/mul_const/sum".into(),
        x.clone(),
        Box::new(move |t, x| {
            let ov = t.constant(o.clone())?;
            let a = t.add(x, ov)?;
            let b = t.mul(a, x)?;
            let s = t.sub(b, ov)?;
            let m = t.mul_const(s, &c)?;
            let sc = t.scale(m, 0.7)?;
            let sq = t.sum_squares(sc)?;
            let lin = t.sum(x)?;
            t.add(sq, lin)
        }),
        GRAD_TOL,
    ));
    let w = random_tensor(&[4, 20], rng);
    let bias = random_tensor(&[3], rng);
    out.push((
        "slice/concat/channel_bias/reshape/dense".into(),
        x.clone(),
        Box::new(move |t, x| {
            let a = t.slice_channels(x, 1, 1)?;
            let b = t.slice_channels(x, 0, 2)?;
            let c = t.concat_channels(a, b)?;
            let bv = t.constant(bias.clone())?;
            let c = t.channel_bias(c, bv)?;
            let flat = t.reshape(c, vec![6, 20])?;
            let wv = t.constant(w.clone())?;
            let z = t.constant(Tensor::zeros(vec![4]))?;
            let d = t.dense(flat, wv, z)?;
            t.sum_squares(d)
        }),
        GRAD_TOL,
    ));
    let levels = Tensor::new(vec![9], (0..9).map(|i| 0.05 + 0.1 * i as f64).collect()).unwrap();
    out.push((
        "ssq".into(),
        levels,
        Box::new(|t, x| {
            let q = t.ssq(x, 3, 10.0)?;
            t.sum_squares(q)
        }),
        GRAD_TOL_SSQ,
    ));
    out
}

fn tiny_network(method: PhaseMethod) -> Result<(DualNetModel, Vec<PreparedSample>)> {
    let ch = ChannelModelConfig {
        n_f: 16,
        n_b: 8,
        ..ChannelModelConfig::desk()
    };
    let data = generate_dataset(&ch, 2, 2)?;
    let mut model = DualNetModel::new(FrameworkConfig {
        q_f: 2,
        q_l: 2,
        n_b: 8,
        phase_method: method,
        ..FrameworkConfig::paper()
    })?;
    model.fit_amplitude_scale(data.samples())?;
    let prepared = data
        .samples()
        .iter()
        .map(|s| model.prepare(s))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, prepared))
}

fn gradients() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, x, f, tol) in op_probes(&mut rng) {
        let r = gradient_check(f, &x, 1e-6, tol)?;
        checked += 1;
        if !r.passed {
            failures.push(format!("{name}: {:.1e}", r.max_relative_error));
        }
    }
    let (model, prepared) = tiny_network(PhaseMethod::Smdp)?;
    let batch: Vec<&PreparedSample> = prepared.iter().collect();
    let r = gradient_check_params(
        model.params(),
        |t, s| model.magnitude_objective(s, t, &batch),
        1e-6,
        GRAD_TOL_SSQ,
        4,
    )?;
    checked += 1;
    if !r.passed {
        failures.push(format!("magnitude: {:.1e}", r.max_relative_error));
    }
    for method in [PhaseMethod::Naive, PhaseMethod::Mdpp, PhaseMethod::Smdp] {
        let (model, prepared) = tiny_network(method)?;
        let batch: Vec<&PreparedSample> = prepared.iter().collect();
        let r = gradient_check_params(
            model.params(),
            |t, s| model.end_to_end_objective(s, t, &batch),
            1e-6,
            GRAD_TOL_SSQ,
            4,
        )?;
        checked += 1;
        if !r.passed {
            failures.push(format!("{}: {:.1e}", method.label(), r.max_relative_error));
        }
    }
    let took = start.elapsed();
    Ok(Verdict::new(
        failures.is_empty() && took < GRAD_BUDGET,
        if failures.is_empty() {
            format!("{checked} checks (7x7 conv kernels, 4x8 networks with soft SSQ) in {took:.1?}")
        } else {
            format!("failed {} of {checked}: {}", failures.len(), failures.join(", "))
        },
    ))
}

fn conv(x: &Tensor, k: &Tensor, padding: Padding) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let kv = tape.constant(k.clone())?;
    let y = tape.conv2d(xv, kv, padding)?;
    Ok(tape.values(y).to_vec())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn transform_fidelity() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_f, n_b, q_f, q_l) = (64, 32, 6, 2);
    let mut worst_db = f64::NEG_INFINITY;
    for _ in 0..20 {
        let paths: Vec<(usize, f64, Complex64)> = (0..4)
            .map(|_| {
                let bin = if rng.gen_bool(0.7) {
                    rng.gen_range(0..q_f)
                } else {
                    n_f - 1 - rng.gen_range(0..q_l)
                };
                (
                    bin,
                    rng.gen_range(-1.0..1.0),
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let h = Array2::from_shape_fn((n_f, n_b), |(f, b)| {
            paths
                .iter()
                .map(|&(d, s, g)| {
                    g * Complex64::from_polar(1.0, -2.0 * PI * (d * f) as f64 / n_f as f64)
                        * Complex64::from_polar(1.0, -PI * b as f64 * s)
                })
                .sum()
        });
        let h = SpatialFrequencyCsi::new(h)?;
        let back = from_angle_delay(&to_angle_delay(&h, q_f, q_l)?, n_f)?;
        worst_db = worst_db.max(nmse_db(&[h], &[back])?);
    }

    let (h, w) = (6, 8);
    let x = random_tensor(&[2, h, w], &mut rng);
    let k = random_tensor(&[3, 2, 7, 7], &mut rng);
    let base = conv(&x, &k, Padding::Circular)?;
    let shift = |t: &[f64], c: usize, s1: usize, s2: usize| {
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    out[(ch * h + (r + s1) % h) * w + (col + s2) % w] = t[(ch * h + r) * w + col];
                }
            }
        }
        out
    };
    let mut shift_err = 0.0f64;
    for (s1, s2) in [(1, 0), (0, 3), (5, 7), (2, 2)] {
        let xs = Tensor::new(vec![2, h, w], shift(x.values(), 2, s1, s2))?;
        shift_err = shift_err.max(max_abs_diff(
            &conv(&xs, &k, Padding::Circular)?,
            &shift(&base, 3, s1, s2),
        ));
    }

    // circular result equals the centre tile of a zero-padded conv over a 3x3 tiling
    let (th, tw) = (3 * h, 3 * w);
    let tiled = Tensor::new(
        vec![2, th, tw],
        (0..2 * th * tw)
            .map(|i| {
                let (c, r, col) = (i / (th * tw), (i / tw) % th, i % tw);
                x.values()[(c * h + r % h) * w + col % w]
            })
            .collect(),
    )?;
    let lin = conv(&tiled, &k, Padding::Zero)?;
    let mut centre = Vec::with_capacity(base.len());
    for o in 0..3 {
        for r in h..2 * h {
            let row = (o * th + r) * tw;
            centre.extend_from_slice(&lin[row + w..row + 2 * w]);
        }
    }
    let tile_err = max_abs_diff(&base, &centre);
    let took = start.elapsed();
    Ok(Verdict::new(
        worst_db < ROUND_TRIP_DB && shift_err <= CONV_TOL && tile_err <= CONV_TOL && took < TRANSFORM_BUDGET,
        format!(
            "worst round trip {worst_db:.1} dB, shift error {shift_err:.1e}, tiling error {tile_err:.1e} in {took:.2?}"
        ),
    ))
}

struct DeskRun {
    smdp: f64,
    mdpp: f64,
    naive: f64,
    cnn_ssq: f64,
    ccnn_blq: f64,
    genie_quarter: f64,
    genie_full: f64,
    elapsed: Duration,
}

fn desk_run() -> Result<DeskRun> {
    let start = Instant::now();
    let spec = ExperimentSpec::preset(Preset::Desk);
    let data = load_data(&spec)?;
    let (magnitude, _) = train_magnitude(&spec, &data)?;
    let base = spec.framework.clone().with_phase_ratio(1.0 / 8.0);
    let with = |method: PhaseMethod, core: CoreKind, quantizer: QuantizerKind| FrameworkConfig {
        phase_method: method,
        core_kind: core,
        quantizer_kind: quantizer,
        ..base.clone()
    };
    let cells = vec![
        with(PhaseMethod::Smdp, CoreKind::Ccnn, QuantizerKind::Ssq),
        with(PhaseMethod::Mdpp, CoreKind::Ccnn, QuantizerKind::Ssq),
        with(PhaseMethod::Naive, CoreKind::Ccnn, QuantizerKind::Ssq),
        with(PhaseMethod::Smdp, CoreKind::Cnn, QuantizerKind::Ssq),
        with(PhaseMethod::Smdp, CoreKind::Ccnn, QuantizerKind::Blq),
    ];
    let out = run_cells(&spec, &data, &magnitude, cells)?;
    let nmse: Vec<f64> = out.iter().map(|c| c.row.nmse_db).collect();
    let genie = |r_s: f64| {
        let opts = EvalOptions {
            r_s: Some(r_s),
            sign_placement: Some(SignPlacement::Genie),
            ..EvalOptions::default()
        };
        out[0].model.evaluate(data.test(), &opts).map(|r| r.nmse_db)
    };
    Ok(DeskRun {
        smdp: nmse[0],
        mdpp: nmse[1],
        naive: nmse[2],
        cnn_ssq: nmse[3],
        ccnn_blq: nmse[4],
        genie_quarter: genie(0.25)?,
        genie_full: genie(1.0)?,
        elapsed: start.elapsed(),
    })
}

fn loss_ordering(run: &DeskRun) -> Verdict {
    let pass = run.smdp <= run.mdpp && run.smdp <= run.naive - NAIVE_MARGIN_DB;
    let minutes = run.elapsed.as_secs_f64() / 60.0;
    let target = if run.elapsed < DESK_RUNTIME_TARGET {
        "met"
    } else {
        "missed"
    };
    Verdict::new(
        pass,
        format!(
            "smdp {:.2} dB, mdpp {:.2} dB, naive {:.2} dB; desk run {minutes:.1} min on {} thread(s), 30 min target {target}",
            run.smdp,
            run.mdpp,
            run.naive,
            rayon_threads()
        ),
    )
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

fn core_ordering(run: &DeskRun) -> Result<Verdict> {
    let count = |core| -> Result<usize> {
        Ok(Architecture::new(&FrameworkConfig {
            core_kind: core,
            ..FrameworkConfig::paper()
        })?
        .phase_branch_parameters())
    };
    let (dense, circular) = (count(CoreKind::Dnn)?, count(CoreKind::Ccnn)?);
    let ratio = dense as f64 / circular as f64;
    Ok(Verdict::new(
        run.smdp <= run.cnn_ssq && run.smdp <= run.ccnn_blq && ratio >= PARAM_RATIO,
        format!(
            "ccnn+ssq {:.2} dB, cnn+ssq {:.2} dB, ccnn+blq {:.2} dB; phase-branch parameters dnn {dense} vs ccnn {circular} ({ratio:.1}x)",
            run.smdp, run.cnn_ssq, run.ccnn_blq
        ),
    ))
}

fn sign_ratio(run: &DeskRun) -> Verdict {
    let loss = run.genie_quarter - run.genie_full;
    Verdict::new(
        loss <= SIGN_RATIO_SLACK_DB,
        format!(
            "genie signs: r_s 0.25 {:.2} dB, r_s 1 {:.2} dB (degradation {loss:.2} dB)",
            run.genie_quarter, run.genie_full
        ),
    )
}

fn determinism() -> Result<Verdict> {
    let ch = ChannelModelConfig {
        n_f: 16,
        n_b: 8,
        ..ChannelModelConfig::desk()
    };
    let datasets_equal =
        encode_dataset(&generate_dataset(&ch, 30, 24)?) == encode_dataset(&generate_dataset(&ch, 30, 24)?);
    let data = generate_dataset(&ch, 30, 24)?;
    let framework = FrameworkConfig {
        q_f: 2,
        q_l: 2,
        n_b: 8,
        kernel: 3,
        ..FrameworkConfig::paper()
    };
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        ..TrainConfig::desk()
    };

    let trained = || -> Result<(Vec<u8>, Vec<f64>)> {
        let mut model = DualNetModel::new(framework.clone())?;
        let mut state = TrainState::new(Stage::Magnitude, cfg.clone());
        train_stage(&mut model, &data, &mut state)?;
        Ok((checkpoint_to_archive(&model, Some(&state))?.encode(), state.loss_trace))
    };
    let (ckpt_a, trace_a) = trained()?;
    let (ckpt_b, trace_b) = trained()?;

    let mut resumed = DualNetModel::new(framework.clone())?;
    let mut state = TrainState::new(Stage::Magnitude, cfg.clone());
    Trainer::new(&mut resumed, &data, Stage::Magnitude)?.run(&mut state, 1)?;
    let partial = checkpoint_to_archive(&resumed, Some(&state))?.encode();
    let (mut resumed, state) = checkpoint_from_archive(&TensorArchive::decode(&partial)?)?;
    let mut state = state.expect("saved with state");
    train_stage(&mut resumed, &data, &mut state)?;
    let resumed_bytes = checkpoint_to_archive(&resumed, Some(&state))?.encode();

    let spec = ExperimentSpec {
        framework: framework.clone(),
        channel: ch.clone(),
        train: TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
        ..ExperimentSpec::preset(Preset::Desk)
    };
    let csv = || -> Result<String> { rows_to_csv(&compare_losses(&spec, &data)?.rows()) };
    let csv_equal = csv()? == csv()?;

    let checks = [
        ("datasets", datasets_equal),
        ("checkpoints", ckpt_a == ckpt_b),
        ("loss traces", trace_a == trace_b),
        ("csv", csv_equal),
        ("resume", resumed_bytes == ckpt_a),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Ok(Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            "datasets, checkpoints, loss traces and CSVs repeat bit for bit; save/load/resume matches the uninterrupted run".into()
        } else {
            format!("mismatch in {}", failed.join(", "))
        },
    ))
}

fn report(id: u8, verdict: Result<Verdict>) -> Option<bool> {
    let (tag, detail, pass) = match verdict {
        Ok(Verdict {
            pass: Some(true),
            detail,
        }) => ("PASS", detail, Some(true)),
        Ok(Verdict {
            pass: Some(false),
            detail,
        }) => ("FAIL", detail, Some(false)),
        Ok(Verdict { pass: None, detail }) => ("SKIP", detail, None),
        Err(e) => ("FAIL", format!("error: {e}"), Some(false)),
    };
    println!("criterion {id}: {tag}  {detail}");
    pass
}

fn main() -> ExitCode {
    // libtest flags such as --list or a name filter
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if args.iter().any(|a| !a.starts_with('-') && a != "acceptance") {
        return ExitCode::SUCCESS;
    }

    let mut results = vec![
        report(1, smdp_identity()),
        report(2, bit_budgets()),
        report(3, codeword_counts()),
        report(4, gradients()),
        report(5, transform_fidelity()),
    ];
    if std::env::var_os("DUALNET_SKIP_DESK").is_some() {
        for id in 6..=8 {
            results.push(report(
                id,
                Ok(Verdict::skipped("desk-scale run disabled by DUALNET_SKIP_DESK")),
            ));
        }
    } else {
        match desk_run() {
            Ok(run) => {
                results.push(report(6, Ok(loss_ordering(&run))));
                results.push(report(7, core_ordering(&run)));
                results.push(report(8, Ok(sign_ratio(&run))));
            }
            Err(e) => {
                let detail = format!("desk run failed: {e}");
                for id in 6..=8 {
                    results.push(report(id, Ok(Verdict::new(false, detail.clone()))));
                }
            }
        }
    }
    results.push(report(9, determinism()));

    let failed = results.iter().filter(|r| **r == Some(false)).count();
    println!(
        "acceptance: {} passed, {failed} failed, {} skipped",
        results.iter().filter(|r| **r == Some(true)).count(),
        results.iter().filter(|r| r.is_none()).count()
    );
    if failed == 0 || std::env::var_os("DUALNET_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
