use std::f64::consts::PI;

use dualnet_core::csi::{generate_channel_pair, AngleDelayCsi, ChannelModelConfig, CsiSamplePair};
use dualnet_core::decomposition::{
    decompose, phase_bit_budget, select_signs, CosineMatrix, MagnitudeMatrix, SignMatrix,
};
use dualnet_core::dualnet::{
    loss_magnitude, loss_mdpp, loss_naive, loss_smdp, Architecture, DualNetModel, FeedbackPayload, FrameworkConfig,
    PhaseMethod, PreparedSample, QuantizerKind, SubNetwork,
};
use dualnet_core::nn::{gradient_check_params, CoreKind, ParameterStore};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_csi(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> AngleDelayCsi {
    let m = Array2::from_shape_fn((rows, cols), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    AngleDelayCsi::new(m, rows, 0).unwrap()
}

/// 4 x 8 angle-delay grid with 3 x 3 kernels.
fn tiny(method: PhaseMethod) -> FrameworkConfig {
    FrameworkConfig {
        q_f: 2,
        q_l: 2,
        n_b: 8,
        kernel: 3,
        phase_method: method,
        ..FrameworkConfig::paper()
    }
}

fn tiny_pairs(n: u64) -> Vec<CsiSamplePair> {
    let ch = ChannelModelConfig {
        n_f: 16,
        n_b: 8,
        ..ChannelModelConfig::desk()
    };
    (0..n)
        .map(|i| generate_channel_pair(&ch, &mut ch.sample_rng(i)).unwrap())
        .collect()
}

fn tiny_model(method: PhaseMethod, pairs: &[CsiSamplePair]) -> DualNetModel {
    let mut model = DualNetModel::new(tiny(method)).unwrap();
    model.fit_amplitude_scale(pairs).unwrap();
    model
}

fn zero_combiner(model: &mut DualNetModel) {
    for (name, t) in model.params_mut().iter_mut() {
        if SubNetwork::of_param(name) == Some(SubNetwork::Combiner) {
            t.values_mut().fill(0.0);
        }
    }
}

fn on_grid(values: &[f64], bits: u32) -> bool {
    let l = ((1u32 << bits) - 1) as f64;
    values
        .iter()
        .all(|v| (v * l - (v * l).round()).abs() < 1e-9 && (0.0..=1.0).contains(v))
}

#[test]
fn codeword_lengths_at_paper_dims() {
    let model = DualNetModel::new(FrameworkConfig::paper()).unwrap();
    let cfg = model.config();
    assert_eq!(cfg.mag_codeword_len(), 256);
    assert_eq!(cfg.phase_codeword_len().unwrap(), 128);
    assert_eq!(
        cfg.clone().with_phase_ratio(1.0 / 16.0).phase_codeword_len().unwrap(),
        64
    );
    let blq = FrameworkConfig {
        quantizer_kind: QuantizerKind::Blq,
        ..FrameworkConfig::paper()
    };
    assert_eq!(blq.phase_codeword_len().unwrap(), 1024);
    assert_eq!(blq.phase_value_bits(), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = random_csi(16, 64, &mut rng);
    let (mag, cos, _) = decompose(&h);
    let m = model.mag_encode(&mag).unwrap();
    let c = model.phase_encode(&cos).unwrap();
    assert_eq!((m.len(), c.len()), (256, 128));
    assert!(on_grid(&m, 8) && on_grid(&c, 8));
    assert_eq!(model.mag_encode(&mag).unwrap(), m);
}

#[test]
fn shape_and_length_mismatches_are_rejected() {
    let pairs = tiny_pairs(2);
    let model = tiny_model(PhaseMethod::Smdp, &pairs);
    let wrong = MagnitudeMatrix::new(Array2::zeros((4, 6))).unwrap();
    assert!(model.mag_encode(&wrong).is_err());
    let ul = MagnitudeMatrix::new(Array2::zeros((4, 8))).unwrap();
    assert!(model.mag_decode(&[0.5; 3], &ul).is_err());
    let signs = SignMatrix::full(Array2::from_elem((4, 8), 1)).unwrap();
    assert!(model.phase_decode(&[0.5; 3], &signs).is_err());
}

#[test]
fn decoders_respect_output_ranges_and_side_inputs() {
    let pairs = tiny_pairs(4);
    let model = tiny_model(PhaseMethod::Smdp, &pairs);
    let p = model.prepare(&pairs[0]).unwrap();
    let (mag, cos, sign) = decompose(&p.h);
    let ul = MagnitudeMatrix::new(
        Array2::from_shape_vec((4, 8), p.ul_mag.iter().map(|v| v * model.amplitude_scale()).collect()).unwrap(),
    )
    .unwrap();

    let code = model.mag_encode(&mag).unwrap();
    let m = model.mag_decode(&code, &ul).unwrap();
    assert_eq!(m.dim(), (4, 8));
    assert!(m.values().iter().all(|v| *v >= 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let bumped = MagnitudeMatrix::new(ul.values().mapv(|v| v + rng.gen_range(0.0..0.5))).unwrap();
    let m2 = model.mag_decode(&code, &bumped).unwrap();
    let delta = (m.values() - m2.values())
        .mapv(f64::abs)
        .fold(0.0, |a: f64, &b| a.max(b));
    assert!(delta > 0.0);

    let selected = select_signs(&sign, &mag, 0.25).unwrap();
    let pcode = model.phase_encode(&cos).unwrap();
    let c = model.phase_decode(&pcode, &selected).unwrap();
    assert_eq!(c.dim(), (4, 8));
    assert!(c.values().iter().all(|v| v.abs() < 1.0));
    let idx = selected.transmitted().iter().position(|t| *t).unwrap();
    let mut flipped = selected.signs().clone();
    let cell = flipped.iter_mut().nth(idx).unwrap();
    *cell = -*cell;
    let c2 = model
        .phase_decode(
            &pcode,
            &SignMatrix::new(flipped, selected.transmitted().clone()).unwrap(),
        )
        .unwrap();
    assert!(c.values() != c2.values());
}

#[test]
fn zero_refinement_combiner_is_the_pythagorean_estimate() {
    let pairs = tiny_pairs(3);
    let mut model = tiny_model(PhaseMethod::Smdp, &pairs);
    zero_combiner(&mut model);
    let p = model.prepare(&pairs[1]).unwrap();
    let (mag, cos, sign) = decompose(&p.h);
    let full = SignMatrix::full(sign.signs().clone()).unwrap();
    let out = model.combine(&mag, &cos, &full).unwrap();
    for (a, b) in out.entries().iter().zip(p.h.entries()) {
        assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cos_hat = CosineMatrix::new(Array2::from_shape_fn((4, 8), |_| rng.gen_range(-0.99..0.99))).unwrap();
    let mag_hat = MagnitudeMatrix::new(Array2::from_shape_fn((4, 8), |_| rng.gen_range(0.0..2.0))).unwrap();
    let out = model.combine(&mag_hat, &cos_hat, &full).unwrap();
    for (((z, m), c), s) in out
        .entries()
        .iter()
        .zip(mag_hat.values())
        .zip(cos_hat.values())
        .zip(full.signs())
    {
        let want = Complex64::new(m * c, m * f64::from(*s) * (1.0 - c * c).sqrt());
        assert!((z - want).norm() <= 1e-12 * (1.0 + want.norm()));
    }
    let zero = MagnitudeMatrix::new(Array2::zeros((4, 8))).unwrap();
    assert!(model
        .combine(&zero, &cos_hat, &full)
        .unwrap()
        .entries()
        .iter()
        .all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn payload_carries_budget_and_round_trips() {
    let pairs = tiny_pairs(3);
    let model = tiny_model(PhaseMethod::Smdp, &pairs);
    let p: PreparedSample = model.prepare(&pairs[2]).unwrap();
    let ul = MagnitudeMatrix::new(
        Array2::from_shape_vec((4, 8), p.ul_mag.iter().map(|v| v * model.amplitude_scale()).collect()).unwrap(),
    )
    .unwrap();
    let (est, payload) = model.forward(&p.h, &ul).unwrap();
    assert_eq!(est.entries().dim(), (4, 8));
    let cfg = model.config();
    let budget = phase_bit_budget(cfg.cr_pha, cfg.k_pha, cfg.r_s, 4, 8).unwrap();
    assert_eq!(payload.phase_bit_len(), budget.total_bits);
    assert_eq!(
        payload.bit_len(),
        budget.total_bits + cfg.mag_codeword_len() as u64 * u64::from(cfg.k_mag)
    );
    assert_eq!(payload.to_bits().unwrap().len() as u64, payload.bit_len());
    let bytes = payload.to_bytes().unwrap();
    assert_eq!(FeedbackPayload::from_bytes(&bytes, payload.layout()).unwrap(), payload);
    let (est2, payload2) = model.forward(&p.h, &ul).unwrap();
    assert_eq!((est2, payload2), (est, payload));
}

#[test]
fn loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = random_csi(4, 8, &mut rng);
    let (mag, cos, sign) = decompose(&h);
    let m = mag.values().clone();
    assert_eq!(loss_magnitude(&m, &m).unwrap(), 0.0);
    assert!((loss_magnitude(&(&m + 1.0), &m).unwrap() - 32.0).abs() < 1e-12);
    let other = Array2::from_shape_fn((4, 8), |_| rng.gen_range(0.0..1.0));
    let hand: f64 = m.iter().zip(other.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!((loss_magnitude(&other, &m).unwrap() - hand).abs() < 1e-12);

    let full = SignMatrix::full(sign.signs().clone()).unwrap();
    assert!(loss_smdp(&h, &m, cos.values(), &full).unwrap() < 1e-24);
    let zero_h = AngleDelayCsi::new(Array2::zeros((4, 8)), 4, 0).unwrap();
    assert_eq!(loss_smdp(&zero_h, &Array2::zeros((4, 8)), &other, &full).unwrap(), 0.0);

    let phase = h.entries().mapv(|z| z.arg());
    assert!(loss_naive(&h, &m, &phase).unwrap() < 1e-24);
    let flipped = phase.mapv(|p| p + PI);
    let four_sum: f64 = 4.0 * m.iter().map(|v| v * v).sum::<f64>();
    assert!((loss_naive(&h, &m, &flipped).unwrap() - four_sum).abs() < 1e-9 * four_sum);
    let guess = Array2::from_shape_fn((4, 8), |_| rng.gen_range(-PI..PI));
    let direct: f64 = h
        .entries()
        .iter()
        .zip(m.iter().zip(guess.iter()))
        .map(|(z, (a, t))| (z - Complex64::from_polar(*a, *t)).norm_sqr())
        .sum();
    assert!((loss_naive(&h, &m, &guess).unwrap() - direct).abs() < 1e-10 * direct);

    assert_eq!(loss_mdpp(&phase, &phase, &m).unwrap(), 0.0);
    let ones = Array2::from_elem((4, 8), 1.0);
    let shifted = phase.mapv(|p| p + 0.3);
    assert!((loss_mdpp(&shifted, &phase, &ones).unwrap() - 32.0 * 0.09).abs() < 1e-12);
    let elementwise: f64 = guess
        .iter()
        .zip(phase.iter())
        .zip(m.iter())
        .map(|((g, p), a)| ((p - g) * a).powi(2))
        .sum();
    assert!((loss_mdpp(&guess, &phase, &m).unwrap() - elementwise).abs() < 1e-10 * elementwise);
    assert!(loss_mdpp(&guess, &phase, &Array2::zeros((3, 8))).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn smdp_equals_complex_error_with_correct_signs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_csi(4, 4, &mut rng);
        let mag_hat = Array2::from_shape_fn((4, 4), |_| rng.gen_range(0.0..2.0));
        let cos_hat = Array2::from_shape_fn((4, 4), |_| rng.gen_range(-1.0..1.0));
        let (_, _, sign) = decompose(&h);
        let signs = SignMatrix::full(sign.signs().clone()).unwrap();
        let direct: f64 = h
            .entries()
            .iter()
            .zip(mag_hat.iter().zip(cos_hat.iter()).zip(signs.signs()))
            .map(|(z, ((m, c), s))| {
                let est = Complex64::new(m * c, m * f64::from(*s) * (1.0 - c * c).sqrt());
                (z - est).norm_sqr()
            })
            .sum();
        let loss = loss_smdp(&h, &mag_hat, &cos_hat, &signs).unwrap();
        prop_assert!((loss - direct).abs() <= 1e-10 * direct.max(1e-300));
    }

    #[test]
    fn losses_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_csi(3, 5, &mut rng);
        let a = Array2::from_shape_fn((3, 5), |_| rng.gen_range(0.0..2.0));
        let b = Array2::from_shape_fn((3, 5), |_| rng.gen_range(-1.0..1.0));
        let (mag, _, sign) = decompose(&h);
        let signs = select_signs(&sign, &mag, 0.5).unwrap();
        prop_assert!(loss_magnitude(&a, mag.values()).unwrap() >= 0.0);
        prop_assert!(loss_smdp(&h, &a, &b, &signs).unwrap() >= 0.0);
        prop_assert!(loss_naive(&h, &a, &b).unwrap() >= 0.0);
        prop_assert!(loss_mdpp(&b, &a, mag.values()).unwrap() >= 0.0);
    }
}

fn check_network(method: PhaseMethod) {
    let pairs = tiny_pairs(2);
    let model = tiny_model(method, &pairs);
    let prepared: Vec<PreparedSample> = pairs.iter().map(|p| model.prepare(p).unwrap()).collect();
    let batch: Vec<&PreparedSample> = prepared.iter().collect();
    let r = gradient_check_params(
        model.params(),
        |t, s| model.end_to_end_objective(s, t, &batch),
        1e-6,
        1e-3,
        4,
    )
    .unwrap();
    assert!(r.passed, "{method:?} {r:?}");
}

#[test]
fn magnitude_objective_gradients() {
    let pairs = tiny_pairs(2);
    let model = tiny_model(PhaseMethod::Smdp, &pairs);
    let prepared: Vec<PreparedSample> = pairs.iter().map(|p| model.prepare(p).unwrap()).collect();
    let batch: Vec<&PreparedSample> = prepared.iter().collect();
    let r = gradient_check_params(
        model.params(),
        |t, s| model.magnitude_objective(s, t, &batch),
        1e-6,
        1e-3,
        6,
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn smdp_network_gradients() {
    check_network(PhaseMethod::Smdp);
}

#[test]
fn naive_network_gradients() {
    check_network(PhaseMethod::Naive);
}

#[test]
fn mdpp_network_gradients() {
    check_network(PhaseMethod::Mdpp);
}

#[test]
fn stage2_combiner_gradients_with_detached_input() {
    let pairs = tiny_pairs(2);
    let model = tiny_model(PhaseMethod::Smdp, &pairs);
    let prepared: Vec<PreparedSample> = pairs.iter().map(|p| model.prepare(p).unwrap()).collect();
    let batch: Vec<&PreparedSample> = prepared.iter().collect();
    let inputs = model.stage2_inputs(&batch).unwrap();
    let inputs: Vec<_> = inputs.iter().collect();
    let mut comb = ParameterStore::new();
    for (name, t) in model.params().iter() {
        if SubNetwork::of_param(name) == Some(SubNetwork::Combiner) {
            comb.insert(name, t.clone()).unwrap();
        }
    }
    let r = gradient_check_params(
        &comb,
        |t, s| {
            let mut full = model.params().clone();
            for (name, v) in s.iter() {
                full.get_mut(name).unwrap().values_mut().copy_from_slice(v.values());
            }
            model.phase_objective(&full, t, &batch, &inputs)
        },
        1e-6,
        1e-4,
        8,
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn dense_core_phase_branch_is_much_larger() {
    let count = |core_kind| {
        Architecture::new(&FrameworkConfig {
            core_kind,
            ..FrameworkConfig::paper()
        })
        .unwrap()
        .phase_branch_parameters()
    };
    let (dense, circular) = (count(CoreKind::Dnn), count(CoreKind::Ccnn));
    assert!(dense >= 5 * circular, "{dense} vs {circular}");
}
