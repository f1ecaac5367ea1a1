//! Two-stage training: the magnitude branch first, then the phase branch and
//! combiner with the magnitude branch frozen.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, TrainConfig};
use super::optimizer::AdamState;
use crate::csi::CsiDataset;
use crate::dualnet::{DualNetModel, EvalOptions, PreparedSample, Stage2Inputs, SubNetwork};
use crate::error::{Error, Result};
use crate::nn::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    Magnitude,
    #[serde(rename = "2")]
    Phase,
}

impl Stage {
    /// Sub-networks a stage updates.
    pub fn trainable(self, model: &DualNetModel) -> Vec<SubNetwork> {
        match self {
            Stage::Magnitude => vec![SubNetwork::MagEncoder, SubNetwork::MagDecoder],
            Stage::Phase if model.config().phase_method.uses_phase_network() => {
                vec![SubNetwork::PhaseEncoder, SubNetwork::PhaseDecoder, SubNetwork::Combiner]
            }
            Stage::Phase => vec![SubNetwork::Combiner],
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Stage::Magnitude => 1,
            Stage::Phase => 2,
        }
    }
}

/// Progress of a stage; enough to resume it bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub stage: Stage,
    pub config: TrainConfig,
    pub epochs_done: usize,
    pub optimizer: AdamState,
    pub loss_trace: Vec<f64>,
}

impl TrainState {
    pub fn new(stage: Stage, config: TrainConfig) -> Self {
        Self {
            stage,
            config,
            epochs_done: 0,
            optimizer: AdamState::new(),
            loss_trace: Vec::new(),
        }
    }

    pub fn finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: u8,
    pub loss_kind: LossKind,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Test NMSE in dB: magnitude-only after stage 1, full CSI after stage 2.
    pub final_test_nmse_db: f64,
    pub wall_clock_s: f64,
    pub parameter_counts: BTreeMap<String, usize>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn parameter_counts(model: &DualNetModel) -> BTreeMap<String, usize> {
    SubNetwork::ALL
        .iter()
        .map(|s| (s.prefix().to_string(), model.num_parameters(*s)))
        .filter(|(_, n)| *n > 0)
        .collect()
}

fn check_dataset(model: &DualNetModel, data: &CsiDataset) -> Result<()> {
    let (_, n_b) = data
        .dims()
        .ok_or_else(|| Error::invalid("training needs a non-empty dataset"))?;
    if n_b != model.config().n_b {
        return Err(Error::invalid(format!(
            "dataset has {n_b} antennas, model expects {}",
            model.config().n_b
        )));
    }
    if data.train().is_empty() || data.test().is_empty() {
        return Err(Error::invalid("dataset needs both training and test samples"));
    }
    Ok(())
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Runs the remaining epochs of `state` (at most `max_epochs` of them).
pub struct Trainer<'a> {
    model: &'a mut DualNetModel,
    prepared: Vec<PreparedSample>,
    stage2: Vec<Stage2Inputs>,
    trainable: Vec<String>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut DualNetModel, data: &CsiDataset, stage: Stage) -> Result<Self> {
        check_dataset(model, data)?;
        if stage == Stage::Magnitude && !model.magnitude_trained() {
            model.fit_amplitude_scale(data.train())?;
        }
        if stage == Stage::Phase && !model.magnitude_trained() {
            return Err(Error::InvalidState(
                "phase training needs a trained magnitude branch".into(),
            ));
        }
        let prepared = data
            .train()
            .iter()
            .map(|s| model.prepare(s))
            .collect::<Result<Vec<_>>>()?;
        let stage2 = if stage == Stage::Phase {
            let mut out = Vec::with_capacity(prepared.len());
            for chunk in prepared.chunks(100) {
                let refs: Vec<&PreparedSample> = chunk.iter().collect();
                out.extend(model.stage2_inputs(&refs)?);
            }
            out
        } else {
            Vec::new()
        };
        let subs = stage.trainable(model);
        let trainable = model
            .params()
            .names()
            .filter(|n| SubNetwork::of_param(n).is_some_and(|s| subs.contains(&s)))
            .map(str::to_string)
            .collect();
        Ok(Self {
            model,
            prepared,
            stage2,
            trainable,
        })
    }

    /// Trains up to `max_epochs` more epochs; returns the number run.
    pub fn run(&mut self, state: &mut TrainState, max_epochs: usize) -> Result<usize> {
        state.config.validate()?;
        let cfg = state.config.clone();
        let n = self.prepared.len();
        let mut ran = 0;
        while !state.finished() && ran < max_epochs {
            let order = epoch_order(n, cfg.seed, state.epochs_done);
            let (mut total, mut batches) = (0.0, 0usize);
            for idx in order.chunks(cfg.batch_size) {
                let batch: Vec<&PreparedSample> = idx.iter().map(|&i| &self.prepared[i]).collect();
                let mut tape = Tape::new();
                let params = self.model.params();
                let loss = match state.stage {
                    Stage::Magnitude => self.model.magnitude_objective(params, &mut tape, &batch)?,
                    Stage::Phase => {
                        let inputs: Vec<&Stage2Inputs> = idx.iter().map(|&i| &self.stage2[i]).collect();
                        self.model.phase_objective(params, &mut tape, &batch, &inputs)?
                    }
                };
                total += tape.value(loss).item()?;
                batches += 1;
                tape.backward(loss)?;
                let grads: Vec<(String, Vec<f64>)> = tape
                    .param_grads()
                    .filter(|(name, _)| self.trainable.iter().any(|t| t == name))
                    .map(|(name, g)| (name.to_string(), g.to_vec()))
                    .collect();
                state.optimizer.step(self.model.params_mut(), &grads, &cfg)?;
            }
            state.loss_trace.push(total / batches as f64);
            state.epochs_done += 1;
            ran += 1;
        }
        if state.stage == Stage::Magnitude && state.finished() {
            self.model.mark_magnitude_trained();
        }
        Ok(ran)
    }
}

fn report(model: &DualNetModel, data: &CsiDataset, state: &TrainState, started: Instant) -> Result<TrainReport> {
    let eval = model.evaluate(data.test(), &EvalOptions::default())?;
    let (loss_kind, nmse) = match state.stage {
        Stage::Magnitude => (LossKind::Magnitude, eval.magnitude_nmse_db),
        Stage::Phase => (LossKind::for_method(model.config().phase_method), eval.nmse_db),
    };
    Ok(TrainReport {
        stage: state.stage.number(),
        loss_kind,
        loss_trace: state.loss_trace.clone(),
        final_test_nmse_db: nmse,
        wall_clock_s: started.elapsed().as_secs_f64(),
        parameter_counts: parameter_counts(model),
    })
}

/// Runs (or finishes) a stage and evaluates on the test split.
pub fn train_stage(model: &mut DualNetModel, data: &CsiDataset, state: &mut TrainState) -> Result<TrainReport> {
    let started = Instant::now();
    let mut trainer = Trainer::new(model, data, state.stage)?;
    trainer.run(state, usize::MAX)?;
    report(model, data, state, started)
}

/// Magnitude encoder and decoder on the magnitude MSE.
pub fn train_stage1(model: &mut DualNetModel, data: &CsiDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let mut state = TrainState::new(Stage::Magnitude, cfg.clone());
    train_stage(model, data, &mut state)
}

/// Phase branch and combiner with the magnitude branch frozen.
pub fn train_stage2(model: &mut DualNetModel, data: &CsiDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let mut state = TrainState::new(Stage::Phase, cfg.clone());
    train_stage(model, data, &mut state)
}
