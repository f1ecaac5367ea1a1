use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::{load_data, train_magnitude};
use super::spec::{ExperimentSpec, GenDataConfig};
use crate::csi::{dataset_load, dataset_save, generate_dataset, magnitude_reciprocity, ReciprocitySummary};
use crate::dualnet::{EvalOptions, EvalReport};
use crate::error::{Error, Result};
use crate::training::{checkpoint_load, checkpoint_save, train_stage2, TrainReport};

pub const STAGE1_CHECKPOINT: &str = "stage1.ckpt";
pub const STAGE2_CHECKPOINT: &str = "stage2.ckpt";

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataSummary {
    pub path: PathBuf,
    pub samples: usize,
    pub train: usize,
    pub test: usize,
    /// Downlink/uplink magnitude correlation over the training split.
    pub reciprocity: ReciprocitySummary,
}

/// Generates and writes a `CSID` dataset.
pub fn gen_data(cfg: &GenDataConfig, path: &Path) -> Result<GenDataSummary> {
    let data = generate_dataset(&cfg.channel(), cfg.n_samples, cfg.n_train)?;
    let reciprocity = magnitude_reciprocity(if data.train().is_empty() {
        data.samples()
    } else {
        data.train()
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    dataset_save(&data, path)?;
    Ok(GenDataSummary {
        path: path.to_path_buf(),
        samples: data.len(),
        train: data.train().len(),
        test: data.test().len(),
        reciprocity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub stage1: TrainReport,
    pub stage2: TrainReport,
}

/// Both training stages; each writes a checkpoint and a JSON report into
/// `out_dir`.
pub fn train(spec: &ExperimentSpec, out_dir: &Path) -> Result<TrainOutcome> {
    let data = load_data(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (mut model, stage1) = train_magnitude(spec, &data)?;
    checkpoint_save(&out_dir.join(STAGE1_CHECKPOINT), &model, None)?;
    write_text(&out_dir.join("stage1_report.json"), &stage1.to_json())?;
    let stage2 = train_stage2(&mut model, &data, &spec.train)?;
    checkpoint_save(&out_dir.join(STAGE2_CHECKPOINT), &model, None)?;
    write_text(&out_dir.join("stage2_report.json"), &stage2.to_json())?;
    Ok(TrainOutcome { stage1, stage2 })
}

/// Deployment-mode NMSE of a checkpoint on a dataset's test split.
pub fn eval(checkpoint: &Path, dataset: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let (model, _) = checkpoint_load(checkpoint)?;
    let data = dataset_load(dataset)?;
    let (n_f, n_b) = data.dims().ok_or_else(|| Error::invalid("dataset is empty"))?;
    let cfg = model.config();
    if n_b != cfg.n_b || cfg.q_t() > n_f {
        return Err(Error::invalid(format!(
            "dataset is {n_f}x{n_b}, model needs n_b = {} and n_f >= {}",
            cfg.n_b,
            cfg.q_t()
        )));
    }
    if data.test().is_empty() {
        return Err(Error::invalid("dataset has no test split"));
    }
    model.evaluate(data.test(), opts)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
