//! Model and optimizer persistence on top of [`TensorArchive`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optimizer::AdamState;
use super::trainer::TrainState;
use crate::dualnet::{DualNetModel, FrameworkConfig};
use crate::error::{Error, Result};
use crate::nn::{ParameterStore, Tensor, TensorArchive};

const PARAM: &str = "param/";
const MOMENT1: &str = "adam.m/";
const MOMENT2: &str = "adam.v/";

#[derive(Serialize, Deserialize)]
struct Metadata {
    format: String,
    config: FrameworkConfig,
    amplitude_scale: f64,
    magnitude_trained: bool,
    train_state: Option<TrainState>,
}

pub fn checkpoint_to_archive(model: &DualNetModel, state: Option<&TrainState>) -> Result<TensorArchive> {
    let meta = Metadata {
        format: "dualnet-checkpoint".into(),
        config: model.config().clone(),
        amplitude_scale: model.amplitude_scale(),
        magnitude_trained: model.magnitude_trained(),
        train_state: state.cloned(),
    };
    let json = serde_json::to_string(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    let mut archive = TensorArchive::new(json);
    for (name, t) in model.params().iter() {
        archive.push(format!("{PARAM}{name}"), t);
    }
    if let Some(s) = state {
        for (name, (m, v)) in &s.optimizer.moments {
            archive.push(format!("{MOMENT1}{name}"), &Tensor::new(vec![m.len()], m.clone())?);
            archive.push(format!("{MOMENT2}{name}"), &Tensor::new(vec![v.len()], v.clone())?);
        }
    }
    Ok(archive)
}

pub fn checkpoint_from_archive(archive: &TensorArchive) -> Result<(DualNetModel, Option<TrainState>)> {
    let meta: Metadata =
        serde_json::from_str(&archive.metadata).map_err(|e| Error::format(16, format!("checkpoint metadata: {e}")))?;
    if meta.format != "dualnet-checkpoint" {
        return Err(Error::format(
            16,
            format!("unexpected checkpoint kind {:?}", meta.format),
        ));
    }
    let mut params = ParameterStore::new();
    let mut moments = std::collections::BTreeMap::<String, (Vec<f64>, Vec<f64>)>::new();
    for (name, t) in &archive.tensors {
        if let Some(p) = name.strip_prefix(PARAM) {
            params.insert(p, t.clone())?;
        } else if let Some(p) = name.strip_prefix(MOMENT1) {
            moments.entry(p.to_string()).or_default().0 = t.values().to_vec();
        } else if let Some(p) = name.strip_prefix(MOMENT2) {
            moments.entry(p.to_string()).or_default().1 = t.values().to_vec();
        } else {
            return Err(Error::format(0, format!("unknown checkpoint tensor {name:?}")));
        }
    }
    let model = DualNetModel::from_parts(meta.config, params, meta.amplitude_scale, meta.magnitude_trained)?;
    let state = meta.train_state.map(|mut s| {
        s.optimizer = AdamState {
            step: s.optimizer.step,
            moments,
        };
        s
    });
    Ok((model, state))
}

pub fn checkpoint_save(path: &Path, model: &DualNetModel, state: Option<&TrainState>) -> Result<()> {
    checkpoint_to_archive(model, state)?.save(path)
}

pub fn checkpoint_load(path: &Path) -> Result<(DualNetModel, Option<TrainState>)> {
    checkpoint_from_archive(&TensorArchive::load(path)?)
}
