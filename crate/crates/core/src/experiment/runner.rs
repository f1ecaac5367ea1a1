use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::csi::{dataset_load, generate_dataset, CsiDataset};
use crate::dualnet::{DualNetModel, FrameworkConfig, QuantizerKind};
use crate::error::{Error, Result};
use crate::nn::CoreKind;
use crate::training::{train_stage1, train_stage2, TrainReport};

/// Phase compression ratio of the core-layer comparison.
pub const CORE_SWEEP_CR_PHA: f64 = 1.0 / 8.0;

pub const CSV_HEADER: &str =
    "method,core,quantizer,cr_pha,r_s,phase_bits,bits_per_phase_entry,nmse_db,parameter_count,seed";

/// One trained configuration of a comparison sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub core: String,
    pub quantizer: String,
    pub cr_pha: f64,
    pub r_s: f64,
    pub phase_bits: u64,
    pub bits_per_phase_entry: f64,
    pub nmse_db: f64,
    /// Weights and biases of the phase encoder and decoder.
    pub parameter_count: usize,
    pub seed: u64,
}

impl ResultRow {
    /// Bit accounting and parameter count recomputed from `cfg`.
    pub fn from_config(cfg: &FrameworkConfig, nmse_db: f64) -> Result<Self> {
        let phase_bits = cfg.phase_bits()?;
        let arch = crate::dualnet::Architecture::new(cfg)?;
        Ok(Self {
            method: cfg.phase_method.label().to_string(),
            core: cfg.core_kind.label().to_string(),
            quantizer: quantizer_label(cfg.quantizer_kind).to_string(),
            cr_pha: cfg.cr_pha,
            r_s: if cfg.sends_signs() { cfg.r_s } else { 0.0 },
            phase_bits,
            bits_per_phase_entry: phase_bits as f64 / cfg.entries() as f64,
            nmse_db,
            parameter_count: arch.phase_branch_parameters(),
            seed: cfg.seed,
        })
    }
}

fn quantizer_label(q: QuantizerKind) -> &'static str {
    match q {
        QuantizerKind::Ssq => "ssq",
        QuantizerKind::Blq => "blq",
    }
}

/// CSV text with [`CSV_HEADER`]; floats use the shortest exact form, so equal
/// rows give equal bytes.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::invalid(format!("bad result row: {e}"))))
        .collect()
}

/// A trained sweep cell.
pub struct CellOutcome {
    pub row: ResultRow,
    pub model: DualNetModel,
    pub report: TrainReport,
}

pub struct Comparison {
    pub stage1: TrainReport,
    pub cells: Vec<CellOutcome>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }

    pub fn cell(&self, pred: impl Fn(&FrameworkConfig) -> bool) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| pred(c.model.config()))
    }

    /// Wall-clock seconds per stage and cell, kept apart from the result CSV.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("job,wall_clock_s\n");
        out.push_str(&format!("stage1,{:.3}\n", self.stage1.wall_clock_s));
        for c in &self.cells {
            let r = &c.row;
            out.push_str(&format!(
                "{}/{}/{}/{},{:.3}\n",
                r.method, r.core, r.quantizer, r.cr_pha, c.report.wall_clock_s
            ));
        }
        out
    }

    /// Writes `{name}.csv` and `{name}_timings.csv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, rows_to_csv(&self.rows())?).map_err(|e| Error::io(&csv_path, e))?;
        let t_path = dir.join(format!("{name}_timings.csv"));
        std::fs::write(&t_path, self.timings_csv()).map_err(|e| Error::io(&t_path, e))
    }
}

/// Loads the configured dataset file or generates the samples.
pub fn load_data(spec: &ExperimentSpec) -> Result<CsiDataset> {
    let data = match &spec.data.path {
        Some(path) => dataset_load(path)?,
        None => generate_dataset(&spec.channel, spec.data.n_samples, spec.data.n_train)?,
    };
    let (n_f, n_b) = data.dims().ok_or_else(|| Error::invalid("dataset is empty"))?;
    if n_b != spec.framework.n_b || spec.framework.q_t() > n_f {
        return Err(Error::invalid(format!(
            "dataset is {n_f}x{n_b}, framework needs n_b = {} and n_f >= {}",
            spec.framework.n_b,
            spec.framework.q_t()
        )));
    }
    Ok(data)
}

/// Stage 1 on the spec's framework; the result seeds every sweep cell.
pub fn train_magnitude(spec: &ExperimentSpec, data: &CsiDataset) -> Result<(DualNetModel, TrainReport)> {
    let mut model = DualNetModel::new(spec.framework.clone())?;
    let report = train_stage1(&mut model, data, &spec.train)?;
    Ok((model, report))
}

/// One configuration per `(cr_pha, method)`, ratio-major.
pub fn loss_cells(spec: &ExperimentSpec) -> Vec<FrameworkConfig> {
    let mut cells = Vec::new();
    for &cr in &spec.sweep.cr_pha {
        for &method in &spec.sweep.methods {
            let mut cfg = spec.framework.clone().with_phase_ratio(cr);
            cfg.phase_method = method;
            cells.push(cfg);
        }
    }
    cells
}

/// One SMDP configuration per `(core, quantizer)`, core-major.
pub fn core_cells(spec: &ExperimentSpec) -> Vec<FrameworkConfig> {
    let mut cells = Vec::new();
    for &core in &spec.sweep.cores {
        for &quantizer in &spec.sweep.quantizers {
            let mut cfg = spec.framework.clone().with_phase_ratio(CORE_SWEEP_CR_PHA);
            cfg.phase_method = crate::dualnet::PhaseMethod::Smdp;
            cfg.core_kind = core;
            cfg.quantizer_kind = quantizer;
            cells.push(cfg);
        }
    }
    cells
}

/// Trains stage 2 of every cell on top of `magnitude`. Cells are independent
/// and run in parallel; the output keeps the order of `cells`.
pub fn run_cells(
    spec: &ExperimentSpec,
    data: &CsiDataset,
    magnitude: &DualNetModel,
    cells: Vec<FrameworkConfig>,
) -> Result<Vec<CellOutcome>> {
    cells
        .into_par_iter()
        .map(|cfg| {
            let mut model = DualNetModel::new(cfg.clone())?;
            model.adopt_magnitude(magnitude)?;
            let report = train_stage2(&mut model, data, &spec.train)?;
            let row = ResultRow::from_config(&cfg, report.final_test_nmse_db)?;
            Ok(CellOutcome { row, model, report })
        })
        .collect()
}

fn compare(spec: &ExperimentSpec, data: &CsiDataset, cells: Vec<FrameworkConfig>) -> Result<Comparison> {
    let (magnitude, stage1) = train_magnitude(spec, data)?;
    let cells = run_cells(spec, data, &magnitude, cells)?;
    Ok(Comparison { stage1, cells })
}

/// SMDP against the MDPP, naive and MDPQ baselines at matched budgets.
pub fn compare_losses(spec: &ExperimentSpec, data: &CsiDataset) -> Result<Comparison> {
    compare(spec, data, loss_cells(spec))
}

/// Core layer and quantizer ablation of the SMDP framework.
pub fn compare_core(spec: &ExperimentSpec, data: &CsiDataset) -> Result<Comparison> {
    compare(spec, data, core_cells(spec))
}

/// Phase-branch parameter counts of the three cores at `cfg`'s dimensions.
pub fn core_parameter_counts(cfg: &FrameworkConfig) -> Result<Vec<(CoreKind, usize)>> {
    [CoreKind::Dnn, CoreKind::Cnn, CoreKind::Ccnn]
        .into_iter()
        .map(|core| {
            let mut c = cfg.clone();
            c.core_kind = core;
            Ok((core, crate::dualnet::Architecture::new(&c)?.phase_branch_parameters()))
        })
        .collect()
}
