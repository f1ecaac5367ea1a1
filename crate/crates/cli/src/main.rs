use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dualnet_core::dualnet::{EvalOptions, SignPlacement};
use dualnet_core::experiment::{self, ExperimentSpec, GenDataConfig, Preset};

#[derive(Parser)]
#[command(name = "dualnet", version, about = "Magnitude-aided CSI feedback experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic channel dataset.
    GenData(Common),
    /// Train the magnitude branch, then the phase branch and combiner.
    Train(Common),
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Compare SMDP against the MDPP, naive and MDPQ baselines.
    CompareLosses(Common),
    /// Compare core layers and quantizers.
    CompareCore(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take preset values.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of model initialization and batch order (channel seed for gen-data).
    #[arg(long)]
    seed: Option<u64>,
    /// Use the small preset for omitted keys.
    #[arg(long)]
    desk_scale: bool,
    /// Place sign bits by the true magnitude ranking.
    #[arg(long)]
    genie_signs: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `CSID` dataset file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    genie_signs: bool,
}

impl Common {
    fn preset(&self) -> Preset {
        if self.desk_scale {
            Preset::Desk
        } else {
            Preset::Paper
        }
    }

    fn experiment(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => {
                ExperimentSpec::load(path, self.preset()).with_context(|| format!("reading {}", path.display()))?
            }
            None => ExperimentSpec::preset(self.preset()),
        };
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if self.genie_signs {
            spec.framework.sign_placement = SignPlacement::Genie;
        }
        Ok(spec)
    }

    fn out_dir(&self, spec: &ExperimentSpec) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.output_dir.clone())
            .unwrap_or_else(|| Path::new("results").join(&spec.scenario))
    }
}

fn gen_data(args: &Common) -> Result<()> {
    let mut cfg = match &args.spec {
        Some(path) => {
            GenDataConfig::load(path, args.preset()).with_context(|| format!("reading {}", path.display()))?
        }
        None => GenDataConfig::preset(args.preset()),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("data"))
        .join("dataset.csid");
    let summary = experiment::gen_data(&cfg, &path)?;
    println!(
        "wrote {} samples ({} train / {} test) to {}",
        summary.samples,
        summary.train,
        summary.test,
        summary.path.display()
    );
    println!(
        "downlink/uplink magnitude correlation: mean {:.4}, min {:.4} over {} samples",
        summary.reciprocity.mean, summary.reciprocity.min, summary.reciprocity.samples
    );
    Ok(())
}

fn train(args: &Common) -> Result<()> {
    let spec = args.experiment()?;
    let out = args.out_dir(&spec);
    let outcome = experiment::train(&spec, &out)?;
    println!(
        "stage 1: magnitude NMSE {:.3} dB in {:.1} s",
        outcome.stage1.final_test_nmse_db, outcome.stage1.wall_clock_s
    );
    println!(
        "stage 2: NMSE {:.3} dB in {:.1} s",
        outcome.stage2.final_test_nmse_db, outcome.stage2.wall_clock_s
    );
    println!("checkpoints and reports in {}", out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        sign_placement: args.genie_signs.then_some(SignPlacement::Genie),
        ..EvalOptions::default()
    };
    let report = experiment::eval(&args.checkpoint, &args.data, &opts)?;
    println!("nmse_db {:.4}", report.nmse_db);
    println!("magnitude_nmse_db {:.4}", report.magnitude_nmse_db);
    println!("samples {}", report.samples);
    Ok(())
}

fn compare(args: &Common, name: &str) -> Result<()> {
    let spec = args.experiment()?;
    let out = args.out_dir(&spec);
    let data = experiment::load_data(&spec)?;
    let comparison = if name == "compare_losses" {
        experiment::compare_losses(&spec, &data)?
    } else {
        experiment::compare_core(&spec, &data)?
    };
    comparison.write(&out, name)?;
    for row in comparison.rows() {
        println!(
            "{:>6} {:>5} {:>4} cr {:<7} bits {:>5}  nmse {:8.3} dB  params {}",
            row.method, row.core, row.quantizer, row.cr_pha, row.phase_bits, row.nmse_db, row.parameter_count
        );
    }
    println!("wrote {}", out.join(format!("{name}.csv")).display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::CompareLosses(a) => compare(a, "compare_losses"),
        Command::CompareCore(a) => compare(a, "compare_core"),
    }
}
