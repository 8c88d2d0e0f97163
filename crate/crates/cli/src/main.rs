//! `fundus`: batch front end for lesion-dataset preparation and evaluation.
//!
//! Data goes to files; warnings and errors go to stderr. A failing command
//! prints one JSON line `{"error": kind, "message": ...}` and exits with
//! 1 (validation), 2 (I/O) or 3 (internal).

mod commands;
mod error;
mod imageio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fundus_core::dataset::{SplitCounts, SynthParams};
use fundus_core::evaluate::{EvalConfig, IouMode};
use fundus_core::instances::Connectivity;

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "fundus", version, about = "Fundus lesion dataset preparation and mAP evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize image/mask pairs: crop, circularize, blend, resize, dilate masks.
    Prep {
        in_dir: PathBuf,
        mask_dir: PathBuf,
        out_dir: PathBuf,
        /// Preprocessing parameters (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON list of {"image", "mask"} file pairs instead of pairing by name.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Extract lesion instances from prepared masks and write a split manifest.
    Build {
        #[arg(required = true)]
        prep_dirs: Vec<PathBuf>,
        /// Lesion class of each directory (1 exudate, 2 microaneurysm); one value applies to all.
        #[arg(long = "class-id", required = true, value_delimiter = ',')]
        class_ids: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// train,val,test image counts.
        #[arg(long, default_value = "155,20,20")]
        counts: SplitCounts,
        /// Pixel adjacency for instances: 4 or 8.
        #[arg(long, default_value_t = 8)]
        connectivity: u32,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score predictions against a manifest; writes a JSON report and a CSV table.
    Eval {
        manifest: PathBuf,
        predictions: PathBuf,
        /// Report path; the CSV is written next to it with a .csv extension.
        #[arg(long, short)]
        out: PathBuf,
        /// Evaluation parameters (JSON); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iou_mode: Option<IouMode>,
        /// Comma-separated IoU thresholds, ascending.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        min_score: Option<f64>,
        /// Score predictions of every class, not just the annotated one.
        #[arg(long)]
        no_type_filter: bool,
    },
    /// Write synthetic fundus images with exudate and microaneurysm masks.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        n_images: usize,
        #[arg(long, default_value_t = 256)]
        side: usize,
        #[arg(long, default_value_t = 4)]
        n_exudates: usize,
        #[arg(long, default_value_t = 6)]
        n_mas: usize,
        /// Minimum clearance between lesions in pixels.
        #[arg(long, default_value_t = 8)]
        min_gap: usize,
    },
    /// Write the detector training configuration.
    EmitConfig { out: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prep { in_dir, mask_dir, out_dir, config, pairs, jobs } => {
            let n = commands::prep(commands::PrepArgs {
                in_dir: &in_dir,
                mask_dir: &mask_dir,
                out_dir: &out_dir,
                config: config.as_deref(),
                pairs: pairs.as_deref(),
                jobs,
            })?;
            eprintln!("prepared {n} pairs");
        }
        Command::Build { prep_dirs, class_ids, seed, counts, connectivity, out } => {
            let connectivity = Connectivity::try_from(connectivity)?;
            let (images, instances) = commands::build(commands::BuildArgs {
                prep_dirs: &prep_dirs,
                class_ids: &class_ids,
                seed,
                counts,
                connectivity,
                out: &out,
            })?;
            eprintln!("manifest: {images} images, {instances} instances");
        }
        Command::Eval { manifest, predictions, out, config, iou_mode, thresholds, min_score, no_type_filter } => {
            let mut cfg: EvalConfig = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                    serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()).at(&p))?
                }
                None => EvalConfig::default(),
            };
            if let Some(m) = iou_mode {
                cfg.iou_mode = m;
            }
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            if let Some(s) = min_score {
                cfg.min_score = s;
            }
            if no_type_filter {
                cfg.apply_type_filter = false;
            }
            let summary = commands::eval(commands::EvalArgs {
                manifest: &manifest,
                predictions: &predictions,
                out: &out,
                config: cfg,
            })?;
            for (label, value) in summary {
                println!("{label} {value:.4}");
            }
        }
        Command::Synth { out_dir, seed, n_images, side, n_exudates, n_mas, min_gap } => {
            commands::synth(seed, n_images, &SynthParams { side, n_exudates, n_mas, min_gap }, &out_dir)?;
        }
        Command::EmitConfig { out } => commands::emit_config(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_owned();
            let err = CliError::validation(first);
            eprintln!("{}", err.to_line());
            return ExitCode::from(err.kind.exit_code());
        }
    };
    std::panic::set_hook(Box::new(|_| {}));
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(CliError::internal("unexpected internal failure")));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_line());
            ExitCode::from(err.kind.exit_code())
        }
    }
}
