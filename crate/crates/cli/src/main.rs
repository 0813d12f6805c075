//! `glassbuf`: dataset generation, training, evaluation, rendering, and
//! diagnostics for the neural transparency renderer.
//!
//! Exit codes: 0 success, 1 validation error (bad config, scene, or
//! arguments), 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use glassbuf_core::glassnet::{load_checkpoint, GlassNetConfig};
use glassbuf_core::harness::{
    bench_memory, evaluate, gen_dataset, oit_demo, render_view, train, HarnessError, Split,
    TrainConfig,
};
use glassbuf_core::scene::fixtures::{write_preset, Preset};

#[derive(Parser)]
#[command(name = "glassbuf", version, about = "Neural deferred rendering with order-independent transparency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset (buffer stacks, ground truth, coverage masks).
    GenDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Metrics report output (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one view of a scene through a checkpoint.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ground-truth samples per pixel; 0 skips the ground truth.
        #[arg(long, default_value_t = 256)]
        spp: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure buffer memory: raw stack sizes vs the streaming peak.
    BenchMemory {
        /// Comma-separated transparent-object counts.
        #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
        t: Vec<usize>,
        #[arg(long, default_value_t = 256)]
        res: usize,
        /// Optional CSV output path.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Optional JSON output path.
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Depth-peel a scene and contrast sorted vs unsorted compositing.
    OitDemo {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[arg(long, default_value_t = 8)]
        max_peels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's layer table and parameter count as JSON.
    ModelInfo {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Write a built-in scene (scene.json plus textures) into a directory.
    MakeScene {
        /// One of: cornellbox, cornell-panes, furnace, glass-stack.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenDataset { config, out } => {
            let config = TrainConfig::from_file(&config)?;
            let manifest = gen_dataset(&config, &out)?;
            println!(
                "wrote {} samples to {} (config hash {})",
                manifest.samples.len(),
                out.display(),
                manifest.config_hash
            );
            Ok(())
        }
        Command::Train { config, data, out } => {
            let config = TrainConfig::from_file(&config)?;
            let outcome = train(&config, &data, &out)?;
            println!("{}", serde_json::to_string_pretty(&outcome).unwrap());
            Ok(())
        }
        Command::Eval {
            ckpt,
            data,
            split,
            out,
        } => {
            let split = Split::parse(&split)
                .ok_or_else(|| HarnessError::Config(format!("unknown split {split:?}")))?;
            let report = evaluate(&ckpt, &data, split)?;
            let json = serde_json::to_string_pretty(&report).unwrap();
            std::fs::write(&out, &json).map_err(|e| HarnessError::Io {
                path: out.display().to_string(),
                source: e,
            })?;
            println!("{json}");
            Ok(())
        }
        Command::Render {
            ckpt,
            scene,
            seed,
            spp,
            out,
        } => {
            let outputs = render_view(&ckpt, &scene, seed, spp, &out)?;
            println!("{}", serde_json::to_string_pretty(&outputs).unwrap());
            Ok(())
        }
        Command::BenchMemory {
            t,
            res,
            out_csv,
            out_json,
        } => {
            if t.is_empty() {
                return Err(HarnessError::Config("need at least one t value".into()));
            }
            if res % 4 != 0 {
                return Err(HarnessError::Config("res must be a multiple of 4".into()));
            }
            let report = bench_memory(&t, res, res, GlassNetConfig::default());
            if let Some(path) = out_csv {
                report.write_csv(&path)?;
            }
            if let Some(path) = out_json {
                report.write_json(&path)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::OitDemo {
            scene,
            seed,
            res,
            max_peels,
            out,
        } => {
            let report = oit_demo(&scene, seed, res, res, max_peels, &out)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::ModelInfo { ckpt } => {
            let (params, meta) = load_checkpoint(&ckpt)?;
            let mut info = params.model_info();
            info["meta"] = serde_json::to_value(&meta).unwrap();
            println!("{}", serde_json::to_string_pretty(&info).unwrap());
            Ok(())
        }
        Command::MakeScene { preset, out } => {
            let preset = Preset::parse(&preset).ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown preset {preset:?}; expected one of {:?}",
                    Preset::NAMES
                ))
            })?;
            let path = write_preset(preset, &out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
