use std::error::Error;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use serenade::eval::{evaluate, parse_sweep_range, roi_sweep, OraclePolicy};
use serenade::features::{synth_corpus, SynthConfig, SynthOptions};
use serenade::labels::write_lab_file;
use serenade::model::ModelConfig;
use serenade::nade::{DecodeMode, Propagation};
use serenade::service::{serve, ServiceConfig};
use serenade::training::{
    excerpt_intervals, load_corpus_dir, load_features, model_config_from_toml, train, Checkpoint,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    version,
    about = "Frame-level harmony analysis with oracle-assisted correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML file with a `[train]` table and an optional `[model]` table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint, optionally with a simulated oracle or a
    /// confidence-threshold sweep.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// key | droot | wrong:FRAC | conf:T
        #[arg(long)]
        oracle: Option<OraclePolicy>,
        /// Write the report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// t0:t1:steps; prints the ROI table as CSV.
        #[arg(long)]
        sweep: Option<String>,
        /// Write the sweep CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Oracle cells overwrite outputs without steering later cells.
        #[arg(long)]
        frozen: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write interval-merged chord labels for one track.
    Infer {
        /// Track stem, or either of its `.treble.chroma` / `.bass.chroma` files.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the parameter count of a model configuration.
    ParamCount {
        /// TOML file with an optional `[model]` table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic corpus directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 230)]
        excerpts: usize,
        #[arg(long, default_value_t = 64)]
        frames: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn track_stem(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for suffix in [".treble.chroma", ".bass.chroma"] {
        if let Some(stem) = s.strip_suffix(suffix) {
            return PathBuf::from(stem);
        }
    }
    path.to_path_buf()
}

fn model_config(path: Option<&Path>) -> Result<ModelConfig, Box<dyn Error>> {
    Ok(match path {
        Some(p) => model_config_from_toml(&std::fs::read_to_string(p)?)?,
        None => ModelConfig::default(),
    })
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Train {
            corpus,
            config,
            out,
        } => {
            let train_config = match &config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            let model = model_config(config.as_deref())?;
            let excerpts = load_corpus_dir(&corpus, train_config.excerpt_frames)?;
            log::info!(
                "{} excerpts, {} parameters",
                excerpts.len(),
                model.param_count()
            );
            let ck = train(&excerpts, &model, &train_config)?;
            ck.save(&out)?;
            println!(
                "saved {} (epoch {}, train loss {:.4} -> {:.4})",
                out.display(),
                ck.meta.epoch,
                ck.meta.initial_train_loss,
                ck.meta.train_loss.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Eval {
            ckpt,
            corpus,
            oracle,
            report,
            sweep,
            csv,
            frozen,
            seed,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let excerpts = load_corpus_dir(&corpus, ck.meta.train.excerpt_frames)?;
            let propagation = if frozen {
                Propagation::Frozen
            } else {
                Propagation::Full
            };
            let result = evaluate(&ck.model, &excerpts, oracle, propagation, seed)?;
            print!("{}", result.summary());
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&result)?)?;
            }
            if let Some(range) = sweep {
                let thresholds = parse_sweep_range(&range)?;
                let table = roi_sweep(&ck.model, &excerpts, &thresholds, propagation)?;
                for row in &table.rows {
                    let mean = row
                        .mean_roi
                        .map_or("unused".to_string(), |r| format!("{r:.4}"));
                    eprintln!("t={:.4} mean roi {mean}", row.threshold);
                }
                match csv {
                    Some(path) => std::fs::write(path, table.to_csv())?,
                    None => print!("{}", table.to_csv()),
                }
            }
        }
        Command::Infer {
            features,
            ckpt,
            out,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let input = load_features(&track_stem(&features))?;
            let labels = ck.model.predict(&input, DecodeMode::Argmax)?.labels();
            let (chords, _) = excerpt_intervals(&labels, input.hop());
            write_lab_file(&out, &chords)?;
            println!("wrote {} chord segments to {}", chords.len(), out.display());
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
        Command::ParamCount { config } => {
            let model = model_config(config.as_deref())?;
            println!("{}", model.param_count());
        }
        Command::Synth {
            out,
            excerpts,
            frames,
            noise,
            dropout,
            seed,
        } => {
            let config = SynthConfig {
                excerpts,
                frames,
                features: SynthOptions {
                    noise_sd: noise,
                    tone_dropout: dropout,
                },
                ..SynthConfig::default()
            };
            let corpus = synth_corpus(&config, seed);
            serenade::training::write_corpus_dir(&out, &corpus)?;
            println!("wrote {} excerpts to {}", corpus.len(), out.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
