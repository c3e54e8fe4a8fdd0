use std::path::PathBuf;
use std::process::ExitCode;

use anomaly_cli::commands::{self, ModelKind};
use anomaly_cli::config::{PipelineConfig, CONFIG_ENV};
use anomaly_cli::render::RenderKind;
use anomaly_cli::CliError;
use clap::{Parser, Subcommand};

/// Audio anomaly detection: synthesis, conditioning, features, models.
#[derive(Parser, Debug)]
#[command(name = "anomaly", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set n_trees=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_kv)]
    overrides: Vec<(String, String)>,

    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the labelled synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Clips per class.
        #[arg(long, visible_alias = "n")]
        n_per_class: Option<usize>,
    },
    /// Denoise, normalize and segment the clips of a manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the clip feature table for a (segment) manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/test split of a feature table.
    Split {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        test_frac: Option<f64>,
    },
    /// Train models on a feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// forest, svm or ensemble; all three when omitted.
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Score a saved model on a feature table.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every stage end to end into one directory.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot a WAV file as waveform/spectrum CSV or spectrogram PGM.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(t) = cli.threads {
        overrides.push(("threads".into(), t.to_string()));
    }
    match &cli.command {
        Command::Synth { n_per_class: Some(n), .. } => overrides.push(("n_per_class".into(), n.to_string())),
        Command::Split { test_frac: Some(f), .. } => overrides.push(("test_frac".into(), f.to_string())),
        _ => {}
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;

    commands::with_threads(cfg.threads, || match cli.command {
        Command::Synth { out, .. } => commands::synth(&cfg, &out).map(|_| ()),
        Command::Preprocess { manifest, out } => commands::preprocess(&cfg, &manifest, &out).map(|_| ()),
        Command::Extract { manifest, out } => commands::extract(&cfg, &manifest, &out).map(|_| ()),
        Command::Split { features, train, test, .. } => commands::split(&cfg, &features, &train, &test),
        Command::Train { features, out, models } => {
            let kinds = if models.is_empty() {
                ModelKind::ALL.to_vec()
            } else {
                models.iter().map(|m| m.parse()).collect::<Result<Vec<_>, _>>()?
            };
            commands::train(&cfg, &features, &out, &kinds).map(|_| ())
        }
        Command::Evaluate { model, features, report } => {
            let r = commands::evaluate(&cfg, &model, &features, &report)?;
            println!("{} accuracy {}", r.model_kind, anomaly_core::eval::fmt4(r.metrics.accuracy));
            Ok(())
        }
        Command::Pipeline { out } => {
            for r in commands::pipeline(&cfg, &out)? {
                println!("{} accuracy {}", r.model_kind, anomaly_core::eval::fmt4(r.metrics.accuracy));
            }
            Ok(())
        }
        Command::Render { input, kind, out } => {
            let kind: RenderKind = kind.parse()?;
            commands::render(&cfg, &input, kind, &out)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
