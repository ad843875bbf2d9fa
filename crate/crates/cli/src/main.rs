//! `matfuse` command-line driver.
//!
//! Machine-readable output (JSON lines, CSV) goes to stdout or files; human
//! logs go to stderr. Exit codes: 0 ok, 2 data error, 3 missing artifact,
//! 4 numeric failure.

mod commands;
mod errors;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use matfuse::config::{Precision, RunConfig};
use matfuse::training::{CorruptionMode, Split, TrainingError};

use errors::{ConfigError, MissingArtifact};

#[derive(Parser, Debug)]
#[command(
    name = "matfuse",
    version,
    about = "Graph + text fusion models for crystal property regression"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Featurization worker threads; 1 is bit-deterministic.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides the config precision.
    #[arg(long, global = true, value_enum)]
    precision: Option<PrecisionArg>,
    /// Overrides the config run name (output subdirectory).
    #[arg(long, global = true)]
    name: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Train,
    Test,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a directory of CIFs, write descriptions and a manifest.
    Ingest {
        /// Directory of `.cif` files; the file stem is the record id.
        #[arg(long)]
        cifs: PathBuf,
        /// CSV with columns `id,target`.
        #[arg(long)]
        targets: PathBuf,
        /// Output directory for `manifest.jsonl` and `texts/`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "formation_energy_per_atom")]
        property: String,
        #[arg(long, default_value = "eV/atom")]
        units: String,
    },
    /// Print the templated description of a CIF.
    Describe {
        #[arg(long)]
        cif: PathBuf,
    },
    /// Print the parsed structure and its graph as JSON.
    DumpStructure {
        #[arg(long)]
        cif: PathBuf,
    },
    /// Write a seeded synthetic dataset (CIFs, texts, manifest).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        count: usize,
    },
    /// Train on a manifest and write the run directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate a checkpoint on one split of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Per-record predictions CSV; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict every record of a manifest; CSV on stdout.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate on a foreign manifest and report the domain shift.
    Zeroshot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Retrain on subsampled training splits; writes robustness.csv.
    SweepRobustness {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the config fractions.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Retrain with corrupted texts; writes corruption.csv.
    SweepCorruption {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the config corruption levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Fused embeddings of every record; CSV of id, components, target.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corrupt a text file with the seeded character and word noise.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl GlobalArgs {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(MissingArtifact(path.clone()).into());
                }
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = self.precision {
            cfg.precision = match p {
                PrecisionArg::F32 => Precision::F32,
                PrecisionArg::F64 => Precision::F64,
            };
        }
        if let Some(name) = &self.name {
            cfg.name = name.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let global = cli.global;
    let cfg = global.run_config()?;
    let threads = global.threads.max(1);
    match cli.command {
        Command::Ingest {
            cifs,
            targets,
            out,
            property,
            units,
        } => commands::ingest(&cfg, &cifs, &targets, &out, &property, &units),
        Command::Describe { cif } => commands::describe_cif(&cfg, &cif),
        Command::DumpStructure { cif } => commands::dump_structure(&cfg, &cif),
        Command::Synth { out, count } => commands::synth(&cfg, &out, count),
        Command::Train { manifest } => commands::train(&cfg, &manifest, threads),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            out,
        } => commands::eval(&cfg, &checkpoint, &manifest, split.split(), out.as_deref(), threads),
        Command::Predict { checkpoint, manifest } => commands::predict(&cfg, &checkpoint, &manifest, threads),
        Command::Zeroshot { checkpoint, manifest } => commands::zeroshot(&cfg, &checkpoint, &manifest, threads),
        Command::SweepRobustness { manifest, fractions } => {
            let mut cfg = cfg;
            if let Some(f) = fractions {
                cfg.sweep.train_fractions = f;
            }
            commands::sweep_robustness(&cfg, &manifest, threads)
        }
        Command::SweepCorruption { manifest, levels, mode } => {
            let mut cfg = cfg;
            if let Some(l) = levels {
                cfg.sweep.corruption_levels = l;
            }
            if let Some(m) = mode {
                cfg.sweep.corruption_mode = match m {
                    ModeArg::Train => CorruptionMode::Train,
                    ModeArg::Test => CorruptionMode::Test,
                    ModeArg::Both => CorruptionMode::Both,
                };
            }
            commands::sweep_corruption(&cfg, &manifest, threads)
        }
        Command::ExportEmbeddings {
            checkpoint,
            manifest,
            out,
        } => commands::export_embeddings(&cfg, &checkpoint, &manifest, out.as_deref(), threads),
        Command::Corrupt { input, p, out } => commands::corrupt(&cfg, &input, p, out.as_deref()),
    }
}

/// Exit code and error kind for a failure.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.downcast_ref::<MissingArtifact>().is_some() {
            return (3, "missing_artifact");
        }
        if let Some(t) = cause.downcast_ref::<TrainingError>() {
            match t {
                TrainingError::NonFiniteLoss { .. } => return (4, "numeric"),
                TrainingError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    return (3, "missing_artifact")
                }
                _ => {}
            }
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return (3, "missing_artifact");
            }
        }
    }
    (2, "data")
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(
                |e| matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe),
            )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed reader (`| head`) is not a failure of the command.
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            log::error!("{err:#}");
            let record = serde_json::json!({
                "error": kind,
                "message": format!("{err:#}"),
                "exit_code": code,
            });
            println!("{record}");
            ExitCode::from(code)
        }
    }
}
