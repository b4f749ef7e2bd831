use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use roleablate::corpus::{Adapter, SplitOptions, SplitRatios};
use roleablate::{RoleKind, Setting, SynthSpec};
use roleablate_cli::{
    cmd_analyze, cmd_ingest, cmd_replay, cmd_report, cmd_run, cmd_split, cmd_stats, cmd_synth, exit_code,
    AnalyzeOptions, ExperimentSpec,
};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "roleablate", version, about = "Role-aware ablation experiments for emotion classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed override (split seed, base seed of a run, synth seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for training; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source corpus to canonical JSONL.
    Ingest {
        input: PathBuf,
        #[arg(long, default_value = "canonical-jsonl")]
        adapter: String,
        /// JSON file with adapter options.
        #[arg(long)]
        adapter_options: Option<PathBuf>,
        #[arg(long)]
        label_map: Option<PathBuf>,
    },
    /// Print instance and role statistics of canonical files.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write a seeded train/dev/test partition of a canonical file.
    Split {
        input: PathBuf,
        /// Train, dev and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
        ratios: Vec<f64>,
        #[arg(long)]
        stratified: bool,
    },
    /// Run an experiment from a spec file or replay a manifest.
    Run {
        /// Experiment spec (JSON).
        #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
        spec: Option<PathBuf>,
        /// Replay a manifest written by an earlier run.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        backend: Option<String>,
        /// Save every trained model.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Generate a synthetic corpus with a known label mechanism.
    Synth {
        /// SynthSpec JSON; flags override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        informative_role: Option<RoleKind>,
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
    },
    /// Token frequencies, emotion distributions and disagreement lists.
    Analyze {
        input: PathBuf,
        /// Results or predictions directory of a run.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        roles: Vec<RoleKind>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        no_case_fold: bool,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tokens: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        emotions: Vec<String>,
        #[arg(long)]
        disagreements: bool,
        /// Without roles to compare against As-Is.
        #[arg(long, value_delimiter = ',')]
        without: Vec<RoleKind>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Render a results JSON as TSV and per-emotion tables.
    Report {
        results: PathBuf,
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        /// Settings for the per-emotion tables, e.g. `position:stimulus`.
        #[arg(long, value_delimiter = ',')]
        settings: Vec<Setting>,
    },
}

fn require_out(common: &Common) -> Result<&Path> {
    match &common.out {
        Some(p) => Ok(p),
        None => bail!(roleablate::Error::InvalidConfig("--out is required".into())),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| roleablate::Error::io(path, e))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| roleablate::Error::io(path, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Ingest {
            input,
            adapter,
            adapter_options,
            label_map,
        } => {
            let adapter: Adapter = adapter.parse()?;
            let options = adapter_options.as_deref().map(read_json).transpose()?.unwrap_or(Value::Null);
            let out = require_out(common)?;
            let summary = cmd_ingest(&input, adapter, &options, label_map.as_deref(), out)?;
            println!("{summary}");
            println!("wrote {}", out.display());
        }
        Command::Stats { inputs } => {
            let (_, table) = cmd_stats(&inputs)?;
            emit(common.out.as_deref(), &table)?;
        }
        Command::Split { input, ratios, stratified } => {
            if ratios.len() != 3 {
                bail!(roleablate::Error::InvalidConfig(format!(
                    "--ratios needs three values, got {}",
                    ratios.len()
                )));
            }
            let options = SplitOptions {
                ratios: SplitRatios {
                    train: ratios[0],
                    dev: ratios[1],
                    test: ratios[2],
                },
                seed: common.seed.unwrap_or(0),
                stratified,
            };
            let out = require_out(common)?;
            let [tr, dev, te] = cmd_split(&input, &options, out)?;
            println!("train {tr}, dev {dev}, test {te} -> {}", out.display());
        }
        Command::Run {
            spec,
            manifest,
            runs,
            backend,
            checkpoints,
        } => {
            let summary = match (spec, manifest) {
                (_, Some(manifest)) => {
                    let out = require_out(common)?;
                    cmd_replay(&manifest, out)?
                }
                (Some(path), None) => {
                    let mut spec = ExperimentSpec::from_path(&path)?;
                    if let Some(seed) = common.seed {
                        spec.base_seed = seed;
                    }
                    if let Some(jobs) = common.jobs {
                        spec.jobs = jobs;
                    }
                    if let Some(n) = runs {
                        spec.n_runs = n;
                    }
                    if let Some(b) = backend {
                        spec.backend = b.parse()?;
                    }
                    spec.checkpoints |= checkpoints;
                    let out = match (&common.out, &spec.output_dir) {
                        (Some(o), _) | (None, Some(o)) => o.clone(),
                        (None, None) => bail!(roleablate::Error::InvalidConfig(
                            "no output directory: pass --out or set output_dir".into()
                        )),
                    };
                    cmd_run(&spec, &out)?
                }
                (None, None) => unreachable!("clap requires a spec or a manifest"),
            };
            print!("{}", summary.table.to_tsv());
            println!("results in {}", summary.out_dir.display());
        }
        Command::Synth {
            spec,
            instances,
            noise,
            informative_role,
            labels,
        } => {
            let mut synth: SynthSpec = match spec {
                Some(path) => serde_json::from_value(read_json(&path)?)
                    .map_err(|e| roleablate::Error::InvalidConfig(format!("{}: {e}", path.display())))?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = common.seed {
                synth.seed = seed;
            }
            if let Some(n) = instances {
                synth.n_instances = n;
            }
            if let Some(p) = noise {
                synth.noise = p;
            }
            if let Some(r) = informative_role {
                synth.informative_role = r;
            }
            if let Some(l) = labels {
                synth.labels = l;
            }
            let out = require_out(common)?;
            let (n, flipped) = cmd_synth(&synth, out)?;
            println!("{n} instances ({flipped} flipped) -> {}", out.display());
        }
        Command::Analyze {
            input,
            predictions,
            roles,
            k,
            no_case_fold,
            stoplist,
            tokens,
            emotions,
            disagreements,
            without,
            run,
        } => {
            let options = AnalyzeOptions {
                roles,
                k,
                case_fold: !no_case_fold,
                stoplist,
                tokens,
                emotions,
                disagreements,
                without_roles: without,
                run,
            };
            let out = require_out(common)?;
            let report = cmd_analyze(&input, predictions.as_deref(), &options, out)?;
            for path in &report.written {
                println!("wrote {}", path.display());
            }
        }
        Command::Report {
            results,
            datasets,
            settings,
        } => {
            let text = cmd_report(&results, &datasets, &settings)?;
            emit(common.out.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
