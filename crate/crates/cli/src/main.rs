//! `dictmon` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{HistoryColumn, MonitorMode, SynthArgs};
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("machine '{machine}': {source}")]
    Machine { machine: String, source: dictmon::Error },
    #[error(transparent)]
    Lib(#[from] dictmon::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> u8 {
        let lib = |e: &dictmon::Error| match e {
            dictmon::Error::InvalidArgument(_) => 2,
            e if e.is_data_error() => 3,
            _ => 4,
        };
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Machine { source, .. } => lib(source),
            CliError::Lib(e) => lib(e),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dictmon", version, about = "Dictionary-learning condition monitoring of vibration data")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Each overrides the matching key of
/// the config file.
#[derive(Args, Debug, Default)]
struct GlobalOpts {
    /// Flat `key=value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Coding algorithm: mp or omp.
    #[arg(long, global = true, value_name = "mp|omp")]
    algo: Option<String>,
    /// Learning step size (0 disables adaptation).
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    sparsity: Option<f64>,
    /// Segments at or below this RMS (in G) are skipped.
    #[arg(long = "rms-gate", global = true, value_name = "G")]
    rms_gate: Option<f64>,
    /// Worker threads for fleet commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Segment file format: csv, f32 or f64.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a baseline dictionary per machine from its segments.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Train on only the earliest N segments of each machine.
        #[arg(long, value_name = "N")]
        first: Option<usize>,
    },
    /// Code each segment, optionally adapt the dictionary, and record fidelity
    /// and distance to the baseline.
    Monitor {
        #[arg(long)]
        input: PathBuf,
        /// A `.vdct` file shared by all machines, or a directory of
        /// `<machine>.vdct` baselines.
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = MonitorMode::Propagate)]
        mode: MonitorMode,
        /// Also write every segment's sparse code.
        #[arg(long)]
        export_codes: bool,
    },
    /// Print the distance between two dictionaries in degrees.
    Distance { a: PathBuf, b: PathBuf },
    /// Smoothed, MAD, slope and min-difference series from monitor histories.
    Indicators {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = HistoryColumn::Distance)]
        column: HistoryColumn,
    },
    /// ROC curve of indicator series against labelled windows.
    Roc {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Indicator CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate a synthetic fleet with an optional impulsive fault.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 6)]
        machines: usize,
        #[arg(long, default_value_t = 300)]
        segments: usize,
        #[arg(long, default_value_t = 4096)]
        segment_len: usize,
        /// Seconds between segments.
        #[arg(long, default_value_t = 43_200)]
        cadence: i64,
        /// Index of the faulty machine.
        #[arg(long)]
        faulty: Option<usize>,
        /// Segment index at which the fault starts.
        #[arg(long, default_value_t = 150)]
        onset: usize,
    },
    /// Per-atom length, spectral peak and similarity to the closest other atom.
    AtomInfo {
        dictionary: PathBuf,
        #[arg(long, default_value_t = 12_800.0)]
        sample_rate: f64,
    },
}

fn effective_config(opts: &GlobalOpts) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &opts.config {
        cfg.apply_file(path)?;
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    let overrides = [
        ("seed", opts.seed.map(|v| v.to_string())),
        ("algorithm", opts.algo.clone()),
        ("eta", opts.eta.map(|v| v.to_string())),
        ("sparsity", opts.sparsity.map(|v| v.to_string())),
        ("rms_gate", opts.rms_gate.map(|v| v.to_string())),
        ("jobs", opts.jobs.map(|v| v.to_string())),
        ("format", opts.format.clone()),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli.opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    pool.install(|| match cli.command {
        Command::Train { input, output, first } => commands::train(&cfg, &input, &output, first),
        Command::Monitor {
            input,
            baseline,
            output,
            mode,
            export_codes,
        } => commands::monitor(&cfg, &input, &baseline, &output, mode, export_codes),
        Command::Distance { a, b } => {
            println!("{:.6}", commands::distance(&a, &b)?);
            Ok(())
        }
        Command::Indicators { input, output, column } => commands::indicators(&cfg, &input, &output, column),
        Command::Roc { labels, output, inputs } => {
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                cfg.echo(parent)?;
            }
            let auc = commands::roc(&inputs, &labels, &output)?;
            println!("auc={auc:?}");
            Ok(())
        }
        Command::Synth {
            output,
            machines,
            segments,
            segment_len,
            cadence,
            faulty,
            onset,
        } => {
            let args = SynthArgs {
                machines,
                segments,
                segment_len,
                cadence,
                faulty,
                onset,
            };
            commands::synth(&cfg, &args, &output)
        }
        Command::AtomInfo { dictionary, sample_rate } => {
            println!("atom_id,length,peak_hz,beta_deg");
            for r in commands::atom_info(&dictionary, sample_rate)? {
                let beta = r.beta_deg.map_or_else(|| "-".to_string(), |b| format!("{b:.3}"));
                println!("{},{},{:.1},{beta}", r.id, r.len, r.peak_hz);
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dictmon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
