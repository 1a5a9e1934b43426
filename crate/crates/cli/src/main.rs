//! `speedprof`: batch pipeline from synthetic or recorded inputs to trained
//! models, predicted profiles and sweep reports.

mod commands;
mod config;
mod guard;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// A failure as reported to the caller: a dotted class, a message and an
/// exit code (2 for usage, config and missing inputs, 1 otherwise).
#[derive(Debug)]
pub struct Failure {
    pub class: String,
    pub message: String,
    pub code: u8,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            class: "config.invalid".into(),
            message: message.into(),
            code: 2,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            class: "usage.invalid".into(),
            message: message.into(),
            code: 2,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        let missing = err.kind() == std::io::ErrorKind::NotFound;
        Self {
            class: if missing { "io.missing_input" } else { "io.failure" }.into(),
            message: format!("{}: {err}", path.display()),
            code: if missing { 2 } else { 1 },
        }
    }

    /// Requires `path` to exist before any work starts.
    pub fn require(path: &Path) -> Result<(), Self> {
        std::fs::metadata(path).map(|_| ()).map_err(|e| Self::io(path, e))
    }
}

impl From<speedprof::Error> for Failure {
    fn from(e: speedprof::Error) -> Self {
        let code = match e {
            speedprof::Error::MissingInput { .. } => 2,
            _ => 1,
        };
        Self {
            class: e.class().into(),
            message: e.to_string(),
            code,
        }
    }
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                speedprof::Error::from(e).into()
            }
        }
    )*};
}

core_error!(
    speedprof::route::RouteError,
    speedprof::tmc::TmcError,
    speedprof::drive_cycle::DriveCycleError,
    speedprof::features::FeatureError,
    speedprof::nn::NnError,
    speedprof::experiments::ExperimentError,
    speedprof::synth::SynthError
);

#[derive(Parser)]
#[command(name = "speedprof", version, about = "Driver speed-profile prediction pipeline")]
struct Cli {
    /// Print a one-object JSON summary of the run on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// Log level for stderr (error, warn, info, debug, trace). RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

/// Config file plus overrides, shared by every config-driven subcommand.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON run configuration. Built-in defaults are used when omitted;
    /// relative paths inside it resolve against its directory.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config value, e.g. `--set features.history_r=4` or
    /// `--set grid.history_r=[2,3]`. Values parse as JSON, else as a string.
    /// Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world (route, sections, TMC archive) and trips.
    SynthWorld(commands::SynthWorldArgs),
    /// Map a route onto TMC sections and extract their history from an archive.
    ExtractTmc(commands::ExtractTmcArgs),
    /// Turn trip logs into velocity profiles and feature vectors.
    BuildDataset(commands::BuildDatasetArgs),
    /// Pretrain and fine-tune one configuration on a dataset.
    Train(commands::TrainArgs),
    /// Predict a full speed profile for a trip starting at a given time.
    Predict(commands::PredictArgs),
    /// Run the hyperparameter grid and write the RMSE report.
    Sweep(commands::SweepArgs),
    /// Render a sweep report as a summary table and optional SVG plots.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            return report(&Failure::usage(first.trim_start_matches("error: ")));
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();

    if !matches!(cli.command, Command::Sweep(_)) {
        // Only the sweep fans out; everything else stays on one thread.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }

    let result = match cli.command {
        Command::SynthWorld(a) => commands::synth_world(&a),
        Command::ExtractTmc(a) => commands::extract_tmc(&a),
        Command::BuildDataset(a) => commands::build_dataset(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(summary) => {
            if cli.json {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> ExitCode {
    let message = f.message.replace('\n', " ");
    eprintln!("error[{}]: {message}", f.class);
    ExitCode::from(f.code)
}
