//! Driver speed-profile prediction over a fixed, repeatedly driven route.
//!
//! The pipeline runs in stages, one module per stage:
//!
//! | module          | stage                                                          |
//! |-----------------|----------------------------------------------------------------|
//! | [`route`]       | shape-point geometry resampled into equally spaced standard points |
//! | [`tmc`]         | route-to-section mapping and TMC history extraction            |
//! | [`drive_cycle`] | GPS trip logs matched to the route and reduced to velocity profiles |
//! | [`features`]    | geometric / TMC / driver-history input vectors and normalization |
//! | [`nn`]          | stacked autoencoder pretraining and the regression head        |
//! | [`experiments`] | RMSE scoring, baselines, splits and the hyperparameter sweep   |
//! | [`synth`]       | deterministic synthetic worlds, traffic and driver personas     |

pub mod drive_cycle;
pub mod experiments;
pub mod features;
pub mod nn;
pub mod route;
pub mod synth;
pub mod tmc;

use std::path::PathBuf;

use thiserror::Error;

pub use drive_cycle::{TripLog, VelocityProfile};
pub use features::{FeatureConfig, FeatureVector, Normalizer};
pub use nn::{SaeNetwork, TrainHyperparams};
pub use route::{GeoPoint, Route, ShapePoint, StandardPoint};
pub use tmc::{TmcHistory, TmcObservation, TmcSection};

/// Crate-wide error. Pure operations return their module error; anything
/// touching files returns this.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input {path}: {source}")]
    MissingInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason} (content: {content:?})")]
    Parse {
        file: PathBuf,
        line: u64,
        content: String,
        reason: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Route(#[from] route::RouteError),
    #[error(transparent)]
    Tmc(#[from] tmc::TmcError),
    #[error(transparent)]
    DriveCycle(#[from] drive_cycle::DriveCycleError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Experiment(#[from] experiments::ExperimentError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput { path, source }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(
        file: impl Into<PathBuf>,
        line: u64,
        content: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            content: content.into(),
            reason: reason.into(),
        }
    }

    /// Short dotted error class, stable enough for scripts to match on.
    pub fn class(&self) -> &'static str {
        match self {
            Error::MissingInput { .. } => "io.missing_input",
            Error::Io { .. } => "io.failure",
            Error::Parse { .. } => "parse.invalid_record",
            Error::Json { .. } => "parse.invalid_json",
            Error::Route(_) => "route.invalid",
            Error::Tmc(tmc::TmcError::UncoveredPoint { .. }) => "tmc.uncovered_point",
            Error::Tmc(tmc::TmcError::NoData { .. }) => "tmc.no_data",
            Error::Tmc(_) => "tmc.invalid",
            Error::DriveCycle(_) => "drive_cycle.invalid",
            Error::Feature(_) => "features.invalid",
            Error::Nn(nn::NnError::NonFiniteLoss { .. }) => "nn.non_finite_loss",
            Error::Nn(_) => "nn.invalid",
            Error::Experiment(_) => "experiments.invalid",
            Error::Synth(_) => "synth.invalid_params",
        }
    }
}

/// Opens a csv reader over `path`, mapping a missing file to [`Error::MissingInput`].
pub(crate) fn csv_reader(path: &std::path::Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

pub(crate) fn csv_writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub(crate) fn csv_error(path: &std::path::Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::parse(path, line, "", format!("{kind:?}")),
    }
}
