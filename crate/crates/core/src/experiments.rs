//! Scoring, baselines, trip splits and the hyperparameter sweep.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive_cycle::VelocityProfile;
use crate::features::{Dataset, FeatureConfig, TripContext};
use crate::nn::{pretrain_sae, train_predictor, SaeNetwork, TrainHyperparams, TrainedModel};
use crate::route::Route;
use crate::tmc::{sample_tmc, TmcHistory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("length mismatch: {predicted} predicted vs {actual} actual")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("nothing to score")]
    EmptyInput,
    #[error("need at least 2 trips to split, got {0}")]
    TooFewTrips(usize),
    #[error("no TMC data for standard point {index} (code {code:?})")]
    NoData { index: usize, code: String },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, ExperimentError> {
    if predicted.len() != actual.len() {
        return Err(ExperimentError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let sq: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok((sq / predicted.len() as f64).sqrt())
}

/// RMSE over indices `>= skip`, the window every model and baseline is
/// scored on.
pub fn scored_rmse(predicted: &[f64], actual: &[f64], skip: usize) -> Result<f64, ExperimentError> {
    if predicted.len() != actual.len() {
        return Err(ExperimentError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let from = skip.min(predicted.len());
    rmse(&predicted[from..], &actual[from..])
}

fn baseline_profile(name: &str, start_time: i64, speeds: Vec<f64>) -> VelocityProfile {
    VelocityProfile {
        trip_id: name.to_string(),
        start_time,
        start_speed_mps: speeds.first().copied().unwrap_or(0.0),
        speeds_mps: speeds,
    }
}

/// Section speeds at trip start, held along the whole route.
pub fn baseline_tmc_direct(route: &Route, history: &TmcHistory, trip_start: i64) -> Result<VelocityProfile, ExperimentError> {
    let speeds = route
        .standard_points()
        .iter()
        .map(|sp| {
            sample_tmc(history, &sp.tmc_code, trip_start).map_err(|_| ExperimentError::NoData {
                index: sp.index,
                code: sp.tmc_code.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(baseline_profile("tmc_direct", trip_start, speeds))
}

/// Mean current speed over the whole history of each point's section.
pub fn baseline_average_speed(route: &Route, history: &TmcHistory) -> Result<VelocityProfile, ExperimentError> {
    let speeds = route
        .standard_points()
        .iter()
        .map(|sp| match history.series(&sp.tmc_code) {
            Some(s) if !s.is_empty() => Ok(s.iter().map(|o| o.current_speed_mps).sum::<f64>() / s.len() as f64),
            _ => Err(ExperimentError::NoData {
                index: sp.index,
                code: sp.tmc_code.clone(),
            }),
        })
        .collect::<Result<_, _>>()?;
    Ok(baseline_profile("average_speed", 0, speeds))
}

pub fn baseline_posted_speed(route: &Route) -> VelocityProfile {
    let speeds = route.standard_points().iter().map(|sp| sp.speed_limit_mps).collect();
    baseline_profile("posted_speed", 0, speeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    TmcDirect,
    AverageSpeed,
    PostedSpeed,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::TmcDirect, Baseline::AverageSpeed, Baseline::PostedSpeed];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::TmcDirect => "tmc_direct",
            Baseline::AverageSpeed => "average_speed",
            Baseline::PostedSpeed => "posted_speed",
        }
    }

    pub fn predict(self, route: &Route, history: &TmcHistory, trip_start: i64) -> Result<Vec<f64>, ExperimentError> {
        Ok(match self {
            Baseline::TmcDirect => baseline_tmc_direct(route, history, trip_start)?.speeds_mps,
            Baseline::AverageSpeed => baseline_average_speed(route, history)?.speeds_mps,
            Baseline::PostedSpeed => baseline_posted_speed(route).speeds_mps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitStrategy {
    LeaveOneOut,
    /// One random split holding out `test_fraction` of the trips.
    Fraction { test_fraction: f64 },
}

impl Default for SplitStrategy {
    fn default() -> Self {
        SplitStrategy::LeaveOneOut
    }
}

/// Trip indices for one train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_trips(n_trips: usize, strategy: SplitStrategy, seed: u64) -> Result<Vec<Fold>, ExperimentError> {
    if n_trips < 2 {
        return Err(ExperimentError::TooFewTrips(n_trips));
    }
    match strategy {
        SplitStrategy::LeaveOneOut => Ok((0..n_trips)
            .map(|t| Fold {
                train: (0..n_trips).filter(|&i| i != t).collect(),
                test: vec![t],
            })
            .collect()),
        SplitStrategy::Fraction { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(ExperimentError::InvalidSplit(format!(
                    "test_fraction must be in (0, 1), got {test_fraction}"
                )));
            }
            let mut idx: Vec<usize> = (0..n_trips).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_test = ((n_trips as f64 * test_fraction).round() as usize).clamp(1, n_trips - 1);
            let mut test = idx[..n_test].to_vec();
            let mut train = idx[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            Ok(vec![Fold { train, test }])
        }
    }
}

/// Encoder widths plus the head's hidden width.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub encoder_sizes: Vec<usize>,
    pub head_hidden: usize,
}

impl ArchSpec {
    pub fn label(&self) -> String {
        let enc: Vec<String> = self.encoder_sizes.iter().map(usize::to_string).collect();
        format!("{}-h{}", enc.join("x"), self.head_hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub pretrain: TrainHyperparams,
    pub supervised: TrainHyperparams,
    pub fine_tune_encoder: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            pretrain: TrainHyperparams::pretraining(),
            supervised: TrainHyperparams::supervised(),
            fine_tune_encoder: true,
        }
    }
}

/// Mixes values into a seed (splitmix64 finalizer per step).
pub fn mix_seed(seed: u64, values: &[u64]) -> u64 {
    values.iter().fold(seed, |acc, &v| {
        let mut z = (acc ^ v).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// Builds features from `train` (normalizers fitted on them alone), pretrains
/// the encoder stack and trains the regression head.
pub fn train_model(
    route: &Route,
    history: &TmcHistory,
    train: &[VelocityProfile],
    config: &FeatureConfig,
    arch: &ArchSpec,
    settings: &TrainSettings,
    seed: u64,
) -> crate::Result<TrainedModel> {
    let data = Dataset::build(route, history, train, config)?;
    train_on_dataset(&data, arch, settings, seed)
}

/// Pretraining plus supervised training on an already assembled dataset,
/// using its stored normalizers.
pub fn train_on_dataset(data: &Dataset, arch: &ArchSpec, settings: &TrainSettings, seed: u64) -> crate::Result<TrainedModel> {
    let inputs = data
        .rows
        .iter()
        .map(|r| data.input_normalizer.apply(&r.values))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<f64> = data
        .rows
        .iter()
        .map(|r| data.target_normalizer.apply_one(0, r.target_mps))
        .collect();
    let stack = pretrain_sae(&inputs, &arch.encoder_sizes, &settings.pretrain.with_seed(mix_seed(seed, &[1])))?;
    let net = SaeNetwork::with_encoder(stack.layers, arch.head_hidden, mix_seed(seed, &[2]))?;
    let fit = train_predictor(
        net,
        &inputs,
        &targets,
        &settings.supervised.with_seed(mix_seed(seed, &[3])),
        settings.fine_tune_encoder,
    )?;
    if let Some(last) = fit.loss_curve.last() {
        log::debug!("trained {} on {} rows, final loss {last:.3e}", arch.label(), inputs.len());
    }
    Ok(TrainedModel::new(
        fit.network,
        data.config,
        data.input_normalizer.clone(),
        data.target_normalizer.clone(),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    ClosedLoop,
    TeacherForced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predicted: Vec<f64>,
    pub rmse: f64,
    /// Number of scored points.
    pub q: usize,
}

/// Predicts the trip's profile and scores it over indices `>= r`.
pub fn evaluate_model(
    model: &TrainedModel,
    route: &Route,
    history: &TmcHistory,
    trip: &VelocityProfile,
    mode: EvalMode,
) -> crate::Result<Evaluation> {
    let ctx = TripContext::from(trip);
    let predicted = match mode {
        EvalMode::ClosedLoop => model.predict_profile(route, history, &ctx)?,
        EvalMode::TeacherForced => model.predict_teacher_forced(route, history, &ctx, &trip.speeds_mps)?,
    };
    let r = model.feature_config.history_r;
    let rmse = scored_rmse(&predicted, &trip.speeds_mps, r)?;
    Ok(Evaluation {
        q: predicted.len().saturating_sub(r),
        predicted,
        rmse,
    })
}

/// Feature and architecture axes of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lookahead_n: Vec<usize>,
    pub tmc_k: Vec<usize>,
    pub tmc_m: Vec<usize>,
    pub history_r: Vec<usize>,
    pub encoder_sizes: Vec<Vec<usize>>,
    pub head_hidden: Vec<usize>,
    pub tmc_sample_period_s: f64,
    /// Permits values outside the published ranges.
    pub allow_out_of_range: bool,
}

pub const LOOKAHEAD_RANGE: (usize, usize) = (0, 5);
pub const TMC_K_RANGE: (usize, usize) = (1, 5);
pub const TMC_M_RANGE: (usize, usize) = (0, 10);
pub const HISTORY_R_RANGE: (usize, usize) = (1, 10);

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lookahead_n: vec![2],
            tmc_k: vec![2],
            tmc_m: vec![2],
            history_r: vec![3],
            encoder_sizes: vec![vec![16]],
            head_hidden: vec![8],
            tmc_sample_period_s: crate::tmc::DEFAULT_SAMPLE_PERIOD_S,
            allow_out_of_range: false,
        }
    }
}

/// One grid point, with a stable id in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub config_id: String,
    pub features: FeatureConfig,
    pub arch: ArchSpec,
}

impl SweepGrid {
    /// Every value in the published ranges, with the given architectures.
    pub fn full(encoder_sizes: Vec<Vec<usize>>, head_hidden: Vec<usize>) -> Self {
        let span = |(a, b): (usize, usize)| (a..=b).collect::<Vec<_>>();
        Self {
            lookahead_n: span(LOOKAHEAD_RANGE),
            tmc_k: span(TMC_K_RANGE),
            tmc_m: span(TMC_M_RANGE),
            history_r: span(HISTORY_R_RANGE),
            encoder_sizes,
            head_hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let axes: [(&str, &[usize], (usize, usize)); 4] = [
            ("lookahead_n", &self.lookahead_n, LOOKAHEAD_RANGE),
            ("tmc_k", &self.tmc_k, TMC_K_RANGE),
            ("tmc_m", &self.tmc_m, TMC_M_RANGE),
            ("history_r", &self.history_r, HISTORY_R_RANGE),
        ];
        for (name, vals, (lo, hi)) in axes {
            if vals.is_empty() {
                return Err(ExperimentError::InvalidGrid(format!("{name} is empty")));
            }
            if !self.allow_out_of_range {
                if let Some(v) = vals.iter().find(|&&v| v < lo || v > hi) {
                    return Err(ExperimentError::InvalidGrid(format!(
                        "{name} value {v} outside [{lo}, {hi}] (set allow_out_of_range to override)"
                    )));
                }
            }
        }
        if self.encoder_sizes.is_empty() || self.head_hidden.is_empty() {
            return Err(ExperimentError::InvalidGrid("no architectures".into()));
        }
        if self.encoder_sizes.iter().any(|e| e.is_empty() || e.contains(&0)) || self.head_hidden.contains(&0) {
            return Err(ExperimentError::InvalidGrid("zero-width or empty encoder".into()));
        }
        Ok(())
    }

    pub fn architectures(&self) -> Vec<ArchSpec> {
        self.encoder_sizes
            .iter()
            .flat_map(|e| {
                self.head_hidden.iter().map(move |&h| ArchSpec {
                    encoder_sizes: e.clone(),
                    head_hidden: h,
                })
            })
            .collect()
    }

    pub fn feature_configs(&self) -> Result<Vec<FeatureConfig>, ExperimentError> {
        let mut out = Vec::new();
        for &n in &self.lookahead_n {
            for &k in &self.tmc_k {
                for &m in &self.tmc_m {
                    for &r in &self.history_r {
                        let c = FeatureConfig::new(n, k, m, r, self.tmc_sample_period_s)
                            .map_err(|e| ExperimentError::InvalidGrid(e.to_string()))?;
                        out.push(c);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>, ExperimentError> {
        self.validate()?;
        let archs = self.architectures();
        let mut out = Vec::new();
        for features in self.feature_configs()? {
            for arch in &archs {
                out.push(SweepPoint {
                    config_id: format!("cfg{:04}", out.len()),
                    features,
                    arch: arch.clone(),
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub split: SplitStrategy,
    pub train: TrainSettings,
    pub eval_mode: EvalMode,
    /// Rank configs by RMSE pooled over all scored points instead of the
    /// mean of per-trip RMSEs.
    pub pooled: bool,
    pub master_seed: u64,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            split: SplitStrategy::default(),
            train: TrainSettings::default(),
            eval_mode: EvalMode::default(),
            pooled: false,
            master_seed: 0,
            workers: 0,
        }
    }
}

/// One test trip's score under one config or baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct TripScore {
    pub config_id: String,
    pub fold: usize,
    pub trip_id: String,
    pub rmse_mps: f64,
    pub q: usize,
    /// Sum of squared errors over the scored points.
    pub sse: f64,
}

/// Per-fold row of `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub config_id: String,
    /// `None` for baselines.
    pub features: Option<FeatureConfig>,
    pub r: usize,
    pub arch: String,
    pub fold: usize,
    pub rmse_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub rank: Option<usize>,
    pub config_id: String,
    pub features: Option<FeatureConfig>,
    pub r: usize,
    pub arch: String,
    pub mean_rmse_mps: f64,
    pub pooled_rmse_mps: f64,
    pub q: usize,
    pub trips: usize,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

impl SummaryRow {
    pub fn is_baseline(&self) -> bool {
        self.features.is_none()
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Predicted profiles of the best config and the baselines for every test trip.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub trip_id: String,
    pub sp_index: usize,
    pub actual_mps: f64,
    pub predicted_mps: f64,
    pub baselines_mps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub fold_rows: Vec<FoldRow>,
    pub trip_scores: Vec<TripScore>,
    pub summary: Vec<SummaryRow>,
    pub best_config: Option<String>,
    pub profiles: Vec<ProfileRow>,
}

fn baseline_id(b: Baseline, r: usize, multi_r: bool) -> String {
    if multi_r {
        format!("baseline_{}_r{r}", b.name())
    } else {
        format!("baseline_{}", b.name())
    }
}

struct JobOutput {
    scores: Vec<TripScore>,
    profiles: Vec<(usize, Vec<f64>)>,
}

fn run_job(
    point: &SweepPoint,
    fold_idx: usize,
    fold: &Fold,
    route: &Route,
    history: &TmcHistory,
    profiles: &[VelocityProfile],
    settings: &SweepSettings,
) -> crate::Result<JobOutput> {
    let train: Vec<VelocityProfile> = fold.train.iter().map(|&i| profiles[i].clone()).collect();
    let f = &point.features;
    let mut key = vec![f.lookahead_n as u64, f.tmc_k as u64, f.tmc_m as u64, f.history_r as u64, fold_idx as u64];
    key.push(u64::MAX);
    key.extend(point.arch.encoder_sizes.iter().map(|&s| s as u64));
    key.push(point.arch.head_hidden as u64);
    let seed = mix_seed(settings.master_seed, &key);
    let model = train_model(route, history, &train, f, &point.arch, &settings.train, seed)?;
    let mut out = JobOutput {
        scores: Vec::new(),
        profiles: Vec::new(),
    };
    for &t in &fold.test {
        let trip = &profiles[t];
        let ev = evaluate_model(&model, route, history, trip, settings.eval_mode)?;
        out.scores.push(TripScore {
            config_id: point.config_id.clone(),
            fold: fold_idx,
            trip_id: trip.trip_id.clone(),
            rmse_mps: ev.rmse,
            q: ev.q,
            sse: ev.rmse * ev.rmse * ev.q as f64,
        });
        out.profiles.push((t, ev.predicted));
    }
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn summarize(
    config_id: String,
    features: Option<FeatureConfig>,
    r: usize,
    arch: String,
    scores: &[&TripScore],
    failure: Option<String>,
) -> SummaryRow {
    let q: usize = scores.iter().map(|s| s.q).sum();
    SummaryRow {
        rank: None,
        config_id,
        features,
        r,
        arch,
        mean_rmse_mps: mean(scores.iter().map(|s| s.rmse_mps)),
        pooled_rmse_mps: (scores.iter().map(|s| s.sse).sum::<f64>() / q as f64).sqrt(),
        q: scores.first().map_or(0, |s| s.q),
        trips: scores.len(),
        status: failure.map_or_else(|| "ok".to_string(), |e| format!("failed: {e}")),
    }
}

/// Trains and scores every grid point on every fold, plus the three
/// baselines on the same test trips and scoring windows.
///
/// A failing (config, fold) job marks its config as failed in the summary
/// without stopping the sweep. Output order and values depend only on the
/// inputs and the master seed, not on the number of workers.
pub fn run_sweep(
    grid: &SweepGrid,
    profiles: &[VelocityProfile],
    route: &Route,
    history: &TmcHistory,
    settings: &SweepSettings,
) -> crate::Result<RmseReport> {
    let points = grid.points()?;
    let folds = split_trips(profiles.len(), settings.split, settings.master_seed)?;
    if let Some(p) = profiles.iter().find(|p| p.speeds_mps.len() != route.len()) {
        return Err(crate::features::FeatureError::DimensionMismatch {
            expected: route.len(),
            actual: p.speeds_mps.len(),
        }
        .into());
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    log::info!(
        "sweep: {} configs x {} folds on {} trips",
        points.len(),
        folds.len(),
        profiles.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| ExperimentError::InvalidGrid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<JobOutput, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, f)| {
                run_job(&points[p], f, &folds[f], route, history, profiles, settings).map_err(|e| {
                    log::warn!("{} fold {f} failed: {e}", points[p].config_id);
                    e.to_string()
                })
            })
            .collect()
    });

    // Baselines do not depend on the config; score them once per distinct r.
    let mut rs: Vec<usize> = points.iter().map(|p| p.features.history_r).collect();
    rs.sort_unstable();
    rs.dedup();
    let multi_r = rs.len() > 1;
    let mut baseline_preds: Vec<[Vec<f64>; 3]> = Vec::with_capacity(profiles.len());
    for p in profiles {
        let mut row: [Vec<f64>; 3] = Default::default();
        for (slot, b) in row.iter_mut().zip(Baseline::ALL) {
            *slot = b.predict(route, history, p.start_time)?;
        }
        baseline_preds.push(row);
    }

    let mut report = RmseReport {
        fold_rows: Vec::new(),
        trip_scores: Vec::new(),
        summary: Vec::new(),
        best_config: None,
        profiles: Vec::new(),
    };
    let fold_rmse = |scores: &[TripScore]| mean(scores.iter().map(|s| s.rmse_mps));

    for (pi, point) in points.iter().enumerate() {
        let mut scores = Vec::new();
        let mut failure = None;
        for f in 0..folds.len() {
            match &results[pi * folds.len() + f] {
                Ok(out) => {
                    report.fold_rows.push(FoldRow {
                        config_id: point.config_id.clone(),
                        features: Some(point.features),
                        r: point.features.history_r,
                        arch: point.arch.label(),
                        fold: f,
                        rmse_mps: fold_rmse(&out.scores),
                    });
                    scores.extend(out.scores.iter().cloned());
                }
                Err(e) => {
                    failure.get_or_insert_with(|| format!("fold {f}: {e}"));
                }
            }
        }
        let refs: Vec<&TripScore> = scores.iter().collect();
        report.summary.push(summarize(
            point.config_id.clone(),
            Some(point.features),
            point.features.history_r,
            point.arch.label(),
            &refs,
            failure,
        ));
        report.trip_scores.extend(scores);
    }

    for &r in &rs {
        for (bi, b) in Baseline::ALL.into_iter().enumerate() {
            let id = baseline_id(b, r, multi_r);
            let mut scores = Vec::new();
            for (f, fold) in folds.iter().enumerate() {
                let fold_scores = fold
                    .test
                    .iter()
                    .map(|&t| {
                        let p = &profiles[t];
                        let e = scored_rmse(&baseline_preds[t][bi], &p.speeds_mps, r)?;
                        let q = p.speeds_mps.len().saturating_sub(r);
                        Ok(TripScore {
                            config_id: id.clone(),
                            fold: f,
                            trip_id: p.trip_id.clone(),
                            rmse_mps: e,
                            q,
                            sse: e * e * q as f64,
                        })
                    })
                    .collect::<Result<Vec<_>, ExperimentError>>()?;
                report.fold_rows.push(FoldRow {
                    config_id: id.clone(),
                    features: None,
                    r,
                    arch: b.name().to_string(),
                    fold: f,
                    rmse_mps: fold_rmse(&fold_scores),
                });
                scores.extend(fold_scores);
            }
            let refs: Vec<&TripScore> = scores.iter().collect();
            report.summary.push(summarize(id, None, r, b.name().to_string(), &refs, None));
            report.trip_scores.extend(scores);
        }
    }

    // Rank successful rows; failed rows stay unranked at the end.
    let metric = |s: &SummaryRow| if settings.pooled { s.pooled_rmse_mps } else { s.mean_rmse_mps };
    report.summary.sort_by(|a, b| {
        b.ok()
            .cmp(&a.ok())
            .then(metric(a).total_cmp(&metric(b)))
            .then_with(|| a.config_id.cmp(&b.config_id))
    });
    let mut rank = 0;
    for row in report.summary.iter_mut().filter(|r| r.ok()) {
        rank += 1;
        row.rank = Some(rank);
    }
    report.best_config = report
        .summary
        .iter()
        .find(|r| r.ok() && !r.is_baseline())
        .map(|r| r.config_id.clone());

    if let Some(best) = &report.best_config {
        let pi = points.iter().position(|p| &p.config_id == best).unwrap();
        for f in 0..folds.len() {
            if let Ok(out) = &results[pi * folds.len() + f] {
                for (t, pred) in &out.profiles {
                    let p = &profiles[*t];
                    for (i, (&a, &v)) in p.speeds_mps.iter().zip(pred).enumerate() {
                        report.profiles.push(ProfileRow {
                            trip_id: p.trip_id.clone(),
                            sp_index: i,
                            actual_mps: a,
                            predicted_mps: v,
                            baselines_mps: [
                                baseline_preds[*t][0][i],
                                baseline_preds[*t][1][i],
                                baseline_preds[*t][2][i],
                            ],
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRIP_RMSE_FILE: &str = "trip_rmse.csv";
pub const PROFILES_FILE: &str = "profiles.csv";

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> crate::Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

impl RmseReport {
    /// Writes `report.csv`, `summary.csv`, `trip_rmse.csv` and `profiles.csv`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;

        let path = dir.join(REPORT_FILE);
        let io = |e| crate::Error::io(&path, e);
        let mut w = create(&path)?;
        writeln!(w, "config_id,n,k,m,r,arch,fold,rmse_mps").map_err(io)?;
        for row in &self.fold_rows {
            let f = row.features;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.config_id,
                opt(f.map(|f| f.lookahead_n)),
                opt(f.map(|f| f.tmc_k)),
                opt(f.map(|f| f.tmc_m)),
                row.r,
                row.arch,
                row.fold,
                row.rmse_mps
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)?;

        let path = dir.join(SUMMARY_FILE);
        let io = |e| crate::Error::io(&path, e);
        let mut w = create(&path)?;
        writeln!(w, "rank,config_id,n,k,m,r,arch,mean_rmse_mps,pooled_rmse_mps,q,trips,status").map_err(io)?;
        for row in &self.summary {
            let f = row.features;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
                opt(row.rank),
                row.config_id,
                opt(f.map(|f| f.lookahead_n)),
                opt(f.map(|f| f.tmc_k)),
                opt(f.map(|f| f.tmc_m)),
                row.r,
                row.arch,
                row.mean_rmse_mps,
                row.pooled_rmse_mps,
                row.q,
                row.trips,
                row.status.replace('"', "'")
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)?;

        let path = dir.join(TRIP_RMSE_FILE);
        let io = |e| crate::Error::io(&path, e);
        let mut w = create(&path)?;
        writeln!(w, "config_id,fold,trip_id,q,rmse_mps").map_err(io)?;
        for s in &self.trip_scores {
            writeln!(w, "{},{},{},{},{}", s.config_id, s.fold, s.trip_id, s.q, s.rmse_mps).map_err(io)?;
        }
        w.flush().map_err(io)?;

        let path = dir.join(PROFILES_FILE);
        let io = |e| crate::Error::io(&path, e);
        let mut w = create(&path)?;
        writeln!(
            w,
            "config_id,trip_id,sp_index,actual_mps,predicted_mps,tmc_direct_mps,average_speed_mps,posted_speed_mps"
        )
        .map_err(io)?;
        let best = self.best_config.as_deref().unwrap_or("");
        for p in &self.profiles {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                best,
                p.trip_id,
                p.sp_index,
                p.actual_mps,
                p.predicted_mps,
                p.baselines_mps[0],
                p.baselines_mps[1],
                p.baselines_mps[2]
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn summary_row(&self, config_id: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.config_id == config_id)
    }
}
