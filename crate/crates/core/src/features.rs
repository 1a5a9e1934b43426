//! Network input assembly.
//!
//! Every input vector has three blocks in fixed order:
//!
//! 1. geometry of the current standard point and the next `n`, five values each
//!    (distance to upstream shape point, curvature, altitude, lanes, speed limit);
//! 2. TMC speeds for the `2k + 1` points centred on the current one, at the
//!    trip start and at the `m` preceding sample times, newest first;
//! 3. the driver's speed at the `r` previous standard points, nearest first.
//!
//! Indices outside the route replicate the nearest standard point. History
//! slots before the first standard point take the trip-start speed.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive_cycle::VelocityProfile;
use crate::route::Route;
use crate::tmc::{sample_tmc, TmcError, TmcHistory};

pub const GEOMETRIC_FEATURES: usize = 5;
pub const MAX_LOOKAHEAD: usize = 5;

/// Lower/upper ends of the normalized range.
pub const NORM_LOW: f64 = 0.1;
pub const NORM_HIGH: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("standard point index {index} outside route of {len} points")]
    InvalidIndex { index: usize, len: usize },
    #[error("driver history has {have} speeds, need {need} before index {index}")]
    ShortHistory { index: usize, have: usize, need: usize },
    #[error("cannot fit a normalizer on an empty training set")]
    EmptyTrainingSet,
    #[error("vector has {actual} values, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("TMC lookup for standard point {index}: {source}")]
    Tmc {
        index: usize,
        #[source]
        source: TmcError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureConfig")]
pub struct FeatureConfig {
    pub lookahead_n: usize,
    pub tmc_k: usize,
    pub tmc_m: usize,
    pub history_r: usize,
    pub tmc_sample_period_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatureConfig {
    lookahead_n: usize,
    tmc_k: usize,
    tmc_m: usize,
    history_r: usize,
    #[serde(default = "default_period")]
    tmc_sample_period_s: f64,
}

fn default_period() -> f64 {
    crate::tmc::DEFAULT_SAMPLE_PERIOD_S
}

impl TryFrom<RawFeatureConfig> for FeatureConfig {
    type Error = FeatureError;

    fn try_from(r: RawFeatureConfig) -> Result<Self, Self::Error> {
        FeatureConfig::new(r.lookahead_n, r.tmc_k, r.tmc_m, r.history_r, r.tmc_sample_period_s)
    }
}

impl FeatureConfig {
    pub fn new(
        lookahead_n: usize,
        tmc_k: usize,
        tmc_m: usize,
        history_r: usize,
        tmc_sample_period_s: f64,
    ) -> Result<Self, FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if lookahead_n > MAX_LOOKAHEAD {
            return bad(format!("lookahead_n must be in 0..=5, got {lookahead_n}"));
        }
        if tmc_k < 1 {
            return bad("tmc_k must be >= 1".into());
        }
        if history_r < 1 {
            return bad("history_r must be >= 1".into());
        }
        if !(tmc_sample_period_s > 0.0 && tmc_sample_period_s.is_finite()) {
            return bad(format!("tmc_sample_period_s must be positive, got {tmc_sample_period_s}"));
        }
        Ok(Self {
            lookahead_n,
            tmc_k,
            tmc_m,
            history_r,
            tmc_sample_period_s,
        })
    }

    pub fn geometric_len(&self) -> usize {
        GEOMETRIC_FEATURES * (self.lookahead_n + 1)
    }

    pub fn tmc_len(&self) -> usize {
        (2 * self.tmc_k + 1) * (self.tmc_m + 1)
    }

    pub fn input_dimension(&self) -> usize {
        self.geometric_len() + self.tmc_len() + self.history_r
    }
}

/// `5(n+1) + (2k+1)(m+1) + r`.
pub fn input_dimension(config: &FeatureConfig) -> usize {
    config.input_dimension()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Driver speed at the current point, when known.
    pub target: Option<f64>,
}

/// What is known about a trip when it starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripContext {
    pub start_time: i64,
    pub start_speed_mps: f64,
}

impl From<&VelocityProfile> for TripContext {
    fn from(p: &VelocityProfile) -> Self {
        Self {
            start_time: p.start_time,
            start_speed_mps: p.start_speed_mps,
        }
    }
}

/// Builds the input vector for standard point `sp_index`.
///
/// `profile_prefix` must hold the driver's speeds for at least the `r`
/// points preceding `sp_index` (or all of them near the route start); values
/// at `sp_index` and beyond are never read.
pub fn assemble_input(
    route: &Route,
    history: &TmcHistory,
    trip: &TripContext,
    profile_prefix: &[f64],
    sp_index: usize,
    config: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let sps = route.standard_points();
    let len = sps.len();
    if sp_index >= len {
        return Err(FeatureError::InvalidIndex { index: sp_index, len });
    }
    let need = sp_index.min(config.history_r);
    if profile_prefix.len() < sp_index {
        return Err(FeatureError::ShortHistory {
            index: sp_index,
            have: profile_prefix.len(),
            need,
        });
    }
    let last = len - 1;
    let mut values = Vec::with_capacity(config.input_dimension());

    for q in sp_index..=sp_index + config.lookahead_n {
        values.extend_from_slice(&sps[q.min(last)].geometric_features());
    }

    let k = config.tmc_k as isize;
    for j in 0..=config.tmc_m {
        let t = trip.start_time - (j as f64 * config.tmc_sample_period_s).round() as i64;
        for o in -k..=k {
            let q = (sp_index as isize + o).clamp(0, last as isize) as usize;
            let v = sample_tmc(history, &sps[q].tmc_code, t)
                .map_err(|source| FeatureError::Tmc { index: q, source })?;
            values.push(v);
        }
    }

    for back in 1..=config.history_r {
        values.push(match sp_index.checked_sub(back) {
            Some(q) => profile_prefix[q],
            None => trip.start_speed_mps,
        });
    }

    Ok(FeatureVector { values, target: None })
}

/// One row per standard point of a driven trip, targets set from the profile.
pub fn trip_vectors(
    route: &Route,
    history: &TmcHistory,
    profile: &VelocityProfile,
    config: &FeatureConfig,
) -> Result<Vec<FeatureVector>, FeatureError> {
    if profile.speeds_mps.len() != route.len() {
        return Err(FeatureError::DimensionMismatch {
            expected: route.len(),
            actual: profile.speeds_mps.len(),
        });
    }
    let ctx = TripContext::from(profile);
    (0..route.len())
        .map(|i| {
            let mut v = assemble_input(route, history, &ctx, &profile.speeds_mps[..i], i, config)?;
            v.target = Some(profile.speeds_mps[i]);
            Ok(v)
        })
        .collect()
}

/// Per-dimension affine map of the training range onto [0.1, 0.9].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, FeatureError> {
        let mut rows = rows.into_iter();
        let first = rows.next().ok_or(FeatureError::EmptyTrainingSet)?;
        let (mut min, mut max) = (first.to_vec(), first.to_vec());
        for r in rows {
            if r.len() != min.len() {
                return Err(FeatureError::DimensionMismatch {
                    expected: min.len(),
                    actual: r.len(),
                });
            }
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(r) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Normalizes one value of dimension `d`; out-of-range results clamp to [0, 1].
    pub fn apply_one(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[d], self.max[d]);
        if hi > lo {
            (NORM_LOW + (NORM_HIGH - NORM_LOW) * (v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn invert_one(&self, d: usize, y: f64) -> f64 {
        let (lo, hi) = (self.min[d], self.max[d]);
        if hi > lo {
            lo + (y - NORM_LOW) * (hi - lo) / (NORM_HIGH - NORM_LOW)
        } else {
            lo
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(v)?;
        Ok(v.iter().enumerate().map(|(d, &x)| self.apply_one(d, x)).collect())
    }

    pub fn invert(&self, v: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(v)?;
        Ok(v.iter().enumerate().map(|(d, &y)| self.invert_one(d, y)).collect())
    }

    fn check(&self, v: &[f64]) -> Result<(), FeatureError> {
        if v.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(())
    }
}

pub fn fit_normalizer<'a>(training: impl IntoIterator<Item = &'a [f64]>) -> Result<Normalizer, FeatureError> {
    Normalizer::fit(training)
}

pub fn apply_normalizer(norm: &Normalizer, v: &[f64]) -> Result<Vec<f64>, FeatureError> {
    norm.apply(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub trip_id: String,
    pub sp_index: usize,
    pub target_mps: f64,
    pub values: Vec<f64>,
}

/// Feature rows plus the metadata stored in the JSON sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: FeatureConfig,
    pub input_normalizer: Normalizer,
    pub target_normalizer: Normalizer,
    pub rows: Vec<DatasetRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    feature_config: FeatureConfig,
    input_dimension: usize,
    rows: usize,
    input_normalizer: Normalizer,
    target_normalizer: Normalizer,
}

impl Dataset {
    /// Builds rows for every trip and fits both normalizers on them.
    pub fn build(
        route: &Route,
        history: &TmcHistory,
        profiles: &[VelocityProfile],
        config: &FeatureConfig,
    ) -> Result<Self, FeatureError> {
        let mut rows = Vec::new();
        for p in profiles {
            for (i, v) in trip_vectors(route, history, p, config)?.into_iter().enumerate() {
                rows.push(DatasetRow {
                    trip_id: p.trip_id.clone(),
                    sp_index: i,
                    target_mps: v.target.unwrap(),
                    values: v.values,
                });
            }
        }
        let input_normalizer = Normalizer::fit(rows.iter().map(|r| r.values.as_slice()))?;
        let targets: Vec<[f64; 1]> = rows.iter().map(|r| [r.target_mps]).collect();
        let target_normalizer = Normalizer::fit(targets.iter().map(|t| t.as_slice()))?;
        Ok(Self {
            config: *config,
            input_normalizer,
            target_normalizer,
            rows,
        })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `trip_id,sp_index,target_mps,v_0..v_{d-1}` rows to `path` and
    /// the sidecar to `<path>.json`.
    pub fn write(&self, path: &Path) -> crate::Result<()> {
        let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| crate::Error::io(path, e);
        let d = self.config.input_dimension();
        let cols: Vec<String> = (0..d).map(|i| format!("v_{i}")).collect();
        writeln!(w, "trip_id,sp_index,target_mps,{}", cols.join(",")).map_err(io)?;
        for r in &self.rows {
            write!(w, "{},{},{}", r.trip_id, r.sp_index, r.target_mps).map_err(io)?;
            for v in &r.values {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)?;

        let side = Self::sidecar_path(path);
        let meta = Sidecar {
            feature_config: self.config,
            input_dimension: d,
            rows: self.rows.len(),
            input_normalizer: self.input_normalizer.clone(),
            target_normalizer: self.target_normalizer.clone(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| crate::Error::Json {
            path: side.clone(),
            source: e,
        })?;
        std::fs::write(&side, json + "\n").map_err(|e| crate::Error::io(&side, e))
    }

    pub fn read(path: &Path) -> crate::Result<Self> {
        let side = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| crate::Error::io(&side, e))?;
        let meta: Sidecar = serde_json::from_str(&text).map_err(|e| crate::Error::Json {
            path: side.clone(),
            source: e,
        })?;
        let d = meta.feature_config.input_dimension();
        if meta.input_dimension != d || meta.input_normalizer.dim() != d {
            return Err(crate::Error::parse(&side, 0, "", "input dimension disagrees with feature config"));
        }
        let mut rdr = crate::csv_reader(path)?;
        let mut rows = Vec::new();
        let mut rec = csv::StringRecord::new();
        loop {
            match rdr.read_record(&mut rec) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => return Err(crate::csv_error(path, e)),
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |reason: &str| crate::Error::parse(path, line, rec.iter().collect::<Vec<_>>().join(","), reason);
            if rec.len() != d + 3 {
                return Err(bad("wrong number of fields"));
            }
            let sp_index = rec[1].parse().map_err(|_| bad("invalid sp_index"))?;
            let nums = rec
                .iter()
                .skip(2)
                .map(|f| f.parse::<f64>().ok())
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| bad("non-numeric value"))?;
            rows.push(DatasetRow {
                trip_id: rec[0].to_string(),
                sp_index,
                target_mps: nums[0],
                values: nums[1..].to_vec(),
            });
        }
        Ok(Self {
            config: meta.feature_config,
            input_normalizer: meta.input_normalizer,
            target_normalizer: meta.target_normalizer,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::test_support::straight;
    use crate::tmc::TmcObservation;
    use proptest::prelude::*;

    fn cfg(n: usize, k: usize, m: usize, r: usize) -> FeatureConfig {
        FeatureConfig::new(n, k, m, r, 60.0).unwrap()
    }

    /// 1000 m route, sections A (first half) and B, each with speed = f(t).
    fn world(speed: impl Fn(&str, i64) -> f64) -> (Route, TmcHistory) {
        let route = Route::build(straight(1000.0, 3), 100.0).unwrap();
        let codes: Vec<String> = (0..route.len()).map(|i| if i < 6 { "A" } else { "B" }.to_string()).collect();
        let route = route.with_tmc_codes(&codes).unwrap();
        let obs = ["A", "B"].iter().flat_map(|c| {
            let speed = &speed;
            (0..20).map(move |j| TmcObservation {
                code: c.to_string(),
                timestamp: 10_000 + 60 * j,
                current_speed_mps: speed(c, 10_000 + 60 * j),
                freeflow_speed_mps: 30.0,
            })
        });
        (route, TmcHistory::from_observations(obs.collect::<Vec<_>>()))
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(cfg(0, 1, 0, 1).input_dimension(), 9);
        assert_eq!(cfg(5, 5, 10, 10).input_dimension(), 161);
        assert_eq!(input_dimension(&cfg(0, 1, 1, 2)), 13);
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::new(6, 1, 0, 1, 60.0).is_err());
        assert!(FeatureConfig::new(0, 0, 0, 1, 60.0).is_err());
        assert!(FeatureConfig::new(0, 1, 0, 0, 60.0).is_err());
        assert!(FeatureConfig::new(0, 1, 0, 1, 0.0).is_err());
        let bad: Result<FeatureConfig, _> =
            serde_json::from_str(r#"{"lookahead_n":9,"tmc_k":1,"tmc_m":0,"history_r":1}"#);
        assert!(bad.is_err());
        let ok: FeatureConfig =
            serde_json::from_str(r#"{"lookahead_n":2,"tmc_k":2,"tmc_m":2,"history_r":3}"#).unwrap();
        assert_eq!(ok.tmc_sample_period_s, 60.0);
    }

    #[test]
    fn history_padding_at_route_start() {
        let (route, hist) = world(|_, _| 25.0);
        let ctx = TripContext { start_time: 10_600, start_speed_mps: 17.5 };
        let c = cfg(0, 1, 0, 3);
        let v = assemble_input(&route, &hist, &ctx, &[], 0, &c).unwrap();
        assert_eq!(&v.values[v.values.len() - 3..], &[17.5, 17.5, 17.5]);
        let v = assemble_input(&route, &hist, &ctx, &[20.0, 21.0], 2, &c).unwrap();
        assert_eq!(&v.values[v.values.len() - 3..], &[21.0, 20.0, 17.5]);
    }

    #[test]
    fn constant_world_tmc_block() {
        let (route, hist) = world(|_, _| 23.0);
        let ctx = TripContext { start_time: 10_900, start_speed_mps: 20.0 };
        let c = cfg(1, 2, 3, 2);
        let v = assemble_input(&route, &hist, &ctx, &[20.0; 5], 5, &c).unwrap();
        let tmc = &v.values[c.geometric_len()..c.geometric_len() + c.tmc_len()];
        assert_eq!(tmc.len(), 5 * 4);
        assert!(tmc.iter().all(|&x| x == 23.0));
    }

    #[test]
    fn tmc_block_layout_is_time_major() {
        // Speed encodes section and time so every slot is identifiable.
        let (route, hist) = world(|c, t| if c == "A" { 0.0 } else { 100.0 } + ((t - 10_000) / 60) as f64);
        let ctx = TripContext { start_time: 10_000 + 60 * 10 + 30, start_speed_mps: 20.0 };
        let c = cfg(0, 1, 2, 1);
        // Point 5 is the last A point; its +1 neighbour is B.
        let v = assemble_input(&route, &hist, &ctx, &[0.0; 5], 5, &c).unwrap();
        let tmc = &v.values[5..5 + 9];
        assert_eq!(tmc, &[10.0, 10.0, 110.0, 9.0, 9.0, 109.0, 8.0, 8.0, 108.0]);
    }

    #[test]
    fn lookahead_past_route_end_replicates_last_point() {
        let (route, hist) = world(|_, _| 25.0);
        let ctx = TripContext { start_time: 10_600, start_speed_mps: 20.0 };
        let c = cfg(2, 1, 0, 1);
        let last = route.len() - 1;
        let v = assemble_input(&route, &hist, &ctx, &vec![20.0; last], last, &c).unwrap();
        let g = route.standard_points()[last].geometric_features();
        for b in 0..3 {
            assert_eq!(&v.values[b * 5..b * 5 + 5], &g);
        }
        // Interior point sees its actual successors.
        let v = assemble_input(&route, &hist, &ctx, &[20.0; 3], 3, &c).unwrap();
        assert_eq!(&v.values[10..15], &route.standard_points()[5].geometric_features());
    }

    #[test]
    fn invalid_index_and_missing_tmc() {
        let (route, hist) = world(|_, _| 25.0);
        let ctx = TripContext { start_time: 10_600, start_speed_mps: 20.0 };
        let c = cfg(0, 1, 0, 1);
        assert!(matches!(
            assemble_input(&route, &hist, &ctx, &[20.0; 20], 11, &c),
            Err(FeatureError::InvalidIndex { index: 11, len: 11 })
        ));
        assert!(matches!(
            assemble_input(&route, &hist, &ctx, &[20.0; 2], 4, &c),
            Err(FeatureError::ShortHistory { .. })
        ));
        let codes = vec!["Q".to_string(); route.len()];
        let route = route.with_tmc_codes(&codes).unwrap();
        assert!(matches!(
            assemble_input(&route, &hist, &ctx, &[], 0, &c),
            Err(FeatureError::Tmc { .. })
        ));
    }

    #[test]
    fn normalizer_rules() {
        let rows = [vec![0.0, 3.0], vec![10.0, 3.0]];
        let n = fit_normalizer(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(apply_normalizer(&n, &[5.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(n.apply(&[0.0, 99.0]).unwrap(), vec![0.1, 0.5]);
        assert_eq!(n.apply(&[20.0, 3.0]).unwrap()[0], 1.0);
        assert_eq!(n.apply(&[-20.0, 3.0]).unwrap()[0], 0.0);
        assert_eq!(n.invert(&[0.5, 0.5]).unwrap(), vec![5.0, 3.0]);
        assert!(matches!(
            fit_normalizer(std::iter::empty()),
            Err(FeatureError::EmptyTrainingSet)
        ));
        assert!(n.apply(&[1.0]).is_err());
    }

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let (route, hist) = world(|c, t| if c == "A" { 21.3 } else { 27.9 } + (t % 7) as f64 / 3.0);
        let profiles: Vec<VelocityProfile> = (0..3)
            .map(|i| VelocityProfile {
                trip_id: format!("trip_{i}"),
                start_time: 10_300 + 97 * i,
                start_speed_mps: 20.0 + i as f64 / 7.0,
                speeds_mps: (0..route.len()).map(|j| 20.0 + (j * (i as usize + 1)) as f64 / 9.0).collect(),
            })
            .collect();
        let ds = Dataset::build(&route, &hist, &profiles, &cfg(1, 1, 2, 2)).unwrap();
        assert_eq!(ds.rows.len(), 3 * route.len());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        ds.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.rows.iter().zip(&ds.rows) {
            assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("trip_id,sp_index,target_mps,v_0,v_1,"));
    }

    proptest! {
        #[test]
        fn normalize_then_invert_is_identity(
            rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 4), 1..30),
        ) {
            let n = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
            for r in &rows {
                let back = n.invert(&n.apply(r).unwrap()).unwrap();
                for (a, b) in r.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                }
            }
        }

        #[test]
        fn target_never_leaks_into_inputs(
            speeds in prop::collection::vec(5.0f64..35.0, 11),
            idx in 1usize..11, bump in 1.0f64..5.0, r in 1usize..6,
        ) {
            let (route, hist) = world(|_, _| 25.0);
            let ctx = TripContext { start_time: 10_600, start_speed_mps: 20.0 };
            let c = cfg(1, 1, 1, r);
            let base = assemble_input(&route, &hist, &ctx, &speeds, idx, &c).unwrap();
            // Changing the target and anything after it leaves the inputs alone.
            let mut later = speeds.clone();
            for v in &mut later[idx..] { *v += bump; }
            prop_assert_eq!(&assemble_input(&route, &hist, &ctx, &later, idx, &c).unwrap(), &base);
            // Changing the previous point's speed shows up in the history block.
            let mut prev = speeds.clone();
            prev[idx - 1] += bump;
            let moved = assemble_input(&route, &hist, &ctx, &prev, idx, &c).unwrap();
            let h0 = c.geometric_len() + c.tmc_len();
            prop_assert!(moved.values[h0] != base.values[h0]);
            prop_assert_eq!(&moved.values[..h0], &base.values[..h0]);
        }
    }
}
