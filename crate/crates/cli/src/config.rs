//! The single JSON run configuration and its `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use speedprof::drive_cycle::MatchParams;
use speedprof::experiments::{ArchSpec, EvalMode, SplitStrategy, SweepGrid, SweepSettings, TrainSettings};
use speedprof::synth::{DriverPersona, WorldParams};
use speedprof::tmc::DEFAULT_LATERAL_THRESHOLD_M;
use speedprof::FeatureConfig;

use crate::Failure;

/// Input locations. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub route: PathBuf,
    pub sections: PathBuf,
    /// Directory of daily history files.
    pub tmc_archive: PathBuf,
    /// Directory of trip logs, one csv per trip.
    pub trips: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            route: "route.csv".into(),
            sections: "sections.csv".into(),
            tmc_archive: "tmc".into(),
            trips: "trips".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub split: SplitStrategy,
    pub eval_mode: EvalMode,
    /// Rank by pooled RMSE instead of the mean of per-trip RMSEs.
    pub pooled: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        let s = SweepSettings::default();
        Self {
            split: s.split,
            eval_mode: s.eval_mode,
            pooled: s.pooled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for trips, training and splits.
    pub seed: u64,
    pub paths: Paths,
    pub spacing_m: f64,
    pub lateral_threshold_m: f64,
    pub matching: MatchParams,
    pub features: FeatureConfig,
    pub architecture: ArchSpec,
    pub train: TrainSettings,
    pub grid: SweepGrid,
    pub sweep: SweepOptions,
    pub world: WorldParams,
    pub persona: DriverPersona,
    pub n_trips: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths::default(),
            spacing_m: speedprof::route::DEFAULT_SPACING_M,
            lateral_threshold_m: DEFAULT_LATERAL_THRESHOLD_M,
            matching: MatchParams::default(),
            features: FeatureConfig::new(2, 2, 2, 3, speedprof::tmc::DEFAULT_SAMPLE_PERIOD_S).expect("valid default"),
            architecture: ArchSpec {
                encoder_sizes: vec![16],
                head_hidden: 8,
            },
            train: TrainSettings::default(),
            grid: SweepGrid::default(),
            sweep: SweepOptions::default(),
            world: WorldParams::default(),
            persona: DriverPersona::default(),
            n_trips: 21,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or defaults when `None`), applies overrides, validates,
    /// and makes relative paths absolute.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut doc = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
                let file: Value = serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
                if !file.is_object() {
                    return Err(Failure::config(format!("{}: config must be a JSON object", p.display())));
                }
                merge(&mut doc, file);
                p.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => PathBuf::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Failure::config(e.to_string()))?;
        cfg.validate()?;
        for p in [
            &mut cfg.paths.route,
            &mut cfg.paths.sections,
            &mut cfg.paths.tmc_archive,
            &mut cfg.paths.trips,
            &mut cfg.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::config(m));
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return bad(format!("spacing_m must be positive, got {}", self.spacing_m));
        }
        if !(self.lateral_threshold_m > 0.0 && self.lateral_threshold_m.is_finite()) {
            return bad(format!("lateral_threshold_m must be positive, got {}", self.lateral_threshold_m));
        }
        if self.architecture.encoder_sizes.is_empty() || self.architecture.encoder_sizes.contains(&0) || self.architecture.head_hidden == 0 {
            return bad("architecture needs at least one encoder layer and nonzero widths".into());
        }
        self.train.pretrain.validate().map_err(|e| Failure::config(format!("train.pretrain: {e}")))?;
        self.train.supervised.validate().map_err(|e| Failure::config(format!("train.supervised: {e}")))?;
        self.grid.validate().map_err(|e| Failure::config(e.to_string()))?;
        self.world.validate().map_err(|e| Failure::config(format!("world: {e}")))?;
        self.persona.validate().map_err(|e| Failure::config(format!("persona: {e}")))?;
        Ok(())
    }

    pub fn sweep_settings(&self, workers: usize) -> SweepSettings {
        SweepSettings {
            split: self.sweep.split,
            train: self.train,
            eval_mode: self.sweep.eval_mode,
            pooled: self.sweep.pooled,
            master_seed: self.seed,
            workers,
        }
    }
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut Value, arg: &str) -> Result<(), Failure> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("override {arg:?} is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Failure::config(format!("override {arg:?} has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let segments: Vec<&str> = key.split('.').collect();
    for seg in &segments[..segments.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::config(format!("override {key}: {seg} is not an object")))?;
        node = obj.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Failure::config(format!("override {key}: parent is not an object")))?;
    obj.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Deep merge: objects merge key by key, anything else replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_then_fall_back_to_strings() {
        let mut doc = serde_json::json!({"a": {"b": 1}});
        apply_override(&mut doc, "a.b=2.5").unwrap();
        apply_override(&mut doc, "a.c=[1,2]").unwrap();
        apply_override(&mut doc, "x.y=hello").unwrap();
        assert_eq!(doc, serde_json::json!({"a": {"b": 2.5, "c": [1, 2]}, "x": {"y": "hello"}}));
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "a..b=1").is_err());
        assert!(apply_override(&mut doc, "a.b.c=1").is_err());
    }

    #[test]
    fn partial_nested_overrides_keep_other_defaults() {
        let cfg = RunConfig::load(None, &["features.history_r=4".into(), "train.supervised.epochs=7".into()]).unwrap();
        assert_eq!(cfg.features.history_r, 4);
        assert_eq!(cfg.features.lookahead_n, RunConfig::default().features.lookahead_n);
        assert_eq!(cfg.train.supervised.epochs, 7);
        assert_eq!(cfg.train.supervised.learning_rate, TrainSettings::default().supervised.learning_rate);
    }

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("run.json");
        std::fs::write(&path, r#"{"paths": {"route": "geo/r.csv", "trips": "/abs/trips"}}"#).unwrap();
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(cfg.paths.route, tmp.path().join("geo/r.csv"));
        assert_eq!(cfg.paths.trips, PathBuf::from("/abs/trips"));
        assert_eq!(cfg.paths.sections, tmp.path().join("sections.csv"));
    }

    #[test]
    fn defaults_roundtrip_and_validate() {
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(RunConfig::load(None, &["spacing_m=-1".into()]).is_err());
    }
}
