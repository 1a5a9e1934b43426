//! A trained network bundled with everything needed to score new trips.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, SaeNetwork};
use crate::features::{assemble_input, FeatureConfig, Normalizer, TripContext};
use crate::route::Route;
use crate::tmc::TmcHistory;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub network: SaeNetwork,
    pub feature_config: FeatureConfig,
    pub input_normalizer: Normalizer,
    pub target_normalizer: Normalizer,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    architecture: super::Architecture,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    pub fn new(
        network: SaeNetwork,
        feature_config: FeatureConfig,
        input_normalizer: Normalizer,
        target_normalizer: Normalizer,
    ) -> Result<Self, NnError> {
        let d = feature_config.input_dimension();
        if network.input_dim() != d || input_normalizer.dim() != d {
            return Err(NnError::DimensionMismatch {
                expected: d,
                actual: network.input_dim(),
            });
        }
        if target_normalizer.dim() != 1 {
            return Err(NnError::InvalidArchitecture("target normalizer must be one-dimensional".into()));
        }
        Ok(Self {
            network,
            feature_config,
            input_normalizer,
            target_normalizer,
        })
    }

    /// Speed in m/s for a raw (unnormalized) input vector.
    pub fn predict_mps(&self, raw: &[f64]) -> crate::Result<f64> {
        let x = self.input_normalizer.apply(raw)?;
        let y = self.network.forward(&x)?;
        Ok(self.target_normalizer.invert_one(0, y))
    }

    /// Closed-loop profile: each prediction is fed back as history for the
    /// points after it.
    pub fn predict_profile(&self, route: &Route, history: &TmcHistory, trip: &TripContext) -> crate::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(route.len());
        for i in 0..route.len() {
            let v = assemble_input(route, history, trip, &out, i, &self.feature_config)?;
            out.push(self.predict_mps(&v.values)?);
        }
        Ok(out)
    }

    /// Teacher-forced profile: history always comes from `observed`.
    pub fn predict_teacher_forced(
        &self,
        route: &Route,
        history: &TmcHistory,
        trip: &TripContext,
        observed: &[f64],
    ) -> crate::Result<Vec<f64>> {
        (0..route.len())
            .map(|i| {
                let v = assemble_input(route, history, trip, &observed[..i.min(observed.len())], i, &self.feature_config)?;
                self.predict_mps(&v.values)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            architecture: self.network.architecture(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str, path: &Path) -> crate::Result<Self> {
        let json_err = |e| crate::Error::Json {
            path: path.to_path_buf(),
            source: e,
        };
        let file: ModelFile = serde_json::from_str(text).map_err(json_err)?;
        let bad = |reason: String| crate::Error::parse(path, 0, "", reason);
        if file.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported model format_version {}", file.format_version)));
        }
        let net = &file.model.network;
        let mut prev = file.architecture.input_dim;
        for (i, l) in net.layers().enumerate() {
            if l.in_dim != prev || l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(bad(format!("layer {i} has inconsistent dimensions")));
            }
            prev = l.out_dim;
        }
        if net.architecture() != file.architecture || prev != 1 {
            return Err(bad("layers disagree with the declared architecture".into()));
        }
        let m = file.model;
        Ok(Self::new(m.network, m.feature_config, m.input_normalizer, m.target_normalizer)?)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Architecture};

    fn model() -> TrainedModel {
        let cfg = FeatureConfig::new(1, 1, 1, 2, 60.0).unwrap();
        let d = cfg.input_dimension();
        let net = init_network(
            &Architecture {
                input_dim: d,
                encoder_sizes: vec![5, 3],
                head_hidden: 2,
            },
            99,
        )
        .unwrap();
        let norm = Normalizer {
            min: (0..d).map(|i| i as f64 * 0.37).collect(),
            max: (0..d).map(|i| i as f64 * 0.37 + 1.0 / 3.0).collect(),
        };
        let target = Normalizer {
            min: vec![0.1],
            max: vec![std::f64::consts::PI * 10.0],
        };
        TrainedModel::new(net, cfg, norm, target).unwrap()
    }

    #[test]
    fn json_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        let bits = |m: &TrainedModel| -> Vec<u64> { m.network.layers().flat_map(|l| l.weights.iter().chain(&l.bias)).map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(m, back);
        let x: Vec<f64> = (0..m.feature_config.input_dimension()).map(|i| i as f64 * 0.1).collect();
        assert_eq!(m.predict_mps(&x).unwrap().to_bits(), back.predict_mps(&x).unwrap().to_bits());
    }

    #[test]
    fn rejects_tampered_dimensions() {
        let m = model();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["network"]["head_hidden"]["weights"].as_array_mut().unwrap().pop();
        let err = TrainedModel::from_json(&v.to_string(), Path::new("m.json")).unwrap_err();
        assert_eq!(err.class(), "parse.invalid_record");
        let bad_version = m.to_json().replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(TrainedModel::from_json(&bad_version, Path::new("m.json")).is_err());
    }

    #[test]
    fn wrong_input_length_is_an_error() {
        assert!(model().predict_mps(&[0.5; 3]).is_err());
    }
}
