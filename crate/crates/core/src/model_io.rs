//! Self-describing JSON model and ensemble files.
//!
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`, so a save/load cycle is bit-exact for `f64` models
//! and for `f32` models (every `f32` is exactly representable as `f64`).

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data_model::Stage;
use crate::error::{Error, Result};
use crate::fcm::{FcmModel, FitSummary};
use crate::features::{FeatureConfig, FeatureName, GddConvention, Standardizer};
use crate::phenology::{PhenologyModel, StageMap};
use crate::scalar::Scalar;
use crate::search::ModelEnsemble;

pub const MODEL_FORMAT: &str = "cotton-phenology-model";
pub const ENSEMBLE_FORMAT: &str = "cotton-phenology-ensemble";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FitRecord {
    iterations: usize,
    converged: bool,
    objective: f64,
    last_change: f64,
    tolerance: f64,
    max_iterations: usize,
    seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FeatureSettings {
    start_doy: u32,
    end_doy: u32,
    base_temperature: f64,
    gdd: GddConvention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelRecord {
    format: String,
    version: u32,
    features: Vec<FeatureName>,
    fuzzifier: f64,
    clusters: usize,
    /// One row per cluster, columns in feature order.
    centers: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    threshold: f64,
    /// Stage assigned to each cluster id.
    stage_of_cluster: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_settings: Option<FeatureSettings>,
    fit: FitRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EnsembleRecord {
    format: String,
    version: u32,
    vote_rule: String,
    members: Vec<ModelRecord>,
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64s<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn to_record<T: Scalar>(model: &PhenologyModel<T>) -> ModelRecord {
    let fcm = &model.fcm;
    let s = &fcm.summary;
    ModelRecord {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION,
        features: fcm.features.clone(),
        fuzzifier: fcm.fuzzifier.as_f64(),
        clusters: fcm.clusters(),
        centers: fcm
            .centers
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x.as_f64()).collect())
            .collect(),
        means: to_f64s(&fcm.standardizer.means),
        scales: to_f64s(&fcm.standardizer.scales),
        threshold: model.threshold.as_f64(),
        stage_of_cluster: (0..Stage::COUNT).map(|c| model.stage_map.stage_of(c)).collect(),
        feature_settings: model.feature_config.map(|c| FeatureSettings {
            start_doy: c.start_doy,
            end_doy: c.end_doy,
            base_temperature: c.base_temperature.as_f64(),
            gdd: c.gdd,
        }),
        fit: FitRecord {
            iterations: s.iterations,
            converged: s.converged,
            objective: s.objective,
            last_change: s.last_change,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            seed: s.seed,
        },
    }
}

fn from_record<T: Scalar>(r: ModelRecord) -> Result<PhenologyModel<T>> {
    if r.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!("unexpected format tag {:?}", r.format)));
    }
    if r.version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {}", r.version)));
    }
    let e = r.features.len();
    if r.clusters != Stage::COUNT || r.centers.len() != r.clusters {
        return Err(Error::ModelFormat(format!(
            "expected {} cluster centers, found {}",
            Stage::COUNT,
            r.centers.len()
        )));
    }
    if r.centers.iter().any(|c| c.len() != e) || r.means.len() != e || r.scales.len() != e {
        return Err(Error::ModelFormat(
            "center or standardization width differs from feature count".into(),
        ));
    }
    let flat: Vec<T> = r.centers.iter().flat_map(|row| from_f64s::<T>(row)).collect();
    let centers = Array2::from_shape_vec((r.clusters, e), flat).map_err(|err| Error::ModelFormat(err.to_string()))?;
    let order: Vec<usize> = Stage::ALL
        .iter()
        .map(|s| {
            r.stage_of_cluster
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::ModelFormat(format!("stage {s} has no cluster")))
        })
        .collect::<Result<_>>()?;
    let stage_map = StageMap::from_order(&order).map_err(|err| Error::ModelFormat(err.to_string()))?;
    Ok(PhenologyModel {
        fcm: FcmModel {
            centers,
            fuzzifier: T::lit(r.fuzzifier),
            standardizer: Standardizer {
                features: r.features.clone(),
                means: from_f64s(&r.means),
                scales: from_f64s(&r.scales),
            },
            features: r.features,
            summary: FitSummary {
                iterations: r.fit.iterations,
                converged: r.fit.converged,
                objective: r.fit.objective,
                last_change: r.fit.last_change,
                tolerance: r.fit.tolerance,
                max_iterations: r.fit.max_iterations,
                seed: r.fit.seed,
            },
        },
        stage_map,
        threshold: T::lit(r.threshold),
        feature_config: r.feature_settings.map(|c| FeatureConfig {
            start_doy: c.start_doy,
            end_doy: c.end_doy,
            base_temperature: T::lit(c.base_temperature),
            gdd: c.gdd,
        }),
    })
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn model_to_string<T: Scalar>(model: &PhenologyModel<T>) -> Result<String> {
    to_json(&to_record(model))
}

pub fn model_from_str<T: Scalar>(text: &str) -> Result<PhenologyModel<T>> {
    let record: ModelRecord = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    from_record(record)
}

pub fn save_model<T: Scalar>(model: &PhenologyModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<PhenologyModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

pub fn ensemble_to_string<T: Scalar>(ensemble: &ModelEnsemble<T>) -> Result<String> {
    to_json(&EnsembleRecord {
        format: ENSEMBLE_FORMAT.into(),
        version: FORMAT_VERSION,
        vote_rule: ensemble.vote_rule().into(),
        members: ensemble.members().iter().map(to_record).collect(),
    })
}

pub fn ensemble_from_str<T: Scalar>(text: &str) -> Result<ModelEnsemble<T>> {
    let record: EnsembleRecord = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if record.format != ENSEMBLE_FORMAT || record.version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unexpected ensemble header {:?} v{}",
            record.format, record.version
        )));
    }
    let members = record
        .members
        .into_iter()
        .map(from_record)
        .collect::<Result<Vec<_>>>()?;
    ModelEnsemble::new(members)
}

pub fn save_ensemble<T: Scalar>(ensemble: &ModelEnsemble<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ensemble_to_string(ensemble)?).map_err(|e| Error::io(path, e))
}

pub fn load_ensemble<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelEnsemble<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ensemble_from_str(&text)
}

/// Reads either a single model file or an ensemble file; a single model
/// becomes a one-member ensemble.
pub fn load_any<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelEnsemble<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(ENSEMBLE_FORMAT) => ensemble_from_str(&text),
        Some(MODEL_FORMAT) => ModelEnsemble::new(vec![model_from_str(&text)?]),
        other => Err(Error::ModelFormat(format!("unknown format tag {other:?}"))),
    }
}
