//! The six pipeline commands.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;

use cotton_phenology::data_model::parse_ground_observations;
use cotton_phenology::features::{
    build_all_field_series, load_satellite_csv, load_weather_csv, Availability, FeatureConfig, SatelliteRecord,
    WeatherRecord,
};
use cotton_phenology::metrics::{evaluate, pair_with_observations, EvaluationReport, DEFAULT_MIN_SUPPORT};
use cotton_phenology::model_io::{load_any, save_ensemble, save_model};
use cotton_phenology::search::{
    baseline_model, evaluate_feature_set, exhaustive_refinement, feature_frequency, random_subset_search,
    select_ensemble_members, top_results, write_results_csv, ModelEnsemble, Scores, SearchData, SearchResult,
};
use cotton_phenology::{
    Error, FeatureName, FieldSeries64, GroundObservation, ModelEnsemble64, PhenologyModel64, RankedPrediction64, Result,
};

use crate::config::PipelineConfig;
use crate::plots;
use crate::synth;
use crate::tables::{
    read_predictions, write_displacement_csv, write_matches_csv, write_predictions, write_synth_dataset,
};

pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SEARCH_RESULTS_FILE: &str = "search_results.csv";
pub const REFINEMENT_RESULTS_FILE: &str = "refinement_results.csv";
pub const FREQUENCY_FILE: &str = "feature_frequency.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const BASELINE_MODEL_FILE: &str = "baseline_model.json";
pub const SEARCH_SUMMARY_FILE: &str = "search_summary.json";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_TEXT: &str = "evaluation.txt";
pub const DISPLACEMENT_FILE: &str = "displacement.csv";
pub const MATCHES_FILE: &str = "matches.csv";

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn require<'a>(path: Option<&'a PathBuf>, key: &str) -> Result<&'a Path> {
    path.map(PathBuf::as_path)
        .ok_or_else(|| Error::Validation(format!("no input path for `paths.{key}`")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the input tables and builds one series per field.
pub fn load_fields(
    satellite: &Path,
    weather: Option<&Path>,
    cfg: &FeatureConfig<f64>,
    availability: Availability,
) -> Result<Vec<FieldSeries64>> {
    let sat = load_satellite_csv::<f64>(satellite)?;
    let wx = match weather {
        Some(p) => load_weather_csv::<f64>(p)?,
        None => Vec::new(),
    };
    build_all_field_series(&sat, &wx, cfg, availability)
}

fn total_rows(fields: &[FieldSeries64]) -> usize {
    fields.iter().map(FieldSeries64::len).sum()
}

fn training_fields(cfg: &PipelineConfig) -> Result<Vec<FieldSeries64>> {
    let sat = require(cfg.paths.satellite.as_ref(), "satellite")?;
    let fields = load_fields(
        sat,
        cfg.paths.weather.as_deref(),
        &cfg.feature_config(),
        Availability::AfterSeason,
    )?;
    if total_rows(&fields) == 0 {
        return Err(Error::Validation(format!(
            "season window {}..{} contains no acquisitions",
            cfg.season.start_doy, cfg.season.end_doy
        )));
    }
    Ok(fields)
}

fn with_settings(mut model: PhenologyModel64, cfg: &PipelineConfig) -> PhenologyModel64 {
    model.feature_config = Some(cfg.feature_config());
    model
}

fn check_convergence(model: &PhenologyModel64, cfg: &PipelineConfig) -> Result<()> {
    let s = &model.fcm.summary;
    if s.converged {
        return Ok(());
    }
    if cfg.fcm.require_convergence {
        return Err(Error::NotConverged {
            iterations: s.iterations,
            last_change: s.last_change,
        });
    }
    log::warn!(
        "clustering stopped after {} iterations with change {:e} above tolerance {:e}",
        s.iterations,
        s.last_change,
        s.tolerance
    );
    Ok(())
}

pub fn cmd_fit(cfg: &PipelineConfig) -> Result<Outcome> {
    let fields = training_fields(cfg)?;
    let training = PhenologyModel64::train(&fields, &cfg.features.selected, &cfg.fcm_params())?;
    let model = with_settings(training.model, cfg);
    check_convergence(&model, cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(MODEL_FILE);
    save_model(&model, &path)?;
    cfg.write_snapshot(&cfg.out_dir)?;
    let s = &model.fcm.summary;
    let order: Vec<String> = (0..6)
        .map(|c| format!("c{c}={}", model.stage_map.stage_of(c)))
        .collect();
    let summary = format!(
        "fitted {} elements from {} fields on {} features\niterations {} (converged: {}), objective {}\nclusters {}\nsecondary threshold {}\nmodel written to {}",
        training.space.len(),
        fields.len(),
        model.features().len(),
        s.iterations,
        s.converged,
        s.objective,
        order.join(" "),
        model.threshold,
        path.display()
    );
    Ok(Outcome {
        summary,
        files: vec![path, cfg.out_dir.join(crate::config::SNAPSHOT_FILE)],
    })
}

/// Within-season predictions from raw records. Each element only uses data
/// dated on or before its own day.
pub fn predict_records(
    ensemble: &ModelEnsemble64,
    satellite: &[SatelliteRecord<f64>],
    weather: &[WeatherRecord<f64>],
    cfg: &FeatureConfig<f64>,
) -> Result<Vec<RankedPrediction64>> {
    let fields = build_all_field_series(satellite, weather, cfg, Availability::WithinSeason)?;
    if total_rows(&fields) == 0 {
        return Ok(Vec::new());
    }
    ensemble.predict(&fields)
}

/// Feature settings for inference: those stored with the model, with the
/// end of the window taken from the configuration.
pub fn inference_settings(ensemble: &ModelEnsemble64, cfg: &PipelineConfig) -> FeatureConfig<f64> {
    match ensemble.members()[0].feature_config {
        Some(stored) => {
            let requested = cfg.feature_config();
            if stored.start_doy != requested.start_doy || stored.gdd != requested.gdd {
                log::warn!("using the start day and GDD convention stored with the model");
            }
            FeatureConfig {
                end_doy: requested.end_doy,
                ..stored
            }
        }
        None => cfg.feature_config(),
    }
}

pub fn cmd_predict(
    cfg: &PipelineConfig,
    model: Option<&Path>,
    satellite: Option<&Path>,
    weather: Option<&Path>,
) -> Result<Outcome> {
    let default_model = cfg.out_dir.join(MODEL_FILE);
    let model_path = model.or(cfg.paths.model.as_deref()).unwrap_or(&default_model);
    let ensemble: ModelEnsemble64 = load_any(model_path)?;
    let (sat_path, wx_path) = match satellite {
        Some(s) => (s, weather),
        None => match &cfg.paths.eval_satellite {
            Some(s) => (s.as_path(), weather.or(cfg.paths.eval_weather.as_deref())),
            None => (
                require(cfg.paths.satellite.as_ref(), "eval_satellite")?,
                weather.or(cfg.paths.weather.as_deref()),
            ),
        },
    };
    let sat = load_satellite_csv::<f64>(sat_path)?;
    let wx = match wx_path {
        Some(p) => load_weather_csv::<f64>(p)?,
        None => Vec::new(),
    };
    let settings = inference_settings(&ensemble, cfg);
    let predictions = predict_records(&ensemble, &sat, &wx, &settings)?;
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(PREDICTIONS_FILE);
    write_predictions(create(&path)?, &predictions)?;
    cfg.write_snapshot(&cfg.out_dir)?;
    Ok(Outcome {
        summary: format!(
            "{} predictions from {} member model(s) written to {}",
            predictions.len(),
            ensemble.members().len(),
            path.display()
        ),
        files: vec![path],
    })
}

pub fn load_predictions(path: &Path) -> Result<Vec<RankedPrediction64>> {
    read_predictions(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub fn load_observations(path: &Path) -> Result<Vec<GroundObservation>> {
    let obs = parse_ground_observations(path)?;
    for o in &obs {
        o.validate()?;
    }
    Ok(obs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnmatchedObservation {
    pub field_id: String,
    pub visit_date: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationFile {
    pub model: EvaluationReport,
    pub unmatched: Vec<UnmatchedObservation>,
    pub baseline: Option<EvaluationReport>,
}

/// Joins predictions with observations and computes the full report.
pub fn evaluate_predictions(
    predictions: &[RankedPrediction64],
    observations: &[GroundObservation],
) -> Result<(
    EvaluationReport,
    Vec<UnmatchedObservation>,
    cotton_phenology::metrics::Pairing,
)> {
    let pairing = pair_with_observations(predictions, observations)?;
    let unmatched: Vec<UnmatchedObservation> = pairing
        .unmatched
        .iter()
        .map(|o| UnmatchedObservation {
            field_id: o.field_id.clone(),
            visit_date: o.visit_date.to_string(),
        })
        .collect();
    if !unmatched.is_empty() {
        log::warn!("{} observation(s) have no prediction for their field", unmatched.len());
    }
    let report = evaluate(&pairing.pairs, DEFAULT_MIN_SUPPORT)?;
    Ok((report, unmatched, pairing))
}

pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    predictions: Option<&Path>,
    ground_truth: Option<&Path>,
    baseline: Option<&Path>,
) -> Result<Outcome> {
    let default_predictions = cfg.out_dir.join(PREDICTIONS_FILE);
    let pred_path = predictions
        .or(cfg.paths.predictions.as_deref())
        .unwrap_or(&default_predictions);
    let gt_path = match ground_truth {
        Some(p) => p,
        None => require(cfg.paths.ground_truth.as_ref(), "ground_truth")?,
    };
    let observations = load_observations(gt_path)?;
    let (report, unmatched, pairing) = evaluate_predictions(&load_predictions(pred_path)?, &observations)?;
    let baseline_report = match baseline.or(cfg.paths.baseline_predictions.as_deref()) {
        Some(p) => Some(evaluate_predictions(&load_predictions(p)?, &observations)?.0),
        None => None,
    };

    ensure_dir(&cfg.out_dir)?;
    let json = cfg.out_dir.join(EVALUATION_JSON);
    let text = cfg.out_dir.join(EVALUATION_TEXT);
    let displacement = cfg.out_dir.join(DISPLACEMENT_FILE);
    let matches = cfg.out_dir.join(MATCHES_FILE);
    let mut table = report.to_table();
    if !unmatched.is_empty() {
        table.push_str(&format!("\nunmatched observations: {}\n", unmatched.len()));
    }
    if let Some(b) = &baseline_report {
        table.push_str("\nbaseline\n");
        table.push_str(&b.to_table());
        table.push_str(&format!(
            "\nkappa gain over baseline {:+.4}\n",
            report.metaclass_agreement.cohen_kappa - b.metaclass_agreement.cohen_kappa
        ));
    }
    std::fs::write(&text, &table).map_err(|e| Error::io(&text, e))?;
    write_json(
        &json,
        &EvaluationFile {
            model: report.clone(),
            unmatched,
            baseline: baseline_report,
        },
    )?;
    write_displacement_csv(create(&displacement)?, &report.displacement)?;
    write_matches_csv(create(&matches)?, &pairing.matches)?;
    cfg.write_snapshot(&cfg.out_dir)?;
    Ok(Outcome {
        summary: table,
        files: vec![json, text, displacement, matches],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct SearchSummary {
    sampled_per_length: Vec<(usize, usize)>,
    evaluated: usize,
    failed: usize,
    top_results: usize,
    top_features: Vec<FeatureName>,
    refinement_enumerated: usize,
    refinement_failed: usize,
    survivors: usize,
    ensemble_members: Vec<Vec<FeatureName>>,
    ensemble_fallback: bool,
    validation_fields: Vec<String>,
    baseline: Scores,
}

fn write_frequency_csv(path: &Path, freq: &[(FeatureName, usize)], total: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    w.write_record(["feature", "count", "share"]).map_err(err)?;
    for (f, c) in freq {
        w.write_record([f.name(), c.to_string(), (*c as f64 / total as f64).to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_search(cfg: &PipelineConfig) -> Result<Outcome> {
    let train = training_fields(cfg)?;
    let eval_sat = require(cfg.paths.eval_satellite.as_ref(), "eval_satellite")?;
    let eval = load_fields(
        eval_sat,
        cfg.paths.eval_weather.as_deref(),
        &cfg.feature_config(),
        Availability::WithinSeason,
    )?;
    let observations = load_observations(require(cfg.paths.ground_truth.as_ref(), "ground_truth")?)?;
    let search = &cfg.search;
    let params = cfg.fcm_params();
    let data = SearchData::new(&train, &eval, &observations, search.validation_fraction, cfg.seed)?;

    let phase1 = random_subset_search(search, &params, &data)?;
    let top = top_results(&phase1.results, search.top_fraction);
    let freq = feature_frequency(top);
    let top_features: Vec<FeatureName> = freq.iter().take(search.top_features).map(|(f, _)| *f).collect();
    let refinement = exhaustive_refinement(&top_features, search, &params, &data)?;

    let chosen = select_ensemble_members(&refinement.survivors, search);
    let fallback = chosen.is_empty();
    let members: Vec<PhenologyModel64> = if fallback {
        log::warn!("no refinement survivor; using the best phase-1 feature set alone");
        vec![evaluate_feature_set(&data, &phase1.results[0].features, &params)?.0]
    } else {
        chosen.iter().map(|m| m.model.clone()).collect()
    };
    let member_sets: Vec<Vec<FeatureName>> = members.iter().map(|m| m.features().to_vec()).collect();
    let ensemble = ModelEnsemble::new(members.into_iter().map(|m| with_settings(m, cfg)).collect())?;

    let baseline = with_settings(baseline_model(data.train(), &params)?, cfg);
    let (_, baseline_scores) = evaluate_feature_set(&data, &FeatureName::FORCED, &params)?;

    ensure_dir(&cfg.out_dir)?;
    let out = &cfg.out_dir;
    let files: Vec<PathBuf> = [
        SEARCH_RESULTS_FILE,
        REFINEMENT_RESULTS_FILE,
        FREQUENCY_FILE,
        ENSEMBLE_FILE,
        BASELINE_MODEL_FILE,
        SEARCH_SUMMARY_FILE,
    ]
    .iter()
    .map(|f| out.join(f))
    .collect();
    write_results_csv(&phase1.results, create(&files[0])?)?;
    write_results_csv(&refinement.evaluated, create(&files[1])?)?;
    write_frequency_csv(&files[2], &freq, top.len())?;
    save_ensemble(&ensemble, &files[3])?;
    save_model(&baseline, &files[4])?;
    let summary = SearchSummary {
        sampled_per_length: phase1.sampled.iter().map(|(&l, &n)| (l, n)).collect(),
        evaluated: phase1.results.len(),
        failed: phase1.failed.len(),
        top_results: top.len(),
        top_features: top_features.clone(),
        refinement_enumerated: refinement.enumerated,
        refinement_failed: refinement.failed.len(),
        survivors: refinement.survivors.len(),
        ensemble_members: member_sets,
        ensemble_fallback: fallback,
        validation_fields: data.validation_fields().to_vec(),
        baseline: baseline_scores.clone(),
    };
    write_json(&files[5], &summary)?;
    cfg.write_snapshot(out)?;
    let best: &SearchResult = &phase1.results[0];
    Ok(Outcome {
        summary: format!(
            "phase 1: {} sets evaluated ({} failed), best kappa {:.4}\nrefinement: {} of {} sets survive\nensemble: {} member(s)\nbaseline kappa {:.4}",
            phase1.results.len(),
            phase1.failed.len(),
            best.scores.kappa,
            refinement.survivors.len(),
            refinement.enumerated,
            ensemble.members().len(),
            baseline_scores.kappa
        ),
        files,
    })
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Outcome> {
    let data = synth::generate(&cfg.synth)?;
    write_synth_dataset(&cfg.out_dir, &data)?;
    cfg.write_snapshot(&cfg.out_dir)?;
    Ok(Outcome {
        summary: format!(
            "{} fields, {} acquisitions, {} ground observations written to {}",
            data.seasons.len(),
            data.satellite.len(),
            data.observations.len(),
            cfg.out_dir.display()
        ),
        files: crate::tables::SYNTH_FILES.iter().map(|f| cfg.out_dir.join(f)).collect(),
    })
}

pub fn cmd_report(
    cfg: &PipelineConfig,
    predictions: Option<&Path>,
    satellite: Option<&Path>,
    ground_truth: Option<&Path>,
) -> Result<Outcome> {
    let default_predictions = cfg.out_dir.join(PREDICTIONS_FILE);
    let pred_path = predictions
        .or(cfg.paths.predictions.as_deref())
        .unwrap_or(&default_predictions);
    let preds = load_predictions(pred_path)?;
    ensure_dir(&cfg.out_dir)?;
    let mut files = plots::membership_timelines(&cfg.out_dir, &preds)?;
    let sat_path = satellite
        .or(cfg.paths.eval_satellite.as_deref())
        .or(cfg.paths.satellite.as_deref());
    if let Some(p) = sat_path {
        files.extend(plots::vi_curves(&cfg.out_dir, &load_satellite_csv::<f64>(p)?)?);
    }
    if let Some(gt) = ground_truth.or(cfg.paths.ground_truth.as_deref()) {
        let (report, _, _) = evaluate_predictions(&preds, &load_observations(gt)?)?;
        files.extend(plots::confusion_heatmap(&cfg.out_dir, &report.principal.confusion)?);
    }
    Ok(Outcome {
        summary: format!("{} report files written to {}", files.len(), cfg.out_dir.display()),
        files,
    })
}
