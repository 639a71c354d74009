//! Feature-subset search, model selection, DoY baseline and majority-vote
//! ensembles.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{ElementKey, FieldSeries, GroundObservation, Metaclass, Stage};
use crate::error::{Error, Result};
use crate::fcm::FcmParams;
use crate::features::{canonical_feature_set, feature_set_key, FeatureCategory, FeatureName};
use crate::metrics::{
    cohen_kappa, maxdiff_accuracy, ndcg_at_2, pair_with_observations, weighted_kappa, EvaluatedPair, KappaWeighting,
};
use crate::phenology::{PhenologyModel, RankedPrediction};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Candidate features; forced features are added to every set anyway.
    pub pool: Vec<FeatureName>,
    /// Phase-1 set lengths, forced features included.
    pub min_length: usize,
    pub max_length: usize,
    pub samples_per_length: usize,
    /// Share of evaluation fields held out for scoring.
    pub validation_fraction: f64,
    /// Share of ranked phase-1 results used for the frequency analysis.
    pub top_fraction: f64,
    /// Number of most frequent features passed to the refinement.
    pub top_features: usize,
    /// Phase-2 set lengths, forced features included.
    pub refine_min_length: usize,
    pub refine_max_length: usize,
    pub kappa_threshold: f64,
    pub maxdiff1_threshold: f64,
    /// Largest number of phase-2 sets that may be enumerated.
    pub refinement_budget: u64,
    /// Survivor lengths admitted to the ensemble.
    pub ensemble_min_length: usize,
    pub ensemble_max_length: usize,
    /// Require one VI, one VI integral and one weather feature per member.
    pub require_all_categories: bool,
    /// Survivors containing any of these features are left out of the ensemble.
    pub exclude_from_ensemble: Vec<FeatureName>,
    pub seed: u64,
    /// Worker threads for concurrent fits; 0 uses all cores.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            pool: FeatureName::candidate_pool(),
            min_length: 3,
            max_length: 10,
            samples_per_length: 10_000,
            validation_fraction: 0.3,
            top_fraction: 0.01,
            top_features: 15,
            refine_min_length: 6,
            refine_max_length: 15,
            kappa_threshold: 0.46,
            maxdiff1_threshold: 0.86,
            refinement_budget: 20_000,
            ensemble_min_length: 8,
            ensemble_max_length: 9,
            require_all_categories: true,
            exclude_from_ensemble: Vec::new(),
            seed: 0,
            workers: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.min_length > self.max_length || self.refine_min_length > self.refine_max_length {
            return bad("search length ranges must be non-empty".into());
        }
        if self.ensemble_min_length > self.ensemble_max_length {
            return bad("ensemble length range must be non-empty".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 1.0) {
            return bad(format!(
                "validation fraction {} outside (0, 1]",
                self.validation_fraction
            ));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return bad(format!("top fraction {} outside (0, 1]", self.top_fraction));
        }
        if self.samples_per_length == 0 || self.top_features == 0 {
            return bad("sample count and top feature count must be positive".into());
        }
        Ok(())
    }

    fn run<R: Send>(&self, job: impl FnOnce() -> R + Send) -> Result<R> {
        if self.workers == 0 {
            return Ok(job());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(job))
    }
}

/// Scores of one feature set on the validation fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub kappa: f64,
    pub maxdiff0: f64,
    pub maxdiff1: f64,
    pub wkappa_linear: f64,
    pub wkappa_quadratic: f64,
    pub ndcg: f64,
}

impl Scores {
    pub fn from_pairs(pairs: &[EvaluatedPair]) -> Result<Self> {
        let preds: Vec<Metaclass> = pairs.iter().map(|p| p.predicted).collect();
        let truths: Vec<Metaclass> = pairs.iter().map(|p| p.observed).collect();
        let pi: Vec<usize> = preds.iter().map(|m| m.index()).collect();
        let ti: Vec<usize> = truths.iter().map(|m| m.index()).collect();
        Ok(Scores {
            kappa: cohen_kappa(&pi, &ti)?,
            maxdiff0: maxdiff_accuracy(&preds, &truths, 0)?,
            maxdiff1: maxdiff_accuracy(&preds, &truths, 1)?,
            wkappa_linear: weighted_kappa(&pi, &ti, KappaWeighting::Linear)?,
            wkappa_quadratic: weighted_kappa(&pi, &ti, KappaWeighting::Quadratic)?,
            ndcg: pairs.iter().map(|p| ndcg_at_2(&p.ranking, p.observed)).sum::<f64>() / pairs.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub features: Vec<FeatureName>,
    pub scores: Scores,
    pub converged: bool,
}

/// Splits field ids into (test, validation) with a seeded shuffle; the
/// validation part holds `ceil(fraction * n)` fields.
pub fn split_fields(field_ids: &[String], validation_fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut ids: Vec<String> = field_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ids.len() as f64 * validation_fraction).ceil() as usize).min(ids.len());
    let validation = ids.split_off(ids.len() - n_val);
    let (mut test, mut validation) = (ids, validation);
    test.sort();
    validation.sort();
    (test, validation)
}

/// Training season plus the labeled validation part of the evaluation season.
#[derive(Clone, Debug)]
pub struct SearchData<'a, T> {
    train: &'a [FieldSeries<T>],
    eval: Vec<FieldSeries<T>>,
    observations: Vec<GroundObservation>,
    validation_fields: Vec<String>,
}

impl<'a, T: Scalar> SearchData<'a, T> {
    pub fn new(
        train: &'a [FieldSeries<T>],
        eval: &[FieldSeries<T>],
        observations: &[GroundObservation],
        validation_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("no training fields".into()));
        }
        let labeled: Vec<String> = observations.iter().map(|o| o.field_id.clone()).collect();
        let (_, validation_fields) = split_fields(&labeled, validation_fraction, seed);
        let keep: BTreeSet<&str> = validation_fields.iter().map(String::as_str).collect();
        let eval: Vec<FieldSeries<T>> = eval.iter().filter(|f| keep.contains(f.field_id())).cloned().collect();
        let observations: Vec<GroundObservation> = observations
            .iter()
            .filter(|o| keep.contains(o.field_id.as_str()))
            .cloned()
            .collect();
        if eval.is_empty() || observations.is_empty() {
            return Err(Error::InsufficientData(
                "no labeled validation fields with series".into(),
            ));
        }
        Ok(SearchData {
            train,
            eval,
            observations,
            validation_fields,
        })
    }

    pub fn validation_fields(&self) -> &[String] {
        &self.validation_fields
    }

    pub fn train(&self) -> &[FieldSeries<T>] {
        self.train
    }
}

/// Trains on the training season and scores the validation fields.
pub fn evaluate_feature_set<T: Scalar>(
    data: &SearchData<'_, T>,
    features: &[FeatureName],
    params: &FcmParams<T>,
) -> Result<(PhenologyModel<T>, Scores)> {
    let training = PhenologyModel::train(data.train, features, params)?;
    let predictions = training.model.predict(&data.eval)?;
    let pairing = pair_with_observations(&predictions, &data.observations)?;
    if pairing.pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no validation observation matched a prediction".into(),
        ));
    }
    let scores = Scores::from_pairs(&pairing.pairs)?;
    Ok((training.model, scores))
}

fn non_forced(features: &[FeatureName]) -> Vec<FeatureName> {
    canonical_feature_set(features)
        .into_iter()
        .filter(|f| !f.is_forced())
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn seed_for_length(seed: u64, length: usize) -> u64 {
    seed ^ (length as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Feature sets evaluated in phase 1, grouped by length. Lengths whose
/// number of combinations does not exceed the sample budget are enumerated;
/// otherwise `samples_per_length` random draws are deduplicated without
/// resampling. A pool without optional features yields the DoY baseline only.
pub fn sample_feature_sets(config: &SearchConfig) -> BTreeMap<usize, Vec<Vec<FeatureName>>> {
    let optional = non_forced(&config.pool);
    let forced = FeatureName::FORCED.len();
    let mut out = BTreeMap::new();
    if optional.is_empty() {
        out.insert(forced, vec![canonical_feature_set(&[])]);
        return out;
    }
    for length in config.min_length..=config.max_length {
        if length < forced || length - forced > optional.len() {
            continue;
        }
        let k = length - forced;
        let index_sets: BTreeSet<Vec<usize>> = if binomial(optional.len(), k) <= config.samples_per_length as u128 {
            (0..optional.len()).combinations(k).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for_length(config.seed, length));
            (0..config.samples_per_length)
                .map(|_| {
                    let mut idx = rand::seq::index::sample(&mut rng, optional.len(), k).into_vec();
                    idx.sort_unstable();
                    idx
                })
                .collect()
        };
        let sets = index_sets
            .into_iter()
            .map(|idx| canonical_feature_set(&idx.iter().map(|&i| optional[i]).collect::<Vec<_>>()))
            .collect();
        out.insert(length, sets);
    }
    out
}

fn rank(results: &mut [SearchResult]) {
    results.sort_by(|a, b| {
        b.scores
            .kappa
            .total_cmp(&a.scores.kappa)
            .then_with(|| feature_set_key(&a.features).cmp(&feature_set_key(&b.features)))
    });
}

/// A feature set that could not be evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct FailedSet {
    pub features: Vec<FeatureName>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOneOutcome {
    /// Results ranked by kappa, descending; ties by feature-set key.
    pub results: Vec<SearchResult>,
    pub failed: Vec<FailedSet>,
    /// Number of distinct sets per length.
    pub sampled: BTreeMap<usize, usize>,
}

/// Per-set outcome: the fitted model and its scores, or why the fit failed.
type SetOutcome<T> = std::result::Result<(PhenologyModel<T>, Scores), String>;

fn evaluate_many<T: Scalar>(
    sets: &[Vec<FeatureName>],
    data: &SearchData<'_, T>,
    params: &FcmParams<T>,
    config: &SearchConfig,
) -> Result<Vec<SetOutcome<T>>> {
    config.run(|| {
        sets.par_iter()
            .map(|set| evaluate_feature_set(data, set, params).map_err(|e| e.to_string()))
            .collect()
    })
}

/// Phase 1: fit and score each sampled feature set.
pub fn random_subset_search<T: Scalar>(
    config: &SearchConfig,
    params: &FcmParams<T>,
    data: &SearchData<'_, T>,
) -> Result<PhaseOneOutcome> {
    config.validate()?;
    params.validate()?;
    let by_length = sample_feature_sets(config);
    let sampled = by_length.iter().map(|(&l, s)| (l, s.len())).collect();
    let sets: Vec<Vec<FeatureName>> = by_length.into_values().flatten().collect();
    let outcomes = evaluate_many(&sets, data, params, config)?;
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (set, outcome) in sets.into_iter().zip(outcomes) {
        match outcome {
            Ok((model, scores)) => results.push(SearchResult {
                features: set,
                scores,
                converged: model.fcm.summary.converged,
            }),
            Err(reason) => {
                log::warn!("feature set {} skipped: {reason}", feature_set_key(&set));
                failed.push(FailedSet { features: set, reason });
            }
        }
    }
    if results.is_empty() {
        return Err(Error::InsufficientData("no feature set could be evaluated".into()));
    }
    rank(&mut results);
    Ok(PhaseOneOutcome {
        results,
        failed,
        sampled,
    })
}

/// The best `ceil(fraction * n)` results (at least one).
pub fn top_results(ranked: &[SearchResult], fraction: f64) -> &[SearchResult] {
    let n = ((ranked.len() as f64 * fraction).ceil() as usize).clamp(1.min(ranked.len()), ranked.len());
    &ranked[..n]
}

/// Appearance counts per feature over `top`, descending; ties by name.
pub fn feature_frequency(top: &[SearchResult]) -> Vec<(FeatureName, usize)> {
    let mut counts: BTreeMap<FeatureName, usize> = BTreeMap::new();
    for r in top {
        for &f in &r.features {
            *counts.entry(f).or_default() += 1;
        }
    }
    let mut out: Vec<(FeatureName, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.name().cmp(&b.0.name())));
    out
}

/// Number of sets of total length `min..=max` that contain every forced
/// feature plus a subset of `optional` optional features.
pub fn refinement_count(optional: usize, min_length: usize, max_length: usize) -> u128 {
    let forced = FeatureName::FORCED.len();
    (min_length..=max_length)
        .filter(|&l| l >= forced)
        .map(|l| binomial(optional, l - forced))
        .sum()
}

/// A refined feature set with its fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedModel<T> {
    pub result: SearchResult,
    pub model: PhenologyModel<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementOutcome<T> {
    pub enumerated: usize,
    pub evaluated: Vec<SearchResult>,
    pub failed: Vec<FailedSet>,
    /// Sets with kappa and maxdiff-1 strictly above the configured
    /// thresholds, ranked like phase 1.
    pub survivors: Vec<RefinedModel<T>>,
}

/// Phase 2: every combination of `top_features` within the refinement
/// lengths, forced features always included.
pub fn exhaustive_refinement<T: Scalar>(
    top_features: &[FeatureName],
    config: &SearchConfig,
    params: &FcmParams<T>,
    data: &SearchData<'_, T>,
) -> Result<RefinementOutcome<T>> {
    config.validate()?;
    params.validate()?;
    let optional = non_forced(top_features);
    let count = refinement_count(optional.len(), config.refine_min_length, config.refine_max_length);
    if count > u128::from(config.refinement_budget) {
        return Err(Error::BudgetExceeded {
            count,
            limit: u128::from(config.refinement_budget),
        });
    }
    let forced = FeatureName::FORCED.len();
    let mut sets = Vec::new();
    for length in config.refine_min_length..=config.refine_max_length {
        if length < forced || length - forced > optional.len() {
            continue;
        }
        for combo in optional.iter().copied().combinations(length - forced) {
            sets.push(canonical_feature_set(&combo));
        }
    }
    let outcomes = evaluate_many(&sets, data, params, config)?;
    let mut evaluated = Vec::new();
    let mut failed = Vec::new();
    let mut survivors = Vec::new();
    for (set, outcome) in sets.iter().zip(outcomes) {
        match outcome {
            Ok((model, scores)) => {
                let result = SearchResult {
                    features: set.clone(),
                    scores,
                    converged: model.fcm.summary.converged,
                };
                if result.scores.kappa > config.kappa_threshold && result.scores.maxdiff1 > config.maxdiff1_threshold {
                    survivors.push(RefinedModel {
                        result: result.clone(),
                        model,
                    });
                }
                evaluated.push(result);
            }
            Err(reason) => failed.push(FailedSet {
                features: set.clone(),
                reason,
            }),
        }
    }
    rank(&mut evaluated);
    survivors.sort_by(|a, b| {
        b.result
            .scores
            .kappa
            .total_cmp(&a.result.scores.kappa)
            .then_with(|| feature_set_key(&a.result.features).cmp(&feature_set_key(&b.result.features)))
    });
    log::info!("refinement: {} of {} sets survive", survivors.len(), sets.len());
    Ok(RefinementOutcome {
        enumerated: sets.len(),
        evaluated,
        failed,
        survivors,
    })
}

fn covers_all_categories(features: &[FeatureName]) -> bool {
    [
        FeatureCategory::Vi,
        FeatureCategory::ViIntegral,
        FeatureCategory::AccumulatedWeather,
    ]
    .iter()
    .all(|c| features.iter().any(|f| f.category() == *c))
}

/// Survivors admitted to the ensemble by length, category coverage and the
/// exclusion list. Falls back to all survivors when none qualify.
pub fn select_ensemble_members<'m, T>(
    survivors: &'m [RefinedModel<T>],
    config: &SearchConfig,
) -> Vec<&'m RefinedModel<T>> {
    let chosen: Vec<&RefinedModel<T>> = survivors
        .iter()
        .filter(|s| {
            let f = &s.result.features;
            (config.ensemble_min_length..=config.ensemble_max_length).contains(&f.len())
                && (!config.require_all_categories || covers_all_categories(f))
                && !f.iter().any(|x| config.exclude_from_ensemble.contains(x))
        })
        .collect();
    if chosen.is_empty() && !survivors.is_empty() {
        log::warn!(
            "no survivor meets the ensemble filters; using all {} survivors",
            survivors.len()
        );
        return survivors.iter().collect();
    }
    chosen
}

pub const VOTE_RULE: &str = "plurality over metaclasses; ties by highest summed top weight, then lower metaclass index";

/// Fitted models combined by majority vote.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelEnsemble<T> {
    members: Vec<PhenologyModel<T>>,
}

impl<T: Scalar> ModelEnsemble<T> {
    pub fn new(members: Vec<PhenologyModel<T>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Validation("an ensemble needs at least one member".into()))?;
        let (c, m) = (first.fcm.clusters(), first.fcm.fuzzifier);
        if members.iter().any(|x| x.fcm.clusters() != c || x.fcm.fuzzifier != m) {
            return Err(Error::Validation(
                "ensemble members must share cluster count and fuzzifier".into(),
            ));
        }
        Ok(ModelEnsemble { members })
    }

    pub fn members(&self) -> &[PhenologyModel<T>] {
        &self.members
    }

    pub fn vote_rule(&self) -> &'static str {
        VOTE_RULE
    }

    /// Union of member features, canonical order.
    pub fn features(&self) -> Vec<FeatureName> {
        canonical_feature_set(
            &self
                .members
                .iter()
                .flat_map(|m| m.features().iter().copied())
                .collect::<Vec<_>>(),
        )
    }

    /// Per-element vote over member predictions. The stage ranking of the
    /// combined prediction orders stages by mean member weight.
    pub fn predict(&self, fields: &[FieldSeries<T>]) -> Result<Vec<RankedPrediction<T>>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.predict(fields))
            .collect::<Result<Vec<_>>>()?;
        combine_member_predictions(per_member)
    }
}

/// Combines aligned member prediction lists (same keys in the same order).
pub fn combine_member_predictions<T: Scalar>(
    mut per_member: Vec<Vec<RankedPrediction<T>>>,
) -> Result<Vec<RankedPrediction<T>>> {
    if per_member.len() == 1 {
        return Ok(per_member.pop().expect("one member"));
    }
    let first = per_member
        .first()
        .ok_or_else(|| Error::Validation("an ensemble needs at least one member".into()))?;
    let keys: Vec<ElementKey> = first.iter().map(|p| p.key.clone()).collect();
    if per_member
        .iter()
        .any(|p| p.len() != keys.len() || p.iter().zip(&keys).any(|(x, k)| &x.key != k))
    {
        return Err(Error::Validation(
            "ensemble members predicted different elements".into(),
        ));
    }
    let n = T::from_usize_lossy(per_member.len());
    let mut out = Vec::with_capacity(keys.len());
    for (k, key) in keys.into_iter().enumerate() {
        let votes: Vec<(Metaclass, T)> = per_member.iter().map(|p| (p[k].metaclass, p[k].weights[0])).collect();
        let metaclass = ensemble_vote(&votes)?;
        let mut mean = [T::zero(); 6];
        for p in &per_member {
            for (stage, &w) in p[k].ranking.iter().zip(&p[k].weights) {
                mean[stage.position()] += w / n;
            }
        }
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| {
            mean[b]
                .partial_cmp(&mean[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        out.push(RankedPrediction {
            key,
            ranking: std::array::from_fn(|i| Stage::ALL[order[i]]),
            weights: std::array::from_fn(|i| mean[order[i]]),
            metaclass,
        });
    }
    Ok(out)
}

/// Plurality vote over `(metaclass, top weight)` pairs. Ties go to the
/// highest summed top weight, then to the lower metaclass index.
pub fn ensemble_vote<T: Scalar>(votes: &[(Metaclass, T)]) -> Result<Metaclass> {
    let mut tally: BTreeMap<usize, (usize, T)> = BTreeMap::new();
    for &(m, w) in votes {
        let e = tally.entry(m.index()).or_insert((0, T::zero()));
        e.0 += 1;
        e.1 += w;
    }
    let mut best: Option<(usize, usize, T)> = None;
    for (index, (count, weight)) in tally {
        best = match best {
            Some((_, c, w)) if count < c || (count == c && weight <= w) => best,
            _ => Some((index, count, weight)),
        };
    }
    let (index, _, _) = best.ok_or_else(|| Error::InsufficientData("no votes".into()))?;
    Metaclass::from_index(index)
}

/// Standard pipeline restricted to the two DoY encodings.
pub fn baseline_model<T: Scalar>(train: &[FieldSeries<T>], params: &FcmParams<T>) -> Result<PhenologyModel<T>> {
    Ok(PhenologyModel::train(train, &FeatureName::FORCED, params)?.model)
}

pub const RESULTS_HEADER: [&str; 7] = [
    "features",
    "kappa",
    "maxdiff0",
    "maxdiff1",
    "wkappa_linear",
    "wkappa_quadratic",
    "ndcg",
];

pub fn write_results_csv<W: Write>(results: &[SearchResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fail = |e: csv::Error| Error::Validation(format!("cannot write results: {e}"));
    w.write_record(RESULTS_HEADER).map_err(fail)?;
    for r in results {
        let s = &r.scores;
        w.write_record([
            feature_set_key(&r.features),
            s.kappa.to_string(),
            s.maxdiff0.to_string(),
            s.maxdiff1.to_string(),
            s.wkappa_linear.to_string(),
            s.wkappa_quadratic.to_string(),
            s.ndcg.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Error::Validation(format!("cannot write results: {e}")))?;
    Ok(())
}

/// Reads a results file; the convergence flag is not stored and reads as true.
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<SearchResult>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| Error::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse {
            row: 1,
            message: format!("expected header {}", RESULTS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {} is not a number: {:?}", RESULTS_HEADER[i], &rec[i]),
            })
        };
        let features = rec[0]
            .split('|')
            .map(str::parse)
            .collect::<Result<Vec<FeatureName>>>()?;
        out.push(SearchResult {
            features,
            scores: Scores {
                kappa: num(1)?,
                maxdiff0: num(2)?,
                maxdiff1: num(3)?,
                wkappa_linear: num(4)?,
                wkappa_quadratic: num(5)?,
                ndcg: num(6)?,
            },
            converged: true,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Vi, WeatherAggregate};
    use Stage::*;

    fn mc(p: Stage, s: Option<Stage>) -> Metaclass {
        Metaclass::new(p, s).unwrap()
    }

    #[test]
    fn refinement_enumeration_count() {
        // 15 top features including the two DoY encodings, lengths 6..=15
        assert_eq!(refinement_count(13, 6, 15), 7814);
        assert_eq!(refinement_count(0, 2, 2), 1);
        assert_eq!(binomial(30, 8), 5_852_925);
    }

    #[test]
    fn forced_only_pool_gives_baseline() {
        let config = SearchConfig {
            pool: FeatureName::FORCED.to_vec(),
            ..SearchConfig::default()
        };
        let sets = sample_feature_sets(&config);
        let all: Vec<_> = sets.values().flatten().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0], &FeatureName::FORCED.to_vec());
    }

    #[test]
    fn sampling_budget_and_forced_invariant() {
        let config = SearchConfig {
            samples_per_length: 50,
            ..SearchConfig::default()
        };
        let sets = sample_feature_sets(&config);
        // length 3 has only 30 combinations, enumerated exactly
        assert_eq!(sets[&3].len(), 30);
        for (&len, group) in &sets {
            assert!(group.len() <= 50 || len == 3);
            for s in group {
                assert_eq!(s.len(), len);
                assert!(FeatureName::FORCED.iter().all(|f| s.contains(f)));
                assert!(!s.contains(&FeatureName::Accumulated(WeatherAggregate::SoilMoistMax)));
            }
        }
        assert_eq!(sample_feature_sets(&config), sets);
        let other = sample_feature_sets(&SearchConfig { seed: 7, ..config });
        assert_ne!(other[&6], sets[&6]);
    }

    #[test]
    fn tiny_pool_is_exhaustive() {
        let pool = vec![
            FeatureName::Vi(Vi::Ndvi),
            FeatureName::Vi(Vi::Psri),
            FeatureName::Integral(Vi::Ndvi),
            FeatureName::Accumulated(WeatherAggregate::Gdd),
        ];
        let config = SearchConfig {
            pool,
            min_length: 3,
            max_length: 6,
            ..SearchConfig::default()
        };
        let total: usize = sample_feature_sets(&config).values().map(Vec::len).sum();
        assert_eq!(total, 4 + 6 + 4 + 1);
    }

    #[test]
    fn frequency_hand_tally() {
        let scores = Scores {
            kappa: 0.5,
            maxdiff0: 0.5,
            maxdiff1: 0.9,
            wkappa_linear: 0.5,
            wkappa_quadratic: 0.5,
            ndcg: 0.9,
        };
        let a = canonical_feature_set(&[
            FeatureName::Vi(Vi::Ndvi),
            FeatureName::Accumulated(WeatherAggregate::Gdd),
        ]);
        let b = canonical_feature_set(&[FeatureName::Vi(Vi::Ndvi), FeatureName::Vi(Vi::Psri)]);
        let results = [a, b].map(|features| SearchResult {
            features,
            scores: scores.clone(),
            converged: true,
        });
        let freq = feature_frequency(&results);
        // byte-wise name order puts upper-case VI names first
        assert_eq!(freq[0], (FeatureName::Vi(Vi::Ndvi), 2));
        assert_eq!(freq[1], (FeatureName::CosDoy, 2));
        assert_eq!(freq[2], (FeatureName::SinDoy, 2));
        assert_eq!(freq.len(), 5);
        assert!(freq[3..].iter().all(|x| x.1 == 1));
        assert_eq!(top_results(&results, 0.01).len(), 1);
        assert_eq!(top_results(&results, 1.0).len(), 2);
    }

    #[test]
    fn vote_rules() {
        let f_bd = mc(Flowering, Some(BollDevelopment));
        let bd_f = mc(BollDevelopment, Some(Flowering));
        assert_eq!(ensemble_vote(&[(f_bd, 0.5), (f_bd, 0.5), (bd_f, 0.9)]).unwrap(), f_bd);
        assert_eq!(ensemble_vote(&[(bd_f, 0.4)]).unwrap(), bd_f);
        // 2-2 tie: (F,BD) sums 0.5 + 0.45 = 0.95, (BD,F) sums 0.6 + 0.5 = 1.1
        let votes = [(f_bd, 0.5), (bd_f, 0.6), (f_bd, 0.45), (bd_f, 0.5)];
        assert_eq!(ensemble_vote(&votes).unwrap(), bd_f);
        // equal sums fall back to the lower index
        let votes = [(f_bd, 0.5), (bd_f, 0.5)];
        assert_eq!(ensemble_vote(&votes).unwrap(), f_bd);
        assert!(ensemble_vote::<f64>(&[]).is_err());
    }

    fn prediction(doy: u32, m: Metaclass, ranking: [Stage; 6], weights: [f64; 6]) -> RankedPrediction<f64> {
        RankedPrediction {
            key: ElementKey::new("a", doy),
            ranking,
            weights,
            metaclass: m,
        }
    }

    #[test]
    fn identical_members_reproduce_single_prediction() {
        let p = vec![prediction(
            120,
            mc(Flowering, Some(BollDevelopment)),
            [
                Flowering,
                BollDevelopment,
                Squaring,
                LeafDevelopment,
                RootEstablishment,
                BollOpening,
            ],
            [0.5, 0.3, 0.1, 0.05, 0.03, 0.02],
        )];
        let combined = combine_member_predictions(vec![p.clone(), p.clone(), p.clone()]).unwrap();
        assert_eq!(combined[0].metaclass, p[0].metaclass);
        assert_eq!(combined[0].ranking, p[0].ranking);
        for (a, b) in combined[0].weights.iter().zip(&p[0].weights) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(combine_member_predictions(vec![p.clone()]).unwrap(), p);
        let mut shifted = p.clone();
        shifted[0].key.doy = 121;
        assert!(combine_member_predictions(vec![p, shifted]).is_err());
    }

    #[test]
    fn field_split_is_seeded_and_disjoint() {
        let ids: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
        let (t, v) = split_fields(&ids, 0.3, 1);
        assert_eq!((t.len(), v.len()), (7, 3));
        assert!(v.iter().all(|x| !t.contains(x)));
        assert_eq!(split_fields(&ids, 0.3, 1), (t, v));
        assert_eq!(split_fields(&ids, 1.0, 1).1.len(), 10);
    }

    #[test]
    fn results_csv_round_trip() {
        let r = SearchResult {
            features: canonical_feature_set(&[FeatureName::Accumulated(WeatherAggregate::Gdd)]),
            scores: Scores {
                kappa: 0.1 + 0.2,
                maxdiff0: 1.0 / 3.0,
                maxdiff1: 0.9,
                wkappa_linear: -0.25,
                wkappa_quadratic: 0.75,
                ndcg: 0.8597,
            },
            converged: true,
        };
        let mut buf = Vec::new();
        write_results_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("features,kappa,maxdiff0,maxdiff1,wkappa_linear,wkappa_quadratic,ndcg\n"));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), vec![r]);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = SearchConfig {
            validation_fraction: 0.0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
