//! From cluster memberships to ranked growth-stage predictions.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView1;

use crate::data_model::{ElementKey, FieldSeries, Metaclass, Stage};
use crate::error::{Error, Result};
use crate::fcm::{fcm_fit, fcm_predict_memberships, FcmModel, FcmParams, PartitionMatrix};
use crate::features::{assemble_element_space, assemble_with_standardizer, ElementSpace, FeatureConfig, FeatureName};
use crate::scalar::Scalar;

/// Percentile of the third-ranked weights used as the secondary-stage threshold.
pub const THRESHOLD_PERCENTILE: f64 = 98.0;

/// Bijection from cluster id (0..6) to growth stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageMap {
    stage_of_cluster: [Stage; 6],
}

impl StageMap {
    /// `order[i]` is the cluster that represents the `i`-th stage (RE first).
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let distinct: BTreeSet<usize> = order.iter().copied().collect();
        if order.len() != Stage::COUNT || distinct.len() != Stage::COUNT || distinct.iter().any(|&c| c >= Stage::COUNT)
        {
            return Err(Error::Validation(format!(
                "cluster order {order:?} is not a permutation of 0..6"
            )));
        }
        let mut stage_of_cluster = [Stage::RootEstablishment; 6];
        for (pos, &cluster) in order.iter().enumerate() {
            stage_of_cluster[cluster] = Stage::ALL[pos];
        }
        Ok(StageMap { stage_of_cluster })
    }

    pub fn identity() -> Self {
        StageMap {
            stage_of_cluster: Stage::ALL,
        }
    }

    pub fn stage_of(&self, cluster: usize) -> Stage {
        self.stage_of_cluster[cluster]
    }

    pub fn cluster_of(&self, stage: Stage) -> usize {
        self.stage_of_cluster
            .iter()
            .position(|&s| s == stage)
            .expect("bijection")
    }

    /// Clusters in stage order.
    pub fn order(&self) -> [usize; 6] {
        Stage::ALL.map(|s| self.cluster_of(s))
    }
}

/// Order in which cluster ids first show up along a sequence.
pub fn first_appearance_order(sequence: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &c in sequence {
        if !seen.contains(&c) {
            seen.push(c);
        }
    }
    seen
}

/// Most common complete first-appearance permutation over the sequences.
/// Sequences that do not visit all `clusters` ids do not vote. Ties go to
/// the lexicographically smallest permutation.
pub fn modal_cluster_order(sequences: &[Vec<usize>], clusters: usize) -> Option<Vec<usize>> {
    let mut votes: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for seq in sequences {
        let order = first_appearance_order(seq);
        if order.len() == clusters {
            *votes.entry(order).or_default() += 1;
        }
    }
    let best = votes.values().copied().max()?;
    votes.into_iter().find(|(_, n)| *n == best).map(|(order, _)| order)
}

/// Clusters sorted by membership-weighted mean acquisition day.
pub fn order_by_weighted_mean_doy<T: Scalar>(keys: &[ElementKey], partition: &PartitionMatrix<T>) -> Vec<usize> {
    let c = partition.clusters();
    let mut means: Vec<(f64, usize)> = (0..c)
        .map(|l| {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, key) in keys.iter().enumerate() {
                let w = partition.weights()[[k, l]].as_f64();
                num += w * f64::from(key.doy);
                den += w;
            }
            (if den > 0.0 { num / den } else { f64::INFINITY }, l)
        })
        .collect();
    means.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    means.into_iter().map(|(_, l)| l).collect()
}

/// Assigns stages to clusters from the time order in which each field passes
/// through the clusters.
pub fn order_clusters<T: Scalar>(keys: &[ElementKey], partition: &PartitionMatrix<T>) -> Result<StageMap> {
    if partition.clusters() != Stage::COUNT {
        return Err(Error::Validation(format!(
            "stage ordering needs {} clusters, partition has {}",
            Stage::COUNT,
            partition.clusters()
        )));
    }
    if keys.len() != partition.nrows() {
        return Err(Error::Validation("keys and partition differ in length".into()));
    }
    let mut by_field: BTreeMap<&str, Vec<(u32, usize)>> = BTreeMap::new();
    for (k, key) in keys.iter().enumerate() {
        by_field
            .entry(key.field_id.as_str())
            .or_default()
            .push((key.doy, partition.hard_assignment(k)));
    }
    let sequences: Vec<Vec<usize>> = by_field
        .into_values()
        .map(|mut v| {
            v.sort_by_key(|&(doy, _)| doy);
            v.into_iter().map(|(_, c)| c).collect()
        })
        .collect();

    let distinct: BTreeSet<usize> = sequences.iter().flatten().copied().collect();
    if distinct.len() < Stage::COUNT {
        return Err(Error::Validation(format!(
            "only {} distinct clusters appear as hard assignments; check the season window",
            distinct.len()
        )));
    }
    match modal_cluster_order(&sequences, Stage::COUNT) {
        Some(order) => StageMap::from_order(&order),
        None => {
            log::info!("no field visits all six clusters; ordering clusters by weighted mean day");
            StageMap::from_order(&order_by_weighted_mean_doy(keys, partition))
        }
    }
}

/// Percentile with linear interpolation between order statistics
/// (rank `p/100 * (n - 1)`).
pub fn percentile<T: Scalar>(values: &[T], pct: f64) -> Option<T> {
    if values.is_empty() || !(0.0..=100.0).contains(&pct) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = T::lit(rank - lo as f64);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Third-largest weight of every row.
pub fn third_ranked_weights<T: Scalar>(partition: &PartitionMatrix<T>) -> Vec<T> {
    partition
        .weights()
        .rows()
        .into_iter()
        .map(|row| {
            let mut w = row.to_vec();
            w.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
            w[2]
        })
        .collect()
}

/// Secondary-stage threshold: the 98th percentile of the third-ranked
/// membership weights of the training partition.
pub fn calibrate_threshold<T: Scalar>(partition: &PartitionMatrix<T>) -> Result<T> {
    if partition.clusters() < 3 {
        return Err(Error::Validation(
            "threshold calibration needs at least 3 clusters".into(),
        ));
    }
    percentile(&third_ranked_weights(partition), THRESHOLD_PERCENTILE)
        .ok_or_else(|| Error::InsufficientData("empty partition".into()))
}

/// Stages ranked by membership weight for one element, plus the emitted
/// metaclass.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedPrediction<T> {
    pub key: ElementKey,
    pub ranking: [Stage; 6],
    /// Weights in ranking order, non-increasing.
    pub weights: [T; 6],
    pub metaclass: Metaclass,
}

/// Weights re-indexed by stage position (RE first).
pub fn stage_weights<T: Scalar>(weights: ArrayView1<'_, T>, map: &StageMap) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for (cluster, &w) in weights.iter().enumerate() {
        out[map.stage_of(cluster).position()] = w;
    }
    out
}

/// Stages sorted by descending weight; equal weights keep the lower cluster
/// id first.
pub fn rank_stages<T: Scalar>(weights: ArrayView1<'_, T>, map: &StageMap) -> ([Stage; 6], [T; 6]) {
    let mut clusters: Vec<usize> = (0..weights.len()).collect();
    clusters.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let ranking = std::array::from_fn(|i| map.stage_of(clusters[i]));
    let ranked = std::array::from_fn(|i| weights[clusters[i]]);
    (ranking, ranked)
}

/// Top stage is primary. The runner-up becomes the secondary stage when its
/// weight exceeds `threshold` and it is adjacent to the primary stage.
pub fn predict_metaclass<T: Scalar>(
    key: ElementKey,
    weights: ArrayView1<'_, T>,
    map: &StageMap,
    threshold: T,
) -> RankedPrediction<T> {
    let (ranking, ranked) = rank_stages(weights, map);
    let (primary, runner_up) = (ranking[0], ranking[1]);
    let secondary = if ranked[1] > threshold {
        if primary.is_adjacent(runner_up) {
            Some(runner_up)
        } else {
            log::debug!(
                "{}@{}: runner-up {runner_up} above threshold but not adjacent to {primary}; emitting unit set",
                key.field_id,
                key.doy
            );
            None
        }
    } else {
        None
    };
    let metaclass = Metaclass::new(primary, secondary).expect("secondary checked for adjacency");
    RankedPrediction {
        key,
        ranking,
        weights: ranked,
        metaclass,
    }
}

/// A fitted clustering with its stage assignment and secondary threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct PhenologyModel<T> {
    pub fcm: FcmModel<T>,
    pub stage_map: StageMap,
    pub threshold: T,
    /// Settings the training features were computed with, when known.
    pub feature_config: Option<FeatureConfig<T>>,
}

/// Result of [`PhenologyModel::train`].
#[derive(Clone, Debug)]
pub struct Training<T> {
    pub model: PhenologyModel<T>,
    pub space: ElementSpace<T>,
    pub partition: PartitionMatrix<T>,
}

impl<T: Scalar> PhenologyModel<T> {
    /// Fits on a full training season: clustering, stage ordering and
    /// threshold calibration.
    pub fn train(fields: &[FieldSeries<T>], selected: &[FeatureName], params: &FcmParams<T>) -> Result<Training<T>> {
        if params.clusters != Stage::COUNT {
            return Err(Error::Validation(format!(
                "phenology models use {} clusters, got {}",
                Stage::COUNT,
                params.clusters
            )));
        }
        let space = assemble_element_space(fields, selected)?;
        let (fcm, partition) = fcm_fit(&space, params)?;
        let stage_map = order_clusters(&space.keys, &partition)?;
        let threshold = calibrate_threshold(&partition)?;
        Ok(Training {
            model: PhenologyModel {
                fcm,
                stage_map,
                threshold,
                feature_config: None,
            },
            space,
            partition,
        })
    }

    pub fn features(&self) -> &[FeatureName] {
        &self.fcm.features
    }

    pub fn element_space(&self, fields: &[FieldSeries<T>]) -> Result<ElementSpace<T>> {
        assemble_with_standardizer(fields, &self.fcm.standardizer)
    }

    pub fn predict_space(&self, space: &ElementSpace<T>) -> Result<Vec<RankedPrediction<T>>> {
        let partition = fcm_predict_memberships(&self.fcm, space)?;
        Ok(space
            .keys
            .iter()
            .enumerate()
            .map(|(k, key)| predict_metaclass(key.clone(), partition.row(k), &self.stage_map, self.threshold))
            .collect())
    }

    /// Predictions ordered by field id, then day.
    pub fn predict(&self, fields: &[FieldSeries<T>]) -> Result<Vec<RankedPrediction<T>>> {
        self.predict_space(&self.element_space(fields)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    use Stage::*;

    #[test]
    fn unanimous_order() {
        let seqs = vec![vec![3, 3, 0, 5, 5, 1, 4, 2, 2]; 5];
        let order = modal_cluster_order(&seqs, 6).unwrap();
        assert_eq!(order, vec![3, 0, 5, 1, 4, 2]);
        let map = StageMap::from_order(&order).unwrap();
        assert_eq!(map.stage_of(3), RootEstablishment);
        assert_eq!(map.stage_of(0), LeafDevelopment);
        assert_eq!(map.stage_of(5), Squaring);
        assert_eq!(map.stage_of(1), Flowering);
        assert_eq!(map.stage_of(4), BollDevelopment);
        assert_eq!(map.stage_of(2), BollOpening);
        assert_eq!(map.order(), [3, 0, 5, 1, 4, 2]);
    }

    #[test]
    fn modal_permutation_wins_and_incomplete_sequences_abstain() {
        let mut seqs = vec![vec![0, 1, 2, 3, 4, 5]; 7];
        seqs.extend(vec![vec![1, 0, 2, 3, 4, 5]; 3]);
        seqs.extend(vec![vec![5, 4, 3]; 20]);
        assert_eq!(modal_cluster_order(&seqs, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(modal_cluster_order(&[vec![0, 1, 2]], 6), None);
    }

    #[test]
    fn invalid_stage_map_rejected() {
        assert!(StageMap::from_order(&[0, 1, 2, 3, 4, 4]).is_err());
        assert!(StageMap::from_order(&[0, 1, 2, 3, 4]).is_err());
        assert!(StageMap::from_order(&[0, 1, 2, 3, 4, 6]).is_err());
    }

    /// Season where stage s covers days [100 + 20 s, 120 + 20 s) and stage s
    /// is represented by cluster `perm[s]`.
    fn monotone_season(
        perm: [usize; 6],
        fields: usize,
        span: std::ops::Range<usize>,
    ) -> (Vec<ElementKey>, PartitionMatrix<f64>) {
        let mut keys = Vec::new();
        let mut rows = Vec::new();
        for f in 0..fields {
            // each field covers only part of the season
            let first = span.start + f % 4;
            for s in first..span.end.min(first + 3) {
                for d in [3u32, 10, 17] {
                    keys.push(ElementKey::new(format!("f{f}"), 100 + 20 * s as u32 + d));
                    let mut w = vec![0.02; 6];
                    w[perm[s]] = 0.9;
                    rows.extend(w);
                }
            }
        }
        let n = keys.len();
        (
            keys,
            PartitionMatrix::new(Array2::from_shape_vec((n, 6), rows).unwrap()).unwrap(),
        )
    }

    #[test]
    fn weighted_mean_day_fallback() {
        let perm = [4, 2, 0, 5, 1, 3];
        let (keys, partition) = monotone_season(perm, 8, 0..6);
        let map = order_clusters(&keys, &partition).unwrap();
        assert_eq!(map.order(), perm);
    }

    #[test]
    fn too_few_clusters_is_an_error() {
        let (keys, partition) = monotone_season([0, 1, 2, 3, 4, 5], 4, 0..3);
        let keys: Vec<_> = keys.into_iter().filter(|k| k.doy < 160).collect();
        let partition = partition.select_rows(&(0..keys.len()).collect::<Vec<_>>());
        assert!(matches!(order_clusters(&keys, &partition), Err(Error::Validation(_))));
    }

    #[test]
    fn percentile_rules() {
        assert_eq!(percentile(&[0.1; 50], 98.0), Some(0.1));
        // 0, 0.01, ..., 1.00: rank 0.98 * 100 = 98
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        assert!((percentile(&grid, 98.0).unwrap() - 0.98).abs() < 1e-12);
        // 10 values 1..=10: rank 8.82 between 9 and 10
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((percentile(&ten, 98.0).unwrap() - 9.82).abs() < 1e-12);
        assert_eq!(percentile::<f64>(&[], 98.0), None);
    }

    #[test]
    fn threshold_from_third_ranked_weights() {
        let w = array![
            [0.6, 0.2, 0.1, 0.05, 0.03, 0.02],
            [0.1, 0.6, 0.05, 0.2, 0.03, 0.02],
            [0.02, 0.03, 0.6, 0.1, 0.05, 0.2]
        ];
        let p = PartitionMatrix::new(w).unwrap();
        assert_eq!(third_ranked_weights(&p), vec![0.1, 0.1, 0.1]);
        assert!((calibrate_threshold::<f64>(&p).unwrap() - 0.1).abs() < 1e-15);
        let two = PartitionMatrix::new(array![[0.5, 0.5]]).unwrap();
        assert!(calibrate_threshold(&two).is_err());
    }

    fn weights_for(pairs: &[(Stage, f64)]) -> Vec<f64> {
        let mut w = vec![0.0; 6];
        let rest = (1.0 - pairs.iter().map(|p| p.1).sum::<f64>()) / (6 - pairs.len()) as f64;
        for s in Stage::ALL {
            w[s.position()] = pairs.iter().find(|p| p.0 == s).map_or(rest, |p| p.1);
        }
        w
    }

    #[test]
    fn metaclass_rule() {
        let key = ElementKey::new("f", 200);
        let map = StageMap::identity();
        let w = weights_for(&[(Flowering, 0.55), (BollDevelopment, 0.25), (Squaring, 0.10)]);
        let p = predict_metaclass(key.clone(), ArrayView1::from(&w), &map, 0.11);
        assert_eq!(p.metaclass, Metaclass::new(Flowering, Some(BollDevelopment)).unwrap());
        assert_eq!(&p.ranking[..3], &[Flowering, BollDevelopment, Squaring]);

        let w = weights_for(&[(Flowering, 0.75), (BollDevelopment, 0.05)]);
        let p = predict_metaclass(key.clone(), ArrayView1::from(&w), &map, 0.11);
        assert_eq!(p.metaclass, Metaclass::unit(Flowering));

        let w = weights_for(&[(Flowering, 0.55), (RootEstablishment, 0.20)]);
        let p = predict_metaclass(key, ArrayView1::from(&w), &map, 0.11);
        assert_eq!(p.ranking[1], RootEstablishment);
        assert_eq!(p.metaclass, Metaclass::unit(Flowering));
    }

    #[test]
    fn ties_prefer_lower_cluster() {
        let map = StageMap::from_order(&[5, 4, 3, 2, 1, 0]).unwrap();
        let w = [0.3, 0.3, 0.1, 0.1, 0.1, 0.1];
        let (ranking, _) = rank_stages(ArrayView1::from(&w), &map);
        assert_eq!(ranking[0], map.stage_of(0));
        assert_eq!(ranking[1], map.stage_of(1));
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_monotone_transform(
            raw in prop::collection::vec(0.001f64..1.0, 6),
            order in Just([0usize, 1, 2, 3, 4, 5]).prop_shuffle(),
        ) {
            let map = StageMap::from_order(&order).unwrap();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let squashed: Vec<f64> = w.iter().map(|x| (3.0 * x).exp() - 0.5).collect();
            let (a, _) = rank_stages(ArrayView1::from(&w), &map);
            let (b, _) = rank_stages(ArrayView1::from(&squashed), &map);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn emitted_metaclass_always_valid(
            raw in prop::collection::vec(0.001f64..1.0, 6),
            th in 0.0f64..0.5,
            order in Just([0usize, 1, 2, 3, 4, 5]).prop_shuffle(),
        ) {
            let map = StageMap::from_order(&order).unwrap();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let p = predict_metaclass(ElementKey::new("x", 1), ArrayView1::from(&w), &map, th);
            prop_assert!(p.weights.windows(2).all(|x| x[0] >= x[1]));
            prop_assert_eq!(p.metaclass.primary(), p.ranking[0]);
            if let Some(s) = p.metaclass.secondary() {
                prop_assert!(s.is_adjacent(p.ranking[0]));
                prop_assert!(p.weights[1] > th);
            }
            prop_assert!((1..=16).contains(&p.metaclass.index()));
        }
    }
}
