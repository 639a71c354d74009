//! Evaluation of ordinal multi-label phenology predictions.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data_model::{match_observation_to_acquisition, GroundObservation, Metaclass, Stage};
use crate::error::{Error, Result};
use crate::phenology::RankedPrediction;

/// Absolute distance on the 1..=16 metaclass scale.
pub fn displacement(pred: Metaclass, truth: Metaclass) -> usize {
    pred.displacement(truth)
}

fn check_pairs<A, B>(preds: &[A], truths: &[B]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} observations",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData("no prediction/observation pairs".into()));
    }
    Ok(())
}

/// Fraction of pairs whose displacement is at most `o`.
pub fn maxdiff_accuracy(preds: &[Metaclass], truths: &[Metaclass], o: usize) -> Result<f64> {
    check_pairs(preds, truths)?;
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| displacement(**p, **t) <= o)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeighting {
    Unweighted,
    Linear,
    Quadratic,
}

impl KappaWeighting {
    fn weight(self, a: usize, b: usize) -> f64 {
        let d = a.abs_diff(b) as f64;
        match self {
            KappaWeighting::Unweighted => f64::from(u8::from(a != b)),
            KappaWeighting::Linear => d,
            KappaWeighting::Quadratic => d * d,
        }
    }
}

/// Cohen's kappa on ordinal label positions.
pub fn cohen_kappa(preds: &[usize], truths: &[usize]) -> Result<f64> {
    weighted_kappa(preds, truths, KappaWeighting::Unweighted)
}

/// `1 - sum(w * O) / sum(w * E)` with disagreement weights `|i - j|`
/// (linear) or `(i - j)^2` (quadratic), where `i`, `j` are the label
/// positions themselves. Perfect agreement gives 1; a degenerate expected
/// disagreement gives 0 with a warning.
pub fn weighted_kappa(preds: &[usize], truths: &[usize], weighting: KappaWeighting) -> Result<f64> {
    check_pairs(preds, truths)?;
    let labels: Vec<usize> = preds
        .iter()
        .chain(truths)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let q = labels.len();
    let pos = |v: usize| labels.binary_search(&v).expect("label collected");
    let mut observed = vec![0.0; q * q];
    let mut row_marg = vec![0.0; q];
    let mut col_marg = vec![0.0; q];
    for (&p, &t) in preds.iter().zip(truths) {
        let (i, j) = (pos(t), pos(p));
        observed[i * q + j] += 1.0;
        row_marg[i] += 1.0;
        col_marg[j] += 1.0;
    }
    let n = preds.len() as f64;
    let (mut obs_dis, mut exp_dis) = (0.0, 0.0);
    for i in 0..q {
        for j in 0..q {
            let w = weighting.weight(labels[i], labels[j]);
            obs_dis += w * observed[i * q + j] / n;
            exp_dis += w * row_marg[i] * col_marg[j] / (n * n);
        }
    }
    if obs_dis == 0.0 {
        return Ok(1.0);
    }
    if exp_dis == 0.0 {
        log::warn!("kappa undefined for degenerate marginals; reporting 0");
        return Ok(0.0);
    }
    Ok(1.0 - obs_dis / exp_dis)
}

/// 6x6 principal-stage confusion matrix; rows are observations, columns
/// predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipalConfusion {
    pub counts: [[u64; 6]; 6],
}

impl PrincipalConfusion {
    pub fn from_counts(counts: [[u64; 6]; 6]) -> Self {
        PrincipalConfusion { counts }
    }

    pub fn from_pairs(preds: &[Stage], truths: &[Stage]) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::Validation(
                "predictions and observations differ in length".into(),
            ));
        }
        let mut counts = [[0u64; 6]; 6];
        for (p, t) in preds.iter().zip(truths) {
            counts[t.position()][p.position()] += 1;
        }
        Ok(PrincipalConfusion { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..6).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

/// Same as [`PrincipalConfusion::from_pairs`] followed by the accuracy.
pub fn confusion_principal(preds: &[Stage], truths: &[Stage]) -> Result<(PrincipalConfusion, f64)> {
    let m = PrincipalConfusion::from_pairs(preds, truths)?;
    let acc = m.accuracy();
    Ok((m, acc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRow {
    pub index: usize,
    pub metaclass: String,
    pub support: usize,
    pub mean_displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    pub min_support: usize,
    pub rows: Vec<DisplacementRow>,
    pub total_support: usize,
    /// Support-weighted mean over the listed rows.
    pub average: f64,
}

pub const DEFAULT_MIN_SUPPORT: usize = 10;

/// Mean displacement per observed metaclass with at least `min_support`
/// observations: the row-normalized 16x16 confusion matrix multiplied
/// element-wise by the `|i - j|` weight matrix and summed along each row.
pub fn displacement_report(
    preds: &[Metaclass],
    truths: &[Metaclass],
    min_support: usize,
) -> Result<DisplacementReport> {
    check_pairs(preds, truths)?;
    let mut confusion = [[0usize; 16]; 16];
    for (p, t) in preds.iter().zip(truths) {
        confusion[t.index() - 1][p.index() - 1] += 1;
    }
    let mut rows = Vec::new();
    for (i, row) in confusion.iter().enumerate() {
        let support: usize = row.iter().sum();
        if support == 0 || support < min_support {
            continue;
        }
        let mean = row
            .iter()
            .enumerate()
            .map(|(j, &n)| (n as f64 / support as f64) * i.abs_diff(j) as f64)
            .sum();
        rows.push(DisplacementRow {
            index: i + 1,
            metaclass: Metaclass::from_index(i + 1)?.to_string(),
            support,
            mean_displacement: mean,
        });
    }
    let total_support: usize = rows.iter().map(|r| r.support).sum();
    let average = if total_support == 0 {
        0.0
    } else {
        rows.iter().map(|r| r.mean_displacement * r.support as f64).sum::<f64>() / total_support as f64
    };
    Ok(DisplacementReport {
        min_support,
        rows,
        total_support,
        average,
    })
}

/// NDCG over the two top-ranked stages. Relevance is 2 for the observed
/// primary stage, 1 for the observed secondary stage and 0 otherwise.
pub fn ndcg_at_2(ranking: &[Stage], truth: Metaclass) -> f64 {
    let rel = |s: Stage| {
        if s == truth.primary() {
            2.0
        } else if Some(s) == truth.secondary() {
            1.0
        } else {
            0.0
        }
    };
    let discount = 1.0 / 3f64.log2();
    let dcg = ranking.first().map_or(0.0, |&s| rel(s)) + ranking.get(1).map_or(0.0, |&s| rel(s)) * discount;
    let idcg = if truth.secondary().is_some() {
        2.0 + discount
    } else {
        2.0
    };
    dcg / idcg
}

/// Krippendorff's alpha with the ordinal difference metric for two raters.
/// Values are ordinal positions; `None` marks a missing rating. Only units
/// rated by both raters are pairable.
pub fn krippendorff_alpha_ordinal(rater_a: &[Option<usize>], rater_b: &[Option<usize>]) -> Result<f64> {
    if rater_a.len() != rater_b.len() {
        return Err(Error::Validation("raters cover different numbers of units".into()));
    }
    let pairs: Vec<(usize, usize)> = rater_a
        .iter()
        .zip(rater_b)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 pairable units".into()));
    }
    let values: Vec<usize> = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let q = values.len();
    let pos = |v: usize| values.binary_search(&v).expect("value collected");
    // coincidence matrix; each unit has two values, weight 1/(2-1)
    let mut o = vec![0.0; q * q];
    for &(a, b) in &pairs {
        let (i, j) = (pos(a), pos(b));
        o[i * q + j] += 1.0;
        o[j * q + i] += 1.0;
    }
    let marg: Vec<f64> = (0..q).map(|c| (0..q).map(|k| o[c * q + k]).sum()).collect();
    let n: f64 = marg.iter().sum();
    let delta2 = |c: usize, k: usize| {
        let (lo, hi) = (c.min(k), c.max(k));
        let span: f64 = marg[lo..=hi].iter().sum::<f64>() - (marg[c] + marg[k]) / 2.0;
        span * span
    };
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..q {
        for k in 0..q {
            let d = delta2(c, k);
            d_o += o[c * q + k] * d;
            d_e += marg[c] * marg[k] * d;
        }
    }
    if d_o == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * d_o / d_e)
}

/// One evaluated element: the emitted metaclass and stage ranking against
/// the ground observation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedPair {
    pub predicted: Metaclass,
    pub ranking: [Stage; 6],
    pub observed: Metaclass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementScores {
    pub cohen_kappa: f64,
    pub weighted_kappa_linear: f64,
    pub weighted_kappa_quadratic: f64,
}

fn agreement(preds: &[usize], truths: &[usize]) -> Result<AgreementScores> {
    Ok(AgreementScores {
        cohen_kappa: cohen_kappa(preds, truths)?,
        weighted_kappa_linear: weighted_kappa(preds, truths, KappaWeighting::Linear)?,
        weighted_kappa_quadratic: weighted_kappa(preds, truths, KappaWeighting::Quadratic)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalReport {
    pub confusion: PrincipalConfusion,
    pub accuracy: f64,
    pub agreement: AgreementScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub support: usize,
    /// Counts of displacement 0, 1, 2, 3 and more than 3.
    pub diff_counts: [usize; 5],
    /// maxdiff-0 .. maxdiff-3
    pub maxdiff: [f64; 4],
    /// Kappa family on metaclass indices.
    pub metaclass_agreement: AgreementScores,
    /// Confusion, accuracy and kappa family on primary stages.
    pub principal: PrincipalReport,
    pub displacement: DisplacementReport,
    pub mean_ndcg_at_2: f64,
    pub note: String,
}

pub fn evaluate(pairs: &[EvaluatedPair], min_support: usize) -> Result<EvaluationReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no evaluated pairs".into()));
    }
    let preds: Vec<Metaclass> = pairs.iter().map(|p| p.predicted).collect();
    let truths: Vec<Metaclass> = pairs.iter().map(|p| p.observed).collect();
    let mut diff_counts = [0usize; 5];
    for (p, t) in preds.iter().zip(&truths) {
        diff_counts[displacement(*p, *t).min(4)] += 1;
    }
    let mut maxdiff = [0.0; 4];
    for (o, slot) in maxdiff.iter_mut().enumerate() {
        *slot = maxdiff_accuracy(&preds, &truths, o)?;
    }
    let pi: Vec<usize> = preds.iter().map(|m| m.index()).collect();
    let ti: Vec<usize> = truths.iter().map(|m| m.index()).collect();
    let pp: Vec<Stage> = preds.iter().map(|m| m.primary()).collect();
    let tp: Vec<Stage> = truths.iter().map(|m| m.primary()).collect();
    let confusion = PrincipalConfusion::from_pairs(&pp, &tp)?;
    let principal = PrincipalReport {
        accuracy: confusion.accuracy(),
        confusion,
        agreement: agreement(
            &pp.iter().map(|s| s.position()).collect::<Vec<_>>(),
            &tp.iter().map(|s| s.position()).collect::<Vec<_>>(),
        )?,
    };
    let ndcg = pairs.iter().map(|p| ndcg_at_2(&p.ranking, p.observed)).sum::<f64>() / pairs.len() as f64;
    Ok(EvaluationReport {
        support: pairs.len(),
        diff_counts,
        maxdiff,
        metaclass_agreement: agreement(&pi, &ti)?,
        principal,
        displacement: displacement_report(&preds, &truths, min_support)?,
        mean_ndcg_at_2: ndcg,
        note: "displacement rows use a row-normalized confusion matrix (per observed metaclass)".into(),
    })
}

impl EvaluationReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "support            {}", self.support);
        for (o, v) in self.maxdiff.iter().enumerate() {
            let _ = writeln!(s, "maxdiff-{o}          {v:.4}");
        }
        let a = &self.metaclass_agreement;
        let _ = writeln!(s, "cohen kappa        {:.4}", a.cohen_kappa);
        let _ = writeln!(s, "wkappa linear      {:.4}", a.weighted_kappa_linear);
        let _ = writeln!(s, "wkappa quadratic   {:.4}", a.weighted_kappa_quadratic);
        let _ = writeln!(s, "NDCG@2             {:.4}", self.mean_ndcg_at_2);
        let _ = writeln!(
            s,
            "diff-0..3,>3       {}",
            self.diff_counts.map(|c| c.to_string()).join(" / ")
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "principal stages: accuracy {:.4}, kappa {:.4}",
            self.principal.accuracy, self.principal.agreement.cohen_kappa
        );
        let _ = writeln!(
            s,
            "truth\\pred {}",
            Stage::ALL.map(|st| format!("{:>6}", st.token())).join("")
        );
        for (i, row) in self.principal.confusion.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<10} {}",
                Stage::ALL[i].token(),
                row.map(|c| format!("{c:>6}")).join("")
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "displacement (support >= {}; {})",
            self.displacement.min_support, self.note
        );
        for r in &self.displacement.rows {
            let _ = writeln!(
                s,
                "{:>3} {:<10} {:>6} {:>8.2}",
                r.index, r.metaclass, r.support, r.mean_displacement
            );
        }
        let _ = writeln!(
            s,
            "    {:<10} {:>6} {:>8.2}",
            "average", self.displacement.total_support, self.displacement.average
        );
        s
    }
}

/// Where an observation was joined to the prediction series.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMatch {
    pub field_id: String,
    pub visit_doy: u32,
    pub prediction_doy: u32,
    pub day_gap: u32,
}

/// Observations joined to their nearest prediction of the same field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<EvaluatedPair>,
    pub matches: Vec<ObservationMatch>,
    /// Observations whose field has no prediction at all.
    pub unmatched: Vec<GroundObservation>,
}

/// Joins each observation to the prediction of its field at the nearest
/// acquisition day (earlier day on ties). `predictions` must be sorted by
/// field id and day, as produced by the prediction pipeline.
pub fn pair_with_observations<T>(
    predictions: &[RankedPrediction<T>],
    observations: &[GroundObservation],
) -> Result<Pairing> {
    let mut pairing = Pairing::default();
    for obs in observations {
        let observed = obs.metaclass()?;
        let start = predictions.partition_point(|p| p.key.field_id.as_str() < obs.field_id.as_str());
        let end = start + predictions[start..].partition_point(|p| p.key.field_id == obs.field_id);
        let series = &predictions[start..end];
        if series.is_empty() {
            pairing.unmatched.push(obs.clone());
            continue;
        }
        let doys: Vec<u32> = series.iter().map(|p| p.key.doy).collect();
        let visit_doy = obs.visit_doy();
        let (doy, gap) = match_observation_to_acquisition(visit_doy, &doys)?;
        let pred = &series[doys.binary_search(&doy).expect("matched day is in the series")];
        pairing.pairs.push(EvaluatedPair {
            predicted: pred.metaclass,
            ranking: pred.ranking,
            observed,
        });
        pairing.matches.push(ObservationMatch {
            field_id: obs.field_id.clone(),
            visit_doy,
            prediction_doy: doy,
            day_gap: gap,
        });
    }
    Ok(pairing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Stage::*;

    fn mc(p: Stage, s: Option<Stage>) -> Metaclass {
        Metaclass::new(p, s).unwrap()
    }

    #[test]
    fn displacement_examples() {
        assert_eq!(
            displacement(Metaclass::unit(LeafDevelopment), mc(Squaring, Some(LeafDevelopment))),
            2
        );
        assert_eq!(displacement(Metaclass::unit(Flowering), Metaclass::unit(Flowering)), 0);
        assert_eq!(
            displacement(
                mc(BollDevelopment, Some(BollOpening)),
                mc(BollOpening, Some(BollDevelopment))
            ),
            1
        );
    }

    #[test]
    fn maxdiff_counts() {
        let truths: Vec<Metaclass> = [4, 4, 4, 4].map(|i| Metaclass::from_index(i).unwrap()).to_vec();
        let preds: Vec<Metaclass> = [4, 5, 6, 4].map(|i| Metaclass::from_index(i).unwrap()).to_vec();
        assert_eq!(maxdiff_accuracy(&preds, &truths, 1).unwrap(), 0.75);
        assert_eq!(maxdiff_accuracy(&preds, &truths, 3).unwrap(), 1.0);
        assert!(maxdiff_accuracy(&[], &[], 0).is_err());
    }

    #[test]
    fn kappa_hand_cases() {
        assert_eq!(cohen_kappa(&[1, 2, 3, 2], &[1, 2, 3, 2]).unwrap(), 1.0);
        assert!((cohen_kappa(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap()).abs() < 1e-12);
        assert_eq!(
            weighted_kappa(&[5, 5], &[5, 5], KappaWeighting::Quadratic).unwrap(),
            1.0
        );
        // one class in predictions, two in truth: p_o = 0.5, p_e = 0.5
        assert_eq!(cohen_kappa(&[0, 0], &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn kappa_binary_equivalence() {
        let p = [0, 1, 1, 0, 1, 1, 0, 0, 1];
        let t = [0, 1, 0, 0, 1, 1, 1, 0, 1];
        let k = cohen_kappa(&p, &t).unwrap();
        let kl = weighted_kappa(&p, &t, KappaWeighting::Linear).unwrap();
        assert!((k - kl).abs() < 1e-12);
    }

    #[test]
    fn confusion_accuracy() {
        let preds = [Flowering; 10];
        let mut truths = [Flowering; 10];
        truths[3] = BollDevelopment;
        let (m, acc) = confusion_principal(&preds, &truths).unwrap();
        assert!((acc - 0.9).abs() < 1e-12);
        assert_eq!(m.counts[4][3], 1);
        let (m, _) = confusion_principal(&Stage::ALL, &Stage::ALL).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.counts[i][j], u64::from(i == j));
            }
        }
    }

    #[test]
    fn displacement_report_hand_case() {
        // truth LD x4 predicted LD, (LD,S), LD, S; truth S x2 predicted S, (S,F)
        let t = |i: usize| Metaclass::from_index(i).unwrap();
        let truths = vec![t(4), t(4), t(4), t(4), t(7), t(7)];
        let preds = vec![t(4), t(5), t(4), t(7), t(7), t(8)];
        let r = displacement_report(&preds, &truths, 0).unwrap();
        assert_eq!(r.rows.len(), 2);
        // normalized row [0.5 at 0, 0.25 at 1, 0.25 at 3] -> 0.25 + 0.75
        assert!((r.rows[0].mean_displacement - 1.0).abs() < 1e-12);
        assert!((r.rows[1].mean_displacement - 0.5).abs() < 1e-12);
        assert!((r.average - 5.0 / 6.0).abs() < 1e-12);
        let r = displacement_report(&preds, &truths, 3).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.total_support, 4);
        let all = displacement_report(&truths, &truths, 0).unwrap();
        assert!(all.rows.iter().all(|r| r.mean_displacement == 0.0));
    }

    #[test]
    fn ndcg_cases() {
        let truth = mc(Flowering, Some(BollDevelopment));
        let ideal = [
            Flowering,
            BollDevelopment,
            Squaring,
            LeafDevelopment,
            RootEstablishment,
            BollOpening,
        ];
        assert_eq!(ndcg_at_2(&ideal, truth), 1.0);
        let swapped = [
            BollDevelopment,
            Flowering,
            Squaring,
            LeafDevelopment,
            RootEstablishment,
            BollOpening,
        ];
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_2(&swapped, truth) - expected).abs() < 1e-12);
        assert!((expected - 0.8597).abs() < 1e-4);
        assert_eq!(ndcg_at_2(&swapped, Metaclass::unit(BollDevelopment)), 1.0);
        assert_eq!(ndcg_at_2(&ideal, Metaclass::unit(BollOpening)), 0.0);
    }

    #[test]
    fn alpha_cases() {
        let a = [Some(1), Some(2), Some(3), Some(4)];
        assert_eq!(krippendorff_alpha_ordinal(&a, &a).unwrap(), 1.0);
        assert!(krippendorff_alpha_ordinal(&[Some(1), None], &[Some(1), Some(2)]).is_err());
        // textbook two-value example with a known result:
        // units (1,1),(1,2),(2,2),(2,2) -> n=8, n1=3, n2=5, o12=1
        // delta^2 = (3 + 5 - 4)^2 = 16, D_o = 2*16 = 32, D_e = 2*3*5*16 = 480
        let alpha = krippendorff_alpha_ordinal(
            &[Some(1), Some(1), Some(2), Some(2)],
            &[Some(1), Some(2), Some(2), Some(2)],
        )
        .unwrap();
        assert!((alpha - (1.0 - 7.0 * 32.0 / 480.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_self_agreement() {
        let pairs: Vec<EvaluatedPair> = Metaclass::all()
            .map(|m| {
                let mut ranking: Vec<Stage> = vec![m.primary()];
                ranking.extend(m.secondary());
                ranking.extend(
                    Stage::ALL
                        .iter()
                        .filter(|s| !ranking.contains(s))
                        .copied()
                        .collect::<Vec<_>>(),
                );
                EvaluatedPair {
                    predicted: m,
                    ranking: ranking.try_into().unwrap(),
                    observed: m,
                }
            })
            .collect();
        let r = evaluate(&pairs, 0).unwrap();
        assert_eq!(r.maxdiff, [1.0; 4]);
        assert_eq!(r.metaclass_agreement.cohen_kappa, 1.0);
        assert_eq!(r.mean_ndcg_at_2, 1.0);
        assert_eq!(r.principal.accuracy, 1.0);
        assert!(r.to_table().contains("maxdiff-0"));
    }

    proptest! {
        #[test]
        fn maxdiff_monotone(pairs in prop::collection::vec((1usize..=16, 1usize..=16), 1..50)) {
            let p: Vec<Metaclass> = pairs.iter().map(|x| Metaclass::from_index(x.0).unwrap()).collect();
            let t: Vec<Metaclass> = pairs.iter().map(|x| Metaclass::from_index(x.1).unwrap()).collect();
            let mut prev = 0.0;
            for o in 0..=15 {
                let v = maxdiff_accuracy(&p, &t, o).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn displacement_average_matches_direct_mean(pairs in prop::collection::vec((1usize..=16, 1usize..=16), 1..80)) {
            let p: Vec<Metaclass> = pairs.iter().map(|x| Metaclass::from_index(x.0).unwrap()).collect();
            let t: Vec<Metaclass> = pairs.iter().map(|x| Metaclass::from_index(x.1).unwrap()).collect();
            let r = displacement_report(&p, &t, 0).unwrap();
            let direct = pairs.iter().map(|x| x.0.abs_diff(x.1) as f64).sum::<f64>() / pairs.len() as f64;
            prop_assert!((r.average - direct).abs() < 1e-9);
        }

        #[test]
        fn kappa_bounded(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..40)) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            for w in [KappaWeighting::Unweighted, KappaWeighting::Linear, KappaWeighting::Quadratic] {
                let k = weighted_kappa(&p, &t, w).unwrap();
                prop_assert!(k <= 1.0 + 1e-12);
                prop_assert_eq!(k == 1.0, p == t);
            }
        }

        #[test]
        fn ndcg_bounded(order in Just(Stage::ALL.to_vec()).prop_shuffle(), idx in 1usize..=16) {
            let truth = Metaclass::from_index(idx).unwrap();
            let v = ndcg_at_2(&order, truth);
            prop_assert!((0.0..=1.0).contains(&v));
            let ideal = order[0] == truth.primary() && (truth.secondary().is_none() || Some(order[1]) == truth.secondary());
            prop_assert_eq!(v == 1.0, ideal);
        }
    }
}
