//! End-to-end use of the public library API on small hand-built seasons.

use cotton_phenology::fcm::FcmParams;
use cotton_phenology::features::doy_encode;
use cotton_phenology::model_io::{
    ensemble_from_str, ensemble_to_string, load_any, model_from_str, model_to_string, save_model,
};
use cotton_phenology::phenology::PhenologyModel;
use cotton_phenology::search::ModelEnsemble;
use cotton_phenology::{FeatureName, FieldSeries, Scalar, Stage};

const STAGE_DAYS: u32 = 25;
const SOWING: u32 = 110;

fn features() -> Vec<FeatureName> {
    ["NDVI", "acc_gdd"].iter().map(|s| s.parse().unwrap()).collect()
}

/// Fields whose greenness rises and falls over six equal stages while heat
/// accumulates linearly. Each field is sown two days after the previous one.
fn season<T: Scalar>(fields: usize) -> Vec<FieldSeries<T>> {
    let variables: Vec<String> = ["sin_doy", "cos_doy", "NDVI", "acc_gdd"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    (0..fields)
        .map(|f| {
            let sowing = SOWING + 2 * f as u32;
            let mut series = FieldSeries::new(format!("F{f:02}"), variables.clone());
            for doy in (sowing..sowing + 6 * STAGE_DAYS).step_by(3) {
                let t = f64::from(doy - sowing) / f64::from(6 * STAGE_DAYS);
                let ndvi = 0.15 + 0.7 * (std::f64::consts::PI * t).sin().powi(2);
                let gdd = 15.0 * f64::from(doy - sowing);
                let (s, c) = doy_encode::<T>(doy).unwrap();
                series.push(doy, vec![s, c, T::lit(ndvi), T::lit(gdd)]).unwrap();
            }
            series
        })
        .collect()
}

fn true_stage(field: usize, doy: u32) -> Stage {
    let sowing = SOWING + 2 * field as u32;
    Stage::ALL[((doy - sowing) / STAGE_DAYS).min(5) as usize]
}

fn principal_accuracy<T: Scalar>(model: &PhenologyModel<T>, fields: &[FieldSeries<T>]) -> f64 {
    let preds = model.predict(fields).unwrap();
    let hits = preds
        .iter()
        .filter(|p| {
            let field: usize = p.key.field_id[1..].parse().unwrap();
            p.metaclass.primary() == true_stage(field, p.key.doy)
        })
        .count();
    hits as f64 / preds.len() as f64
}

#[test]
fn stages_follow_the_season_in_both_precisions() {
    let t64 = PhenologyModel::train(&season::<f64>(12), &features(), &FcmParams::default()).unwrap();
    let t32 = PhenologyModel::train(&season::<f32>(12), &features(), &FcmParams::default()).unwrap();
    let acc64 = principal_accuracy(&t64.model, &season::<f64>(12));
    let acc32 = principal_accuracy(&t32.model, &season::<f32>(12));
    assert!(acc64 > 0.7, "f64 accuracy {acc64}");
    assert!((acc64 - acc32).abs() < 0.05, "f64 {acc64} vs f32 {acc32}");

    let preds = t64.model.predict(&season::<f64>(1)).unwrap();
    assert_eq!(preds.first().unwrap().metaclass.primary(), Stage::RootEstablishment);
    assert_eq!(preds.last().unwrap().metaclass.primary(), Stage::BollOpening);
}

#[test]
fn predictions_are_ranked_and_normalized() {
    let training = PhenologyModel::train(&season::<f64>(8), &features(), &FcmParams::default()).unwrap();
    for p in training.model.predict(&season::<f64>(3)).unwrap() {
        assert!(p.weights.windows(2).all(|w| w[0] >= w[1]));
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p.metaclass.primary(), p.ranking[0]);
        match p.metaclass.secondary() {
            Some(s) => {
                assert_eq!(s, p.ranking[1]);
                assert!(p.weights[1] > training.model.threshold);
            }
            None => assert!(p.weights[1] <= training.model.threshold || !p.ranking[0].is_adjacent(p.ranking[1])),
        }
    }
}

#[test]
fn saved_models_predict_identically() {
    let training = PhenologyModel::train(&season::<f64>(8), &features(), &FcmParams::default()).unwrap();
    let model = training.model;
    let restored = model_from_str::<f64>(&model_to_string(&model).unwrap()).unwrap();
    assert_eq!(restored, model);

    let probe = season::<f64>(4);
    let ensemble = ModelEnsemble::new(vec![model.clone()]).unwrap();
    let restored_ensemble = ensemble_from_str::<f64>(&ensemble_to_string(&ensemble).unwrap()).unwrap();
    assert_eq!(
        restored_ensemble.predict(&probe).unwrap(),
        ensemble.predict(&probe).unwrap()
    );
    assert_eq!(ensemble.predict(&probe).unwrap(), model.predict(&probe).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    assert_eq!(
        load_any::<f64>(&path).unwrap().predict(&probe).unwrap(),
        model.predict(&probe).unwrap()
    );
}

#[test]
fn training_rejects_wrong_cluster_count() {
    let params = FcmParams {
        clusters: 4,
        ..FcmParams::default()
    };
    assert!(PhenologyModel::train(&season::<f64>(4), &features(), &params).is_err());
}

#[test]
fn fixed_seed_reproduces_the_fit() {
    let params = FcmParams {
        seed: 42,
        ..FcmParams::default()
    };
    let a = PhenologyModel::train(&season::<f64>(6), &features(), &params)
        .unwrap()
        .model;
    let b = PhenologyModel::train(&season::<f64>(6), &features(), &params)
        .unwrap()
        .model;
    assert_eq!(model_to_string(&a).unwrap(), model_to_string(&b).unwrap());
}
