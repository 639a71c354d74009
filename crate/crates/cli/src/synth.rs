//! Synthetic cotton seasons with known stage boundaries.
//!
//! Each field gets a sowing day and six stage durations drawn from the
//! agronomic ranges in [`STAGE_DURATIONS`]. Plants in a field do not switch
//! stage on the same day: the share of plants past each boundary follows a
//! logistic curve with time constant `transition_days`. Band reflectance is
//! the share-weighted mix of per-stage canopy signatures, themselves mixtures
//! of soil, green, senescent and lint end-members. Ground visits fall on
//! acquisition days; the observer records the boundary-defined stage as
//! primary and an adjacent stage as secondary once its share of plants
//! reaches `secondary_share`.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use cotton_phenology::features::{BandValues, SatelliteRecord, WeatherRecord};
use cotton_phenology::{Error, GroundObservation, Result, Stage};

/// Inclusive duration ranges in days per stage, RE to BO.
pub const STAGE_DURATIONS: [(u32, u32); 6] = [(15, 30), (35, 45), (15, 30), (20, 40), (25, 45), (10, 20)];

/// Inclusive sowing-day range.
pub const SOWING_DOYS: (u32, u32) = (100, 115);

// end-member reflectances for B02, B03, B04, B06, B08, B11, B12
const SOIL: [f64; 7] = [0.10, 0.13, 0.17, 0.22, 0.25, 0.32, 0.28];
const CANOPY: [f64; 7] = [0.03, 0.07, 0.03, 0.25, 0.50, 0.22, 0.10];
const DRY: [f64; 7] = [0.08, 0.11, 0.15, 0.25, 0.30, 0.35, 0.28];
const WHITE: [f64; 7] = [0.35, 0.36, 0.37, 0.38, 0.40, 0.36, 0.33];

/// End-member fractions (soil, green canopy, senescent canopy, lint and
/// flowers) of a field fully in each stage, RE to BO.
const STAGE_MIX: [[f64; 4]; 6] = [
    [0.95, 0.05, 0.0, 0.0],
    [0.75, 0.25, 0.0, 0.0],
    [0.55, 0.45, 0.0, 0.0],
    [0.15, 0.65, 0.0, 0.2],
    [0.0, 0.9, 0.05, 0.05],
    [0.0, 0.2, 0.4, 0.4],
];

fn stage_spectrum(stage: usize) -> [f64; 7] {
    let m = STAGE_MIX[stage];
    std::array::from_fn(|b| m[0] * SOIL[b] + m[1] * CANOPY[b] + m[2] * DRY[b] + m[3] * WHITE[b])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub fields: usize,
    /// 0 is noise free; 1 is a moderate level (relative band error 5%, weather
    /// sigma 1 degree, 10% cloudy acquisitions).
    pub noise: f64,
    pub seed: u64,
    pub year: i32,
    pub first_doy: u32,
    pub last_doy: u32,
    pub revisit_days: u32,
    /// Logistic time constant of stage transitions, in days.
    pub transition_days: f64,
    /// Share of plants at which an adjacent stage is reported as secondary.
    pub secondary_share: f64,
    /// Days between ground visits, inclusive range.
    pub visit_interval: (u32, u32),
    pub field_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fields: 40,
            noise: 0.0,
            seed: 0,
            year: 2021,
            first_doy: 100,
            last_doy: 330,
            revisit_days: 5,
            transition_days: 3.0,
            secondary_share: 0.3,
            visit_interval: (8, 14),
            field_prefix: "F".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fields == 0 {
            return Err(Error::Validation("synth needs at least one field".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Validation(format!(
                "noise level {} must be finite and >= 0",
                self.noise
            )));
        }
        if self.first_doy == 0 || self.first_doy >= self.last_doy || self.last_doy > 365 {
            return Err(Error::Validation(
                "synth window must satisfy 1 <= first < last <= 365".into(),
            ));
        }
        if self.revisit_days == 0 || self.visit_interval.0 == 0 || self.visit_interval.0 > self.visit_interval.1 {
            return Err(Error::Validation("revisit and visit intervals must be positive".into()));
        }
        if !(self.transition_days > 0.0 && self.transition_days.is_finite()) {
            return Err(Error::Validation("transition time constant must be positive".into()));
        }
        if !(self.secondary_share > 0.0 && self.secondary_share <= 0.5) {
            return Err(Error::Validation("secondary share must lie in (0, 0.5]".into()));
        }
        Ok(())
    }
}

/// True stage calendar of one synthetic field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSeason {
    pub field_id: String,
    pub sowing_doy: u32,
    /// Stage start days, RE to BO, followed by the harvest day.
    pub boundaries: [u32; 7],
}

impl FieldSeason {
    pub fn harvest_doy(&self) -> u32 {
        self.boundaries[6]
    }

    pub fn durations(&self) -> [u32; 6] {
        std::array::from_fn(|i| self.boundaries[i + 1] - self.boundaries[i])
    }

    /// Stage on a day; days before sowing count as RE and days after harvest
    /// as BO.
    pub fn stage_at(&self, doy: u32) -> Stage {
        let i = self.boundaries[1..6].iter().take_while(|&&b| doy >= b).count();
        Stage::ALL[i]
    }

    /// Share of plants in each stage on a day.
    pub fn shares(&self, doy: u32, tau: f64) -> [f64; 6] {
        let t = f64::from(doy);
        let past = |s: usize| match s {
            0 => 1.0,
            6 => 0.0,
            _ => 1.0 / (1.0 + (-(t - f64::from(self.boundaries[s])) / tau).exp()),
        };
        std::array::from_fn(|s| past(s) - past(s + 1))
    }

    /// Ground-truth observation on a visit day: primary stage, its share in
    /// percent and the secondary stage with its share, if reported.
    pub fn label_at(&self, doy: u32, tau: f64, secondary_share: f64) -> (Stage, u8, Option<(Stage, u8)>) {
        let shares = self.shares(doy, tau);
        let p = self.stage_at(doy).position();
        let neighbours = [p.checked_sub(1), (p < 5).then_some(p + 1)];
        let runner_up = neighbours
            .into_iter()
            .flatten()
            .max_by(|&a, &b| shares[a].total_cmp(&shares[b]));
        let pct = |x: f64| (100.0 * x).round() as u8;
        let primary_pct = pct(shares[p]);
        let secondary = runner_up
            .filter(|&s| shares[s] >= secondary_share)
            .map(|s| (Stage::ALL[s], pct(shares[s]).min(primary_pct)));
        (Stage::ALL[p], primary_pct, secondary)
    }

    /// Noise-free band reflectances on a day.
    pub fn reflectance(&self, doy: u32, tau: f64) -> [f64; 7] {
        let shares = self.shares(doy, tau);
        let spectra: [[f64; 7]; 6] = std::array::from_fn(stage_spectrum);
        std::array::from_fn(|b| (0..6).map(|s| shares[s] * spectra[s][b]).sum())
    }
}

/// Everything generated for one season.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub seasons: Vec<FieldSeason>,
    pub satellite: Vec<SatelliteRecord<f64>>,
    pub weather: Vec<WeatherRecord<f64>>,
    pub observations: Vec<GroundObservation>,
}

impl SynthDataset {
    /// True stage per acquisition, ordered like the satellite records.
    pub fn true_stages(&self) -> Vec<(String, u32, Stage)> {
        self.satellite
            .iter()
            .map(|r| {
                let season = self.season(&r.field_id).expect("record belongs to a generated field");
                (r.field_id.clone(), r.doy, season.stage_at(r.doy))
            })
            .collect()
    }

    pub fn season(&self, field_id: &str) -> Option<&FieldSeason> {
        self.seasons.iter().find(|s| s.field_id == field_id)
    }
}

fn draw_season(rng: &mut ChaCha8Rng, field_id: String) -> FieldSeason {
    let sowing = rng.random_range(SOWING_DOYS.0..=SOWING_DOYS.1);
    let mut boundaries = [sowing; 7];
    for (i, &(lo, hi)) in STAGE_DURATIONS.iter().enumerate() {
        boundaries[i + 1] = boundaries[i] + rng.random_range(lo..=hi);
    }
    FieldSeason {
        field_id,
        sowing_doy: sowing,
        boundaries,
    }
}

fn date(year: i32, doy: u32) -> Result<NaiveDate> {
    NaiveDate::from_yo_opt(year, doy).ok_or_else(|| Error::Validation(format!("day {doy} does not exist in {year}")))
}

fn seasonal(doy: f64, peak_doy: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (doy - peak_doy + 365.25 / 4.0) / 365.25).sin()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let width = cfg.fields.to_string().len().max(3);
    let mut data = SynthDataset {
        seasons: Vec::new(),
        satellite: Vec::new(),
        weather: Vec::new(),
        observations: Vec::new(),
    };
    for f in 0..cfg.fields {
        let field_id = format!("{}{:0width$}", cfg.field_prefix, f + 1);
        let season = draw_season(&mut rng, field_id.clone());
        let harvest = season.harvest_doy();
        let last = harvest.min(cfg.last_doy);

        let acquisitions: Vec<u32> = (cfg.first_doy..=last).step_by(cfg.revisit_days as usize).collect();
        for &doy in &acquisitions {
            let clean = season.reflectance(doy, cfg.transition_days);
            let cloudy = rng.random::<f64>() < 0.1 * cfg.noise;
            let mut noisy = clean;
            for v in &mut noisy {
                *v = (*v * (1.0 + 0.05 * cfg.noise * unit.sample(&mut rng))).max(0.001);
            }
            let bands = if cloudy {
                BandValues::default()
            } else {
                BandValues::complete(noisy[0], noisy[1], noisy[2], noisy[3], noisy[4], noisy[5], noisy[6])
            };
            data.satellite.push(SatelliteRecord {
                field_id: field_id.clone(),
                doy,
                bands,
            });
        }

        let offset = 0.5 * unit.sample(&mut rng);
        let weather_start = cfg.first_doy.saturating_sub(10).max(1);
        for doy in weather_start..=last {
            let t = f64::from(doy);
            let noise = |rng: &mut ChaCha8Rng, sd: f64| sd * cfg.noise * unit.sample(rng);
            let tmax = 24.0 + 10.0 * seasonal(t, 200.0) + offset + noise(&mut rng, 1.0);
            let tmin = tmax - 12.0 + noise(&mut rng, 0.5);
            let moist_min = (0.25 - 0.1 * seasonal(t, 200.0) + noise(&mut rng, 0.01)).max(0.01);
            data.weather.push(WeatherRecord {
                field_id: field_id.clone(),
                doy,
                tmax2m: tmax,
                tmin2m: tmin,
                surf_tmax: tmax + 3.0 + noise(&mut rng, 0.5),
                surf_tmin: tmin - 1.0 + noise(&mut rng, 0.5),
                soil_tmax: tmax - 2.0 + noise(&mut rng, 0.5),
                soil_tmin: tmin + 2.0 + noise(&mut rng, 0.5),
                soil_moist_min: moist_min,
                soil_moist_max: moist_min + 0.08,
                precip: (1.5 - 1.5 * seasonal(t, 200.0) + noise(&mut rng, 0.5)).max(0.0),
                rad_max: 600.0 + 300.0 * seasonal(t, 172.0) + noise(&mut rng, 20.0),
            });
        }

        let sowing = date(cfg.year, season.sowing_doy)?;
        let harvest_date = date(cfg.year, harvest)?;
        let mut visit = season.sowing_doy + rng.random_range(cfg.visit_interval.0..=cfg.visit_interval.1);
        while visit <= last {
            // visits are scheduled on the nearest acquisition day
            let i = acquisitions.partition_point(|&a| a < visit);
            let day = match (acquisitions.get(i.wrapping_sub(1)), acquisitions.get(i)) {
                (Some(&a), Some(&b)) => {
                    if visit - a <= b - visit {
                        a
                    } else {
                        b
                    }
                }
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => break,
            };
            let repeated = data
                .observations
                .last()
                .is_some_and(|o| o.field_id == field_id && o.visit_doy() == day);
            if day >= season.sowing_doy && day <= harvest && !repeated {
                let (primary, primary_pct, secondary) = season.label_at(day, cfg.transition_days, cfg.secondary_share);
                data.observations.push(GroundObservation {
                    field_id: field_id.clone(),
                    visit_date: date(cfg.year, day)?,
                    primary_stage: primary,
                    primary_pct,
                    secondary_stage: secondary.map(|s| s.0),
                    secondary_pct: secondary.map(|s| s.1),
                    sowing_date: sowing,
                    harvest_date,
                });
            }
            visit += rng.random_range(cfg.visit_interval.0..=cfg.visit_interval.1);
        }
        data.seasons.push(season);
    }
    Ok(data)
}
