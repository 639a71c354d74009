//! Pipeline configuration: a TOML file, overridable from the command line,
//! with an effective-config snapshot written next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cotton_phenology::fcm::{FcmParams, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use cotton_phenology::features::{FeatureConfig, Vi, WeatherAggregate, DEFAULT_BASE_TEMPERATURE, DEFAULT_START_DOY};
use cotton_phenology::search::SearchConfig;
use cotton_phenology::{Error, FeatureName, GddConvention, Result, Stage};

use crate::synth::SynthConfig;

pub const SNAPSHOT_FILE: &str = "effective_config.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Training-season inputs.
    pub satellite: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    /// Evaluation-season inputs and labels.
    pub eval_satellite: Option<PathBuf>,
    pub eval_weather: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Model or ensemble file used by `predict`.
    pub model: Option<PathBuf>,
    /// Prediction files used by `evaluate` and `report`.
    pub predictions: Option<PathBuf>,
    pub baseline_predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Season {
    pub start_doy: u32,
    pub end_doy: u32,
}

impl Default for Season {
    fn default() -> Self {
        Season {
            start_doy: DEFAULT_START_DOY,
            end_doy: 366,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcmSection {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Treat a fit that hits the iteration cap as a failure.
    pub require_convergence: bool,
}

impl Default for FcmSection {
    fn default() -> Self {
        FcmSection {
            clusters: Stage::COUNT,
            fuzzifier: 2.0,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            require_convergence: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    /// Features of the fitted model; the DoY encodings are always added.
    pub selected: Vec<FeatureName>,
    pub gdd_convention: GddConvention,
    pub base_temperature: f64,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            selected: vec![
                FeatureName::Vi(Vi::Ndvi),
                FeatureName::Vi(Vi::Psri),
                FeatureName::Integral(Vi::Ndvi),
                FeatureName::Accumulated(WeatherAggregate::Gdd),
            ],
            gdd_convention: GddConvention::Mean,
            base_temperature: DEFAULT_BASE_TEMPERATURE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds clustering, search sampling, the validation split and synth.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub season: Season,
    pub fcm: FcmSection,
    pub features: FeatureSection,
    pub search: SearchConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            season: Season::default(),
            fcm: FcmSection::default(),
            features: FeatureSection::default(),
            search: SearchConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line values that replace configuration entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub start_doy: Option<u32>,
    pub end_doy: Option<u32>,
    pub gdd_convention: Option<GddConvention>,
    pub out_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("configuration: {e}")))
    }

    /// Reads the configuration file (relative paths inside it are taken
    /// relative to the file), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut cfg = Self::from_toml(&text)?;
                let base = p.parent().unwrap_or(Path::new("."));
                let paths = &mut cfg.paths;
                for slot in [
                    &mut paths.satellite,
                    &mut paths.weather,
                    &mut paths.eval_satellite,
                    &mut paths.eval_weather,
                    &mut paths.ground_truth,
                    &mut paths.model,
                    &mut paths.predictions,
                    &mut paths.baseline_predictions,
                ] {
                    resolve(base, slot);
                }
                if cfg.out_dir.is_relative() {
                    cfg.out_dir = base.join(&cfg.out_dir);
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(d) = o.start_doy {
            self.season.start_doy = d;
        }
        if let Some(d) = o.end_doy {
            self.season.end_doy = d;
        }
        if let Some(g) = o.gdd_convention {
            self.features.gdd_convention = g;
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        self.search.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.season;
        if s.start_doy == 0 || s.end_doy > 366 || s.start_doy >= s.end_doy {
            return Err(Error::Validation(format!(
                "season window {}..{} must satisfy 1 <= start < end <= 366",
                s.start_doy, s.end_doy
            )));
        }
        if self.fcm.clusters != Stage::COUNT {
            return Err(Error::Validation(format!(
                "phenology models use {} clusters, got {}",
                Stage::COUNT,
                self.fcm.clusters
            )));
        }
        if !self.features.base_temperature.is_finite() {
            return Err(Error::Validation("base temperature must be finite".into()));
        }
        self.fcm_params().validate()?;
        self.search.validate()?;
        self.synth.validate()
    }

    pub fn fcm_params(&self) -> FcmParams<f64> {
        FcmParams {
            clusters: self.fcm.clusters,
            fuzzifier: self.fcm.fuzzifier,
            tolerance: self.fcm.tolerance,
            max_iterations: self.fcm.max_iterations,
            seed: self.seed,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig<f64> {
        FeatureConfig {
            start_doy: self.season.start_doy,
            end_doy: self.season.end_doy,
            base_temperature: self.features.base_temperature,
            gdd: self.features.gdd_convention,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("configuration snapshot: {e}")))
    }

    /// Writes `effective_config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = PipelineConfig::from_toml("seed = 3\n[season]\nstart_doy = 90\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            end_doy: Some(300),
            gdd_convention: Some(GddConvention::Paper),
            ..Overrides::default()
        });
        assert_eq!((cfg.seed, cfg.search.seed, cfg.synth.seed), (9, 9, 9));
        assert_eq!((cfg.season.start_doy, cfg.season.end_doy), (90, 300));
        assert_eq!(cfg.features.gdd_convention, GddConvention::Paper);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_toml("[fcm]\nfuzzifier = 3.0\n")
            .unwrap()
            .validate()
            .is_err());
        assert!(PipelineConfig::from_toml("[season]\nstart_doy = 200\nend_doy = 150\n")
            .unwrap()
            .validate()
            .is_err());
        assert!(PipelineConfig::from_toml("[fcm]\nclusters = 5\n")
            .unwrap()
            .validate()
            .is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[features]\nselected = [\"NOPE\"]\n").is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[paths]\nsatellite = \"data/sat.csv\"\n").unwrap();
        let cfg = PipelineConfig::load(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(cfg.paths.satellite.unwrap(), dir.path().join("data/sat.csv"));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
    }
}
