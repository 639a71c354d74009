//! Within-season cotton phenology estimation.
//!
//! Field-level vegetation indices and accumulated weather variables are
//! clustered with fuzzy c-means into six clusters that stand for the principal
//! growth stages. Membership weights are turned into ranked two-label
//! "metaclass" predictions on a 16-step ordinal scale, and evaluated with an
//! ordinal multi-label metric suite.
//!
//! The numeric core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`). The aliases at the crate root fix the scalar to `f64`,
//! which is what the command-line pipeline uses.

pub mod data_model;
pub mod error;
pub mod fcm;
pub mod features;
pub mod metrics;
pub mod model_io;
pub mod phenology;
pub mod scalar;
pub mod search;

pub use data_model::{ElementKey, FieldSeries, GroundObservation, Metaclass, Stage};
pub use error::{Error, Result};
pub use features::{FeatureCategory, FeatureName, GddConvention};
pub use scalar::Scalar;

pub type ElementSpace64 = features::ElementSpace<f64>;
pub type ElementSpace32 = features::ElementSpace<f32>;
pub type Standardizer64 = features::Standardizer<f64>;
pub type FieldSeries64 = data_model::FieldSeries<f64>;
pub type FcmModel64 = fcm::FcmModel<f64>;
pub type FcmModel32 = fcm::FcmModel<f32>;
pub type PartitionMatrix64 = fcm::PartitionMatrix<f64>;
pub type PhenologyModel64 = phenology::PhenologyModel<f64>;
pub type RankedPrediction64 = phenology::RankedPrediction<f64>;
pub type ModelEnsemble64 = search::ModelEnsemble<f64>;
