//! Daily vegetation-related outage risk from weather and vegetation indices.
//!
//! The pipeline runs ingest, features, resampling, a logistic model and
//! evaluation. [`synth`] produces datasets with a known ground truth.

mod csv_util;

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod resample;
pub mod seed;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use features::{FeatureOptions, FeatureTable};
pub use model::LogisticModel;
