//! Workbench for rare-event classification of multivariate time series:
//! statistical feature extraction, zero-one normalization, class-balancing
//! samplers, a class-weighted kernel SVM, skill scores and partition-aware
//! evaluation on synthetic flare-like data.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the bottom of this file fix it to `f64`.

pub mod error;
pub mod experiments;
pub mod features;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod normalize;
pub mod sampling;
pub mod scalar;
pub mod seed;
pub mod svm;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use features::{extract_features, select_features, FeatureSet, StatKind};
pub use harness::{ExperimentId, Normalization, Remedy, TrialSpec};
pub use metrics::{ConfusionMatrix, Scores};
pub use sampling::{Strategy, WeightMode};
pub use scalar::Scalar;
pub use types::{ClassCounts, FlareClass, SuperClass};

pub type Real = f64;
pub type Slice = types::MvtsSlice<Real>;
pub type Dataset = types::Dataset<Real>;
pub type Record = types::FeatureRecord<Real>;
pub type Weights = sampling::ClassWeights<Real>;
pub type SvmConfig = svm::SvmConfig<Real>;
pub type SvmModel = svm::SvmModel<Real>;
pub type Stats = normalize::NormalizationStats<Real>;
pub type TrialRecord = harness::TrialRecord<Real>;
pub type TrialResult = harness::TrialResult<Real>;
pub type RunConfig = experiments::RunConfig<Real>;
