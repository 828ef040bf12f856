//! Predicts CVSS v3.1 base vectors from vulnerability descriptions with one
//! transformer-encoder classifier per base metric, and explains each
//! prediction with gradient-times-input token saliency.
//!
//! Module map:
//!
//! - [`cvss`]: vector grammar, base score, severity ratings
//! - [`nvd`]: NVD JSON 1.1 feed ingest, normalized dataset, splits
//! - [`textprep`]: vocabulary and fixed-length subword token sequences
//! - [`numerics`]: tensors, reverse-mode tape, optimizers
//! - [`model`]: encoder classifier, presets, checkpoints
//! - [`gradcheck`]: finite-difference gradient verification
//! - [`train`]: training schedule and evaluation metrics
//! - [`saliency`]: gradient-times-input scores and class associations
//! - [`pipeline`]: eight-metric prediction and shared configuration

pub mod cvss;
pub mod digest;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod nvd;
pub mod par;
pub mod pipeline;
pub mod saliency;
pub mod synth;
pub mod textprep;
pub mod train;

pub use cvss::{base_score, format_vector, parse_vector, CvssVector, Metric, Rating, Score, Severity};
pub use par::Execution;
