//! Representation-level augmentation for pooled encoder embeddings.
//!
//! The crate covers everything downstream of a frozen audio or speech encoder:
//!
//! * [`store`]: the REPA binary embedding format, CSV import, and a synthetic
//!   Gaussian-blob generator for desk-scale experiments.
//! * [`augment`]: band masking with mean replacement and class-conditional
//!   Gaussian noise, sampled through a seeded [`noise::NoiseSource`].
//! * [`nn`]: a LayerNorm + linear classifier head with analytic gradients,
//!   Adam, and a finite-difference gradient checker.
//! * [`trainer`]: the seeded training loop and multi-seed aggregation.
//! * [`metrics`]: confusion matrix, specificity, sensitivity and score.
//!
//! With the default `parallel` feature, per-example work and independent seeds
//! run on rayon; without it the same code paths run sequentially. Reductions
//! always happen in a fixed order, so both builds produce bit-identical results.

pub mod augment;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod par;
pub mod store;
pub mod trainer;

pub use augment::{AugmentConfig, AugmentMode, Band, MaskSpec, Replacement};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{ConfusionMatrix, EvalReport, MetricSummary, SeedAggregate};
pub use nn::{AdamConfig, AdamState, ClassifierParams, GradCheckReport, Gradients};
pub use noise::{NoiseSource, ScriptedNoise, SeededNoise};
pub use store::{ClassLabel, Dataset, FeatureVector, LabeledExample, Split, SynthSpec};
pub use trainer::{Preset, RunResult, TrainConfig};

/// Number of output classes (normal, crackle, wheeze, both).
pub const NUM_CLASSES: usize = 4;
