//! Seeded training of the classifier head on stored representations.
//!
//! Each epoch shuffles the train split with a permutation keyed by
//! `(seed, epoch)`, augments every example with its own noise stream keyed by
//! `(seed, epoch, example index)`, and applies one Adam step per batch. The
//! last short batch is kept. There is no schedule, early stopping or
//! checkpoint selection: the final parameters are evaluated on the clean test
//! split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{repaugment, AugmentConfig, AugmentMode};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, SeedAggregate};
use crate::nn::{adam_step, loss_and_grad, AdamConfig, AdamState, ClassifierParams};
use crate::noise::{derive_seed, NoiseSource, SeededNoise};
use crate::par;
use crate::store::{ClassLabel, Dataset, FeatureVector, LabeledExample, Split};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_4745;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Transformer and speech encoders: lr 5e-5, batch 8, 50 epochs.
    Transformer,
    /// CNN encoders: lr 1e-3, batch 64, 400 epochs.
    Cnn,
}

impl Preset {
    pub fn lr(self) -> f64 {
        match self {
            Preset::Transformer => 5e-5,
            Preset::Cnn => 1e-3,
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Preset::Transformer => 8,
            Preset::Cnn => 64,
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Preset::Transformer => 50,
            Preset::Cnn => 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: Option<Preset>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl TrainConfig {
    pub fn from_preset(preset: Preset, seed: u64, augment: AugmentConfig) -> Self {
        TrainConfig {
            preset: Some(preset),
            lr: preset.lr(),
            batch_size: preset.batch_size(),
            epochs: preset.epochs(),
            seed,
            augment,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config: TrainConfig,
    /// Mean training loss per epoch, measured on the augmented batches.
    pub loss_trace: Vec<f64>,
    pub report: EvalReport,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Randomness consumed by augmentation over the whole run.
    pub gaussian_draws: u64,
    pub index_draws: u64,
    pub params: ClassifierParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedResult {
    pub runs: Vec<RunResult>,
    pub aggregate: SeedAggregate,
}

/// The seed-keyed permutation used for one epoch.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE_STREAM, epoch as u64]));
    order.shuffle(&mut rng);
    order
}

struct Augmented {
    feature: FeatureVector,
    label: ClassLabel,
    gaussian: u64,
    index: u64,
}

fn augment_example(example: &LabeledExample, idx: usize, epoch: usize, config: &TrainConfig) -> Result<Augmented> {
    if config.augment.mode == AugmentMode::None {
        return Ok(Augmented {
            feature: example.feature.clone(),
            label: example.label,
            gaussian: 0,
            index: 0,
        });
    }
    let mut rng = SeededNoise::keyed(config.seed, &[AUGMENT_STREAM, epoch as u64, idx as u64]);
    let feature = repaugment(&example.feature, example.label, &config.augment, &mut rng)?;
    Ok(Augmented {
        feature,
        label: example.label,
        gaussian: rng.normal_draws(),
        index: rng.index_draws(),
    })
}

fn check_class_coverage(train: &[LabeledExample], test: &[LabeledExample]) -> Result<()> {
    for label in ClassLabel::ALL {
        let in_test = test.iter().any(|e| e.label == label);
        let in_train = train.iter().any(|e| e.label == label);
        if in_test && !in_train {
            return Err(Error::MissingTrainClass(label.name()));
        }
    }
    Ok(())
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<RunResult> {
    config.validate()?;
    let train_set = dataset.split_vec(Split::Train);
    let test_set = dataset.split_vec(Split::Test);
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if test_set.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    check_class_coverage(&train_set, &test_set)?;

    let dim = dataset.dim();
    let mut params = ClassifierParams::new(dim);
    let mut adam = AdamState::new(dim, AdamConfig::with_lr(config.lr));
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let (mut gaussian_draws, mut index_draws) = (0u64, 0u64);

    for epoch in 0..config.epochs {
        let order = epoch_permutation(train_set.len(), config.seed, epoch);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let augmented = par::map(chunk, |&idx| augment_example(&train_set[idx], idx, epoch, config));
            let mut batch = Vec::with_capacity(chunk.len());
            for a in augmented {
                let a = a?;
                gaussian_draws += a.gaussian;
                index_draws += a.index;
                batch.push((a.feature, a.label));
            }

            let (loss, grads) = loss_and_grad(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            adam_step(&mut params, &grads, &mut adam);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            epoch_loss += loss * batch.len() as f64;
        }
        let mean_loss = epoch_loss / train_set.len() as f64;
        log::debug!("seed {} epoch {epoch}: loss {mean_loss:.6}", config.seed);
        loss_trace.push(mean_loss);
    }

    let report = evaluate(&params, &test_set)?;
    log::info!(
        "seed {}: sp {:.4} se {:.4} score {:.4}",
        config.seed,
        report.sp,
        report.se,
        report.score
    );
    Ok(RunResult {
        seed: config.seed,
        config: config.clone(),
        loss_trace,
        report,
        train_examples: train_set.len(),
        test_examples: test_set.len(),
        gaussian_draws,
        index_draws,
        params,
    })
}

/// Trains once per seed (seeds may run concurrently) and aggregates the
/// evaluation reports in seed order.
pub fn train_multi_seed(dataset: &Dataset, config: &TrainConfig, seeds: &[u64]) -> Result<MultiSeedResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let runs = par::map(seeds, |&s| train(dataset, &config.with_seed(s)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let aggregate = SeedAggregate::from_reports(&reports)?;
    Ok(MultiSeedResult { runs, aggregate })
}

/// [`train_multi_seed`] on a pool of `threads` workers (`None` = default pool).
pub fn train_multi_seed_with_threads(
    dataset: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<MultiSeedResult> {
    par::with_threads(threads, || train_multi_seed(dataset, config, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::synth_dataset;

    fn quick(mode: AugmentMode, seed: u64) -> TrainConfig {
        TrainConfig {
            preset: None,
            lr: 1e-2,
            batch_size: 8,
            epochs: 3,
            seed,
            augment: AugmentConfig::with_mode(mode),
        }
    }

    #[test]
    fn presets_match_recipe() {
        let t = TrainConfig::from_preset(Preset::Transformer, 0, AugmentConfig::default());
        assert_eq!((t.lr, t.batch_size, t.epochs), (5e-5, 8, 50));
        let c = TrainConfig::from_preset(Preset::Cnn, 0, AugmentConfig::default());
        assert_eq!((c.lr, c.batch_size, c.epochs), (1e-3, 64, 400));
    }

    #[test]
    fn epoch_shuffles_are_permutations() {
        for epoch in 0..20 {
            let mut p = epoch_permutation(37, 5, epoch);
            p.sort_unstable();
            assert_eq!(p, (0..37).collect::<Vec<_>>());
        }
        assert_ne!(epoch_permutation(37, 5, 0), epoch_permutation(37, 5, 1));
    }

    #[test]
    fn loss_trace_has_one_entry_per_epoch() {
        let ds = synth_dataset(8, [30, 12, 8, 5], 4.0, 1).unwrap();
        let r = train(&ds, &quick(AugmentMode::Full, 0)).unwrap();
        assert_eq!(r.loss_trace.len(), 3);
        assert!(r.loss_trace.iter().all(|l| l.is_finite()));
        assert_eq!(r.train_examples + r.test_examples, ds.len());
    }

    #[test]
    fn draw_counts_follow_class_policy() {
        let ds = synth_dataset(8, [30, 12, 8, 5], 4.0, 1).unwrap();
        let cfg = quick(AugmentMode::Full, 0);
        let r = train(&ds, &cfg).unwrap();
        let abnormal_train: usize = ds.class_counts(Some(Split::Train))[1..].iter().sum();
        let train_n = r.train_examples as u64;
        let epochs = cfg.epochs as u64;
        assert_eq!(r.gaussian_draws, (abnormal_train * 8) as u64 * epochs);
        // two index draws (length, start) per band
        assert_eq!(r.index_draws, train_n * 2 * cfg.augment.bands as u64 * epochs);

        let none = train(&ds, &quick(AugmentMode::None, 0)).unwrap();
        assert_eq!((none.gaussian_draws, none.index_draws), (0, 0));
    }

    #[test]
    fn empty_train_split() {
        let mut spec = crate::store::SynthSpec::new(4, [5, 5, 5, 5], 1.0, 0);
        spec.test_fraction = 1.0;
        let ds = spec.generate().unwrap();
        assert!(matches!(train(&ds, &quick(AugmentMode::None, 0)), Err(Error::EmptySplit("train"))));
    }

    #[test]
    fn divergence_is_reported() {
        let ds = synth_dataset(4, [10, 5, 5, 5], 2.0, 0).unwrap();
        let mut cfg = quick(AugmentMode::None, 0);
        cfg.lr = 1e300;
        match train(&ds, &cfg) {
            Err(Error::Divergence { epoch: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let ds = synth_dataset(4, [10, 5, 5, 5], 2.0, 0).unwrap();
        let mut cfg = quick(AugmentMode::None, 0);
        cfg.batch_size = 0;
        assert!(matches!(train(&ds, &cfg), Err(Error::InvalidConfig(_))));
        assert!(train_multi_seed(&ds, &quick(AugmentMode::None, 0), &[]).is_err());
    }
}
