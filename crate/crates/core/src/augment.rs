//! Band masking with mean replacement (Rep-Mask), additive Gaussian noise
//! (Rep-Gen), and the class-conditional policy that combines them.
//!
//! Masking replaces every coordinate inside the sampled bands with the scalar
//! mean of the *original* vector. Noise is only ever added to abnormal classes;
//! the normal class gets masking alone. When both apply, masking runs first so
//! the constant masked values are perturbed too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseSource;
use crate::store::{ClassLabel, FeatureVector};

/// Half-open band `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub len: usize,
}

impl Band {
    pub fn new(start: usize, len: usize) -> Self {
        Band { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    dim: usize,
    bands: Vec<Band>,
}

impl MaskSpec {
    /// Builds a mask from explicit bands. Each band must lie inside `0..dim`;
    /// bands may overlap.
    pub fn new(dim: usize, bands: Vec<Band>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("mask dim must be >= 1".into()));
        }
        if let Some(b) = bands.iter().find(|b| b.end() > dim) {
            return Err(Error::InvalidConfig(format!(
                "band [{}, {}) does not fit in dim {dim}",
                b.start,
                b.end()
            )));
        }
        Ok(MaskSpec { dim, bands })
    }

    pub fn empty(dim: usize) -> Self {
        MaskSpec { dim, bands: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// The binary mask M (true = masked).
    pub fn indicator(&self) -> Vec<bool> {
        let mut m = vec![false; self.dim];
        for b in &self.bands {
            m[b.start..b.end()].fill(true);
        }
        m
    }

    /// Whether every band lies in the sampler's ranges for band-length bound
    /// `max_len`: `len < max_len` and `start < dim - len`.
    pub fn within_sampling_ranges(&self, max_len: usize) -> bool {
        self.bands
            .iter()
            .all(|b| b.len < max_len && b.len < self.dim && b.start < self.dim - b.len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    None,
    MaskOnly,
    GenOnly,
    Full,
}

impl AugmentMode {
    fn masks(self) -> bool {
        matches!(self, AugmentMode::MaskOnly | AugmentMode::Full)
    }

    fn adds_noise(self, label: ClassLabel) -> bool {
        label.is_abnormal() && matches!(self, AugmentMode::GenOnly | AugmentMode::Full)
    }
}

/// What masked coordinates are replaced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    #[default]
    Mean,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Number of bands per mask.
    pub bands: usize,
    /// Exclusive upper bound on band length.
    pub max_band_len: usize,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub mode: AugmentMode,
    #[serde(default)]
    pub replacement: Replacement,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            bands: 2,
            max_band_len: 288,
            noise_mean: 0.0,
            noise_std: 1.0,
            mode: AugmentMode::Full,
            replacement: Replacement::Mean,
        }
    }
}

impl AugmentConfig {
    pub fn with_mode(mode: AugmentMode) -> Self {
        AugmentConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(Error::InvalidConfig("band count must be >= 1".into()));
        }
        if self.max_band_len == 0 {
            return Err(Error::InvalidConfig("band length bound must be >= 1".into()));
        }
        if !self.noise_mean.is_finite() {
            return Err(Error::InvalidConfig("noise mean must be finite".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig("noise std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Draws `config.bands` bands for a `d`-dimensional vector. For each band the
/// length is drawn uniformly from `0..min(L, d)`, then the start uniformly
/// from `0..d - len`.
pub fn sample_mask(d: usize, config: &AugmentConfig, rng: &mut impl NoiseSource) -> MaskSpec {
    assert!(d >= 1, "cannot mask a zero-dimensional vector");
    let len_bound = config.max_band_len.min(d);
    let bands = (0..config.bands)
        .map(|_| {
            let len = rng.uniform_index(len_bound);
            let start = rng.uniform_index(d - len);
            Band { start, len }
        })
        .collect();
    MaskSpec { dim: d, bands }
}

pub fn apply_mask(z: &FeatureVector, mask: &MaskSpec) -> Result<FeatureVector> {
    apply_mask_with(z, mask, Replacement::Mean)
}

pub fn apply_mask_with(z: &FeatureVector, mask: &MaskSpec, replacement: Replacement) -> Result<FeatureVector> {
    if mask.dim != z.dim() {
        return Err(Error::DimMismatch {
            expected: z.dim(),
            got: mask.dim,
        });
    }
    let fill = match replacement {
        Replacement::Mean => z.mean(),
        Replacement::Zero => 0.0,
    };
    let mut out = z.as_slice().to_vec();
    for b in &mask.bands {
        out[b.start..b.end()].fill(fill);
    }
    Ok(FeatureVector::from_raw(out))
}

/// Adds `mean + std * n_k` to every coordinate, consuming exactly `d`
/// standard-normal draws.
pub fn apply_gen(z: &FeatureVector, config: &AugmentConfig, rng: &mut impl NoiseSource) -> FeatureVector {
    let out = z
        .as_slice()
        .iter()
        .map(|&v| v + (config.noise_mean + config.noise_std * rng.standard_normal()))
        .collect();
    FeatureVector::from_raw(out)
}

/// The class-conditional augmentation policy, with a freshly sampled mask.
pub fn repaugment(
    z: &FeatureVector,
    label: ClassLabel,
    config: &AugmentConfig,
    rng: &mut impl NoiseSource,
) -> Result<FeatureVector> {
    let mask = config.mode.masks().then(|| sample_mask(z.dim(), config, rng));
    augment_with(z, label, mask.as_ref(), config, rng)
}

/// Same policy as [`repaugment`] but with a caller-supplied mask. The mask is
/// ignored in modes that do not mask.
pub fn repaugment_with_mask(
    z: &FeatureVector,
    label: ClassLabel,
    mask: &MaskSpec,
    config: &AugmentConfig,
    rng: &mut impl NoiseSource,
) -> Result<FeatureVector> {
    augment_with(z, label, Some(mask), config, rng)
}

fn augment_with(
    z: &FeatureVector,
    label: ClassLabel,
    mask: Option<&MaskSpec>,
    config: &AugmentConfig,
    rng: &mut impl NoiseSource,
) -> Result<FeatureVector> {
    let masked = match mask {
        Some(m) if config.mode.masks() => apply_mask_with(z, m, config.replacement)?,
        _ => z.clone(),
    };
    if config.mode.adds_noise(label) {
        Ok(apply_gen(&masked, config, rng))
    } else {
        Ok(masked)
    }
}
