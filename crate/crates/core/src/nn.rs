//! LayerNorm + linear classifier head, trained with softmax cross-entropy
//! and Adam. Everything is `f64`.
//!
//! ```text
//! y      = ln_scale ⊙ (z - mean(z)) / sqrt(var(z) + 1e-5) + ln_shift
//! logits = weight · y + bias            (weight is 4 × d, row-major)
//! ```
//!
//! `var` is the biased (divide-by-d) variance.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::store::ClassLabel;
use crate::NUM_CLASSES;

pub const LN_EPS: f64 = 1e-5;

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Lower bound on the denominator of the relative error in [`grad_check`],
/// so coordinates whose true gradient is ~0 are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Minimum number of coordinates [`grad_check`] samples.
pub const GRAD_CHECK_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub ln_scale: Vec<f64>,
    pub ln_shift: Vec<f64>,
    /// `NUM_CLASSES × dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
}

/// Gradients share the parameter layout.
pub type Gradients = ClassifierParams;

impl ClassifierParams {
    /// Identity LayerNorm affine, zero linear layer.
    pub fn new(dim: usize) -> Self {
        ClassifierParams {
            ln_scale: vec![1.0; dim],
            ln_shift: vec![0.0; dim],
            weight: vec![0.0; NUM_CLASSES * dim],
            bias: [0.0; NUM_CLASSES],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        ClassifierParams {
            ln_scale: vec![0.0; dim],
            ..Self::new(dim)
        }
    }

    /// Random, well-conditioned parameters for tests and benchmarks.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = move || -> f64 { StandardNormal.sample(&mut rng) };
        let w_scale = 1.0 / (dim as f64).sqrt();
        ClassifierParams {
            ln_scale: (0..dim).map(|_| 1.0 + 0.1 * n()).collect(),
            ln_shift: (0..dim).map(|_| 0.1 * n()).collect(),
            weight: (0..NUM_CLASSES * dim).map(|_| w_scale * n()).collect(),
            bias: std::array::from_fn(|_| 0.1 * n()),
        }
    }

    pub fn dim(&self) -> usize {
        self.ln_scale.len()
    }

    pub fn num_coords(&self) -> usize {
        self.ln_scale.len() + self.ln_shift.len() + self.weight.len() + NUM_CLASSES
    }

    pub fn is_consistent(&self) -> bool {
        let d = self.dim();
        d > 0 && self.ln_shift.len() == d && self.weight.len() == NUM_CLASSES * d
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|v| v.is_finite())
    }

    /// All coordinates in the order scale, shift, weight, bias.
    pub fn flat(&self) -> impl Iterator<Item = &f64> {
        self.ln_scale
            .iter()
            .chain(&self.ln_shift)
            .chain(&self.weight)
            .chain(&self.bias)
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.ln_scale
            .iter_mut()
            .chain(&mut self.ln_shift)
            .chain(&mut self.weight)
            .chain(&mut self.bias)
    }

    pub fn coord(&self, i: usize) -> f64 {
        *self.flat().nth(i).expect("coordinate in range")
    }

    pub fn coord_mut(&mut self, i: usize) -> &mut f64 {
        let d = self.dim();
        match i {
            _ if i < d => &mut self.ln_scale[i],
            _ if i < 2 * d => &mut self.ln_shift[i - d],
            _ if i < 2 * d + NUM_CLASSES * d => &mut self.weight[i - 2 * d],
            _ => &mut self.bias[i - 2 * d - NUM_CLASSES * d],
        }
    }

    fn weight_row(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.weight[c * d..(c + 1) * d]
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.flat_mut().zip(other.flat()) {
            *a += b;
        }
    }

    fn scale(&mut self, s: f64) {
        for a in self.flat_mut() {
            *a *= s;
        }
    }
}

/// Intermediate LayerNorm quantities, kept for the backward pass.
struct Normalized {
    xhat: Vec<f64>,
    y: Vec<f64>,
}

fn layer_norm(params: &ClassifierParams, z: &[f64]) -> Normalized {
    let d = z.len() as f64;
    let mean = z.iter().sum::<f64>() / d;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat
        .iter()
        .zip(params.ln_scale.iter().zip(&params.ln_shift))
        .map(|(x, (g, b))| g * x + b)
        .collect();
    Normalized { xhat, y }
}

fn linear(params: &ClassifierParams, y: &[f64]) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|c| {
        params
            .weight_row(c)
            .iter()
            .zip(y)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + params.bias[c]
    })
}

/// LayerNorm of `z` with the head's affine parameters.
pub fn normalize(params: &ClassifierParams, z: &[f64]) -> Result<Vec<f64>> {
    params.check_dim(z.len())?;
    Ok(layer_norm(params, z).y)
}

pub fn forward(params: &ClassifierParams, z: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    params.check_dim(z.len())?;
    Ok(linear(params, &layer_norm(params, z).y))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: [f64; NUM_CLASSES] = std::array::from_fn(|c| (logits[c] - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

fn cross_entropy(logits: &[f64; NUM_CLASSES], label: ClassLabel) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label.index()]
}

/// Index of the largest logit; ties go to the lower class code.
pub fn predict(logits: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    ClassLabel::ALL[best]
}

fn example_loss_grad(params: &ClassifierParams, z: &[f64], label: ClassLabel) -> (f64, Gradients) {
    let d = z.len();
    let norm = layer_norm(params, z);
    let logits = linear(params, &norm.y);
    let loss = cross_entropy(&logits, label);

    let mut dlogits = softmax(&logits);
    dlogits[label.index()] -= 1.0;

    let mut g = ClassifierParams::zeros(d);
    g.bias = dlogits;
    let mut dy = vec![0.0; d];
    for (c, &dl) in dlogits.iter().enumerate() {
        let row = &mut g.weight[c * d..(c + 1) * d];
        for ((gw, &yk), (dyk, &w)) in row
            .iter_mut()
            .zip(&norm.y)
            .zip(dy.iter_mut().zip(params.weight_row(c)))
        {
            *gw = dl * yk;
            *dyk += dl * w;
        }
    }
    for (((gs, gb), &dyk), &xh) in g.ln_scale.iter_mut().zip(&mut g.ln_shift).zip(&dy).zip(&norm.xhat) {
        *gs = dyk * xh;
        *gb = dyk;
    }
    (loss, g)
}

/// Canonical order for batch contributions: label, then feature values.
fn example_order<V: AsRef<[f64]>>(a: &(V, ClassLabel), b: &(V, ClassLabel)) -> Ordering {
    a.1.cmp(&b.1).then_with(|| {
        a.0.as_ref()
            .iter()
            .zip(b.0.as_ref())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Mean softmax cross-entropy over `batch` and its exact gradient.
///
/// Per-example terms may be computed in parallel; they are summed in a
/// canonical order (by label, then by feature values), so the result is
/// independent of both thread scheduling and batch order.
pub fn loss_and_grad<V>(params: &ClassifierParams, batch: &[(V, ClassLabel)]) -> Result<(f64, Gradients)>
where
    V: AsRef<[f64]> + Sync,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for (z, _) in batch {
        params.check_dim(z.as_ref().len())?;
    }

    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&i, &j| example_order(&batch[i], &batch[j]));

    let terms = par::map(&order, |&i| example_loss_grad(params, batch[i].0.as_ref(), batch[i].1));

    let mut loss = 0.0;
    let mut grads = ClassifierParams::zeros(params.dim());
    for (l, g) in &terms {
        loss += l;
        grads.add_assign(g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Mean loss only.
pub fn loss<V>(params: &ClassifierParams, batch: &[(V, ClassLabel)]) -> Result<f64>
where
    V: AsRef<[f64]> + Sync,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&i, &j| example_order(&batch[i], &batch[j]));
    let mut total = 0.0;
    for i in order {
        let (z, label) = &batch[i];
        total += cross_entropy(&forward(params, z.as_ref())?, *label);
    }
    Ok(total / batch.len() as f64)
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: ClassifierParams::zeros(dim),
            v: ClassifierParams::zeros(dim),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ClassifierParams, grads: &Gradients, state: &mut AdamState) {
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .flat_mut()
        .zip(grads.flat())
        .zip(state.m.flat_mut())
        .zip(state.v.flat_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Gradient check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_coord: usize,
    pub coords_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic gradients with central differences on a random subset
/// of at least [`GRAD_CHECK_SAMPLES`] coordinates (all of them if fewer).
pub fn grad_check<V>(params: &ClassifierParams, batch: &[(V, ClassLabel)], tolerance: f64) -> Result<GradCheckReport>
where
    V: AsRef<[f64]> + Sync,
{
    let (_, analytic) = loss_and_grad(params, batch)?;
    grad_check_against(params, batch, &analytic, tolerance, 0)
}

/// [`grad_check`] against a caller-supplied gradient.
pub fn grad_check_against<V>(
    params: &ClassifierParams,
    batch: &[(V, ClassLabel)],
    analytic: &Gradients,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    V: AsRef<[f64]> + Sync,
{
    let n = params.num_coords();
    let coords: Vec<usize> = if n <= GRAD_CHECK_SAMPLES {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, n, GRAD_CHECK_SAMPLES).into_vec();
        picked.sort_unstable();
        picked
    };

    let errors = par::map(&coords, |&i| -> Result<f64> {
        let mut p = params.clone();
        *p.coord_mut(i) += FD_STEP;
        let up = loss(&p, batch)?;
        *p.coord_mut(i) = params.coord(i) - FD_STEP;
        let down = loss(&p, batch)?;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic.coord(i);
        Ok((a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR))
    });

    let mut max_rel_error = 0.0;
    let mut worst_coord = coords.first().copied().unwrap_or(0);
    for (&i, e) in coords.iter().zip(errors) {
        let e = e?;
        if e > max_rel_error || (e.is_nan() && !max_rel_error.is_nan()) {
            max_rel_error = e;
            worst_coord = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_coord,
        coords_checked: coords.len(),
        tolerance,
        passed: max_rel_error <= tolerance,
    })
}
