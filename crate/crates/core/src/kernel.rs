//! Numeric kernel: cosine similarity, the hard-negative weighted contrastive
//! loss and its analytic gradients, and margin statistics.
//!
//! For an anchor `p`, positives `P+` and negatives `P-`:
//!
//! ```text
//! L = -(1/|P+|) * sum_{p+ in P+} log( exp(s(p,p+)/tau) / sum_{x in P+ ∪ P-} exp(l(p,x)) )
//! l(p,x) = s(p,x)/tau                     for x in P+
//! l(p,x) = s(p,x)/tau + ln max(w(x), eps)  for x in P-
//! w(x)   = ((s(p,x) + 1) / 2)^gamma
//! ```
//!
//! which simplifies to `L = LSE(l) - mean_{P+}(s/tau)`. The log-sum-exp runs
//! over sorted logits so the value is bitwise invariant to input order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

/// Floor applied to `w(x)` inside the log; `w = 0` at `s = -1`.
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("positive set is empty")]
    NoPositives,
    #[error("{0} similarity list is empty")]
    EmptyList(&'static str),
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

/// A finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, KernelError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite(i));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Unit-length copy.
    pub fn normalized(&self) -> Result<Self, KernelError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(KernelError::ZeroNorm);
        }
        Ok(EmbeddingVector(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = KernelError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `dot(u,v) / sqrt(|u|^2 |v|^2)`, clamped to `[-1, 1]`.
///
/// Taking one square root of the product makes `cosine(u, u)` exactly 1.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, KernelError> {
    if u.len() != v.len() {
        return Err(KernelError::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(KernelError::ZeroNorm);
    }
    Ok(cosine_from_parts(dot(u, v), uu, vv))
}

#[inline]
pub(crate) fn cosine_from_parts(uv: f64, uu: f64, vv: f64) -> f64 {
    (uv / (uu * vv).sqrt()).clamp(-1.0, 1.0)
}

/// `((s + 1) / 2)^gamma`. Inputs outside `[-1, 1]` are clamped first.
pub fn negative_weight(s: f64, gamma: f64) -> f64 {
    debug_assert!((-1.0..=1.0).contains(&s), "similarity {s} out of range");
    ((s.clamp(-1.0, 1.0) + 1.0) / 2.0).powf(gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { tau: 0.1, gamma: 2.0 }
    }
}

impl LossConfig {
    pub fn new(tau: f64, gamma: f64) -> Result<Self, KernelError> {
        let cfg = LossConfig { tau, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(KernelError::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(KernelError::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Logit of one candidate in the softmax denominator.
pub fn pair_logit(s: f64, is_negative: bool, config: &LossConfig) -> f64 {
    let base = s / config.tau;
    if is_negative {
        base + negative_weight(s, config.gamma).max(WEIGHT_FLOOR).ln()
    } else {
        base
    }
}

/// `d l / d s` for one candidate, matching [`pair_logit`].
fn pair_logit_slope(s: f64, is_negative: bool, config: &LossConfig) -> f64 {
    let base = 1.0 / config.tau;
    if is_negative && config.gamma != 0.0 && negative_weight(s, config.gamma) > WEIGHT_FLOOR {
        base + config.gamma / (s + 1.0)
    } else {
        base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    pub anchor: EmbeddingVector,
    pub positives: Vec<EmbeddingVector>,
    pub negatives: Vec<EmbeddingVector>,
    pub config: LossConfig,
}

impl LossInputs {
    fn check(&self) -> Result<(), KernelError> {
        self.config.validate()?;
        if self.positives.is_empty() {
            return Err(KernelError::NoPositives);
        }
        let d = self.anchor.dim();
        for v in self.positives.iter().chain(&self.negatives) {
            if v.dim() != d {
                return Err(KernelError::DimensionMismatch { expected: d, found: v.dim() });
            }
        }
        Ok(())
    }

    fn candidates(&self) -> impl Iterator<Item = (&EmbeddingVector, bool)> {
        self.positives.iter().map(|v| (v, false)).chain(self.negatives.iter().map(|v| (v, true)))
    }
}

/// Stable log-sum-exp over an order-independent (sorted) copy.
fn log_sum_exp(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().expect("non-empty");
    let sum: f64 = sorted.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

struct Forward {
    sims: Vec<f64>,
    logits: Vec<f64>,
    loss: f64,
}

fn forward(inputs: &LossInputs) -> Result<Forward, KernelError> {
    inputs.check()?;
    let anchor = inputs.anchor.as_slice();
    let sims = inputs
        .candidates()
        .map(|(v, _)| cosine(anchor, v.as_slice()))
        .collect::<Result<Vec<_>, _>>()?;
    let logits: Vec<f64> = inputs
        .candidates()
        .zip(&sims)
        .map(|((_, neg), &s)| pair_logit(s, neg, &inputs.config))
        .collect();
    let mut pos_logits = logits[..inputs.positives.len()].to_vec();
    let loss = log_sum_exp(&logits) - sorted_mean(&mut pos_logits);
    Ok(Forward { sims, logits, loss })
}

pub fn contrastive_loss(inputs: &LossInputs) -> Result<f64, KernelError> {
    forward(inputs).map(|f| f.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

/// Loss value plus its gradient with respect to every input vector.
///
/// With `a` the anchor, `x_j` a candidate, hats denoting unit vectors and
/// `pi` the softmax of the logits:
///
/// ```text
/// dL/ds_j = pi_j * dl_j/ds_j - [j in P+] / (|P+| tau)
/// ds_j/da = (x̂_j - s_j â) / |a|
/// ds_j/dx_j = (â - s_j x̂_j) / |x_j|
/// ```
pub fn loss_gradient(inputs: &LossInputs) -> Result<LossGradient, KernelError> {
    let Forward { sims, logits, loss } = forward(inputs)?;
    let cfg = &inputs.config;
    let n_pos = inputs.positives.len();

    let lse = log_sum_exp(&logits);
    let a = inputs.anchor.as_slice();
    let a_norm = norm(a);
    let a_hat: Vec<f64> = a.iter().map(|v| v / a_norm).collect();

    let mut grad_anchor = vec![0.0; a.len()];
    let mut grads = Vec::with_capacity(logits.len());
    for (j, (x, is_neg)) in inputs.candidates().enumerate() {
        let s = sims[j];
        let pi = (logits[j] - lse).exp();
        let mut g = pi * pair_logit_slope(s, is_neg, cfg);
        if !is_neg {
            g -= 1.0 / (n_pos as f64 * cfg.tau);
        }
        let x = x.as_slice();
        let x_norm = norm(x);
        let mut gx = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let x_hat = x[k] / x_norm;
            grad_anchor[k] += g * (x_hat - s * a_hat[k]) / a_norm;
            gx.push(g * (a_hat[k] - s * x_hat) / x_norm);
        }
        grads.push(gx);
    }
    let negatives = grads.split_off(n_pos);
    Ok(LossGradient { loss, anchor: grad_anchor, positives: grads, negatives })
}

/// Mean loss over many anchors.
pub fn batch_loss(batch: &[LossInputs], exec: Execution) -> Result<f64, KernelError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let losses = par::map_slice(batch, exec, contrastive_loss);
    let losses = losses.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Per-anchor gradients for a whole batch, in input order.
pub fn batch_gradients(batch: &[LossInputs], exec: Execution) -> Result<Vec<LossGradient>, KernelError> {
    par::map_slice(batch, exec, loss_gradient).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub pos_mean: f64,
    pub neg_mean: f64,
    pub margin: f64,
}

pub fn margin_statistics(pos_sims: &[f64], neg_sims: &[f64]) -> Result<MarginStats, KernelError> {
    if pos_sims.is_empty() {
        return Err(KernelError::EmptyList("positive"));
    }
    if neg_sims.is_empty() {
        return Err(KernelError::EmptyList("negative"));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (pos_mean, neg_mean) = (mean(pos_sims), mean(neg_sims));
    Ok(MarginStats { pos_mean, neg_mean, margin: pos_mean - neg_mean })
}
