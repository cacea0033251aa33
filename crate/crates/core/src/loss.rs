//! Center-ness definitions, loss evaluators and confidence fusion.
//!
//! These are plain numeric evaluators (no autodiff): they compute the loss
//! value a training loop would minimize, for checking targets and for
//! analysing predictions offline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::RegressionTarget;

/// Probabilities fed to logarithms are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("degenerate box: side distances {0:?}")]
    DegenerateBox([f64; 4]),
    #[error("class index {index} out of range for {len} logits")]
    ClassOutOfRange { index: usize, len: usize },
}

/// Per-channel weights of the location loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationWeights {
    pub offset: f64,
    pub depth: f64,
    pub size: f64,
    pub theta: f64,
    pub velocity: f64,
}

impl Default for LocationWeights {
    fn default() -> Self {
        Self {
            offset: 1.0,
            depth: 0.2,
            size: 1.0,
            theta: 1.0,
            velocity: 0.05,
        }
    }
}

impl LocationWeights {
    /// Fine-tuning profile: depth weighted like the other channels.
    pub fn finetune() -> Self {
        Self {
            depth: 1.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta_cls: f64,
    pub beta_attr: f64,
    pub beta_loc: f64,
    pub beta_dir: f64,
    pub beta_ct: f64,
    pub location: LocationWeights,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub gaussian_alpha: f64,
    /// Smooth-L1 transition point, shared by all channels.
    pub smooth_l1_beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta_cls: 1.0,
            beta_attr: 1.0,
            beta_loc: 1.0,
            beta_dir: 1.0,
            beta_ct: 1.0,
            location: LocationWeights::default(),
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            gaussian_alpha: 2.5,
            smooth_l1_beta: 1.0,
        }
    }
}

/// Gaussian center-ness `exp(-alpha * (dx^2 + dy^2))`.
///
/// Offsets are expected in units of the level stride.
pub fn gaussian_centerness(delta_x: f64, delta_y: f64, alpha: f64) -> f64 {
    (-alpha * (delta_x * delta_x + delta_y * delta_y)).exp()
}

/// Center-ness from the distances to the left, right, top and bottom sides.
pub fn fcos_centerness(l: f64, r: f64, t: f64, b: f64) -> Result<f64, LossError> {
    let (max_lr, max_tb) = (l.max(r), t.max(b));
    if max_lr <= 0.0 || max_tb <= 0.0 || l.min(r) < 0.0 || t.min(b) < 0.0 {
        return Err(LossError::DegenerateBox([l, r, t, b]));
    }
    Ok((l.min(r) / max_lr * (t.min(b) / max_tb)).sqrt())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Focal loss of one binary prediction with probability `p`.
///
/// Positives use `-alpha (1-p)^gamma ln p`, negatives the mirrored form
/// `-(1-alpha) p^gamma ln(1-p)`.
pub fn focal_loss(p: f64, is_positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    if is_positive {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

pub fn smooth_l1(delta: f64, beta: f64) -> f64 {
    let a = delta.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

/// Binary cross-entropy of probability `p` against a soft target in [0, 1].
pub fn binary_cross_entropy(p: f64, target: f64) -> f64 {
    let p = clamp_prob(p);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Softmax cross-entropy of `logits` against class `target`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<f64, LossError> {
    if target >= logits.len() {
        return Err(LossError::ClassOutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(log_sum - logits[target])
}

/// Regression channels compared by the location loss. Depth is in meters,
/// sizes in log space, theta is the period-pi angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationChannels {
    pub offset: [f64; 2],
    pub depth: f64,
    pub size_log: [f64; 3],
    pub theta: f64,
    pub velocity: [f64; 2],
}

impl From<&RegressionTarget> for LocationChannels {
    fn from(t: &RegressionTarget) -> Self {
        Self {
            offset: t.delta,
            depth: t.depth_log.exp(),
            size_log: t.size_log,
            theta: t.theta_bin,
            velocity: t.velocity,
        }
    }
}

/// Residual of two period-pi angles.
pub fn period_pi_residual(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Weighted sum of smooth-L1 terms over all location channels.
pub fn location_loss(pred: &LocationChannels, target: &LocationChannels, w: &LossWeights) -> f64 {
    let beta = w.smooth_l1_beta;
    let lw = &w.location;
    let sl1 = |d: f64| smooth_l1(d, beta);
    let offset: f64 = (0..2).map(|i| sl1(pred.offset[i] - target.offset[i])).sum();
    let size: f64 = (0..3).map(|i| sl1(pred.size_log[i] - target.size_log[i])).sum();
    let velocity: f64 = (0..2).map(|i| sl1(pred.velocity[i] - target.velocity[i])).sum();
    lw.offset * offset
        + lw.depth * sl1(pred.depth - target.depth)
        + lw.size * size
        + lw.theta * sl1(period_pi_residual(pred.theta, target.theta))
        + lw.velocity * velocity
}

/// Already-summed loss terms of one image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub cls: f64,
    pub attr: f64,
    pub loc: f64,
    pub dir: f64,
    pub ct: f64,
}

/// Beta-weighted sum of the components normalized by the positive count.
/// An image without positives is normalized by 1.
pub fn total_loss(c: &LossComponents, num_positive: usize, w: &LossWeights) -> f64 {
    let n = num_positive.max(1) as f64;
    (w.beta_cls * c.cls + w.beta_attr * c.attr + w.beta_loc * c.loc + w.beta_dir * c.dir
        + w.beta_ct * c.ct)
        / n
}

/// Detection confidence: class score times center-ness.
pub fn fuse_confidence(class_score: f64, centerness: f64) -> f64 {
    class_score * centerness
}
