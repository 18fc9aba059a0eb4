//! Scalar building blocks of the attack: vulnerability scores, attack
//! losses and the feature maps.

use serde::{Deserialize, Serialize};

/// Probabilities below this are treated as this in the log loss.
pub const INVERSE_KL_FLOOR: f64 = 1e-12;

/// `k1 / sqrt(deg * d) + k2 / deg` for each degree. Degree 0 counts as 1.
pub fn defective_factor(degrees: &[usize], degree_budget: usize, k1: f64, k2: f64) -> Vec<f64> {
    let d = degree_budget.max(1) as f64;
    degrees
        .iter()
        .map(|&deg| {
            let deg = deg.max(1) as f64;
            k1 / (deg * d).sqrt() + k2 / deg
        })
        .collect()
}

/// `(alpha * p + (1 - alpha)) * lambda`, elementwise.
pub fn defective_score(p: &[f64], lambda: &[f64], alpha: f64) -> Vec<f64> {
    p.iter()
        .zip(lambda)
        .map(|(&p, &l)| (alpha * p + (1.0 - alpha)) * l)
        .collect()
}

/// Per-node `max(r + ln p, 0)^2` and their mean.
pub fn smooth_loss(p: &[f64], r: f64) -> (Vec<f64>, f64) {
    let per: Vec<f64> = p.iter().map(|&p| smooth_from_log(p.ln(), r)).collect();
    let mean = mean(&per);
    (per, mean)
}

/// `dL/dp` of the smooth loss: `2 (r + ln p) / p` above `e^-r`, else 0.
pub fn smooth_loss_grad(p: f64, r: f64) -> f64 {
    let margin = r + p.ln();
    if margin > 0.0 {
        2.0 * margin / p
    } else {
        0.0
    }
}

/// Per-node `ln p` (floored) and their mean.
pub fn inverse_kl_loss(p: &[f64]) -> (Vec<f64>, f64) {
    let per: Vec<f64> = p.iter().map(|&p| p.max(INVERSE_KL_FLOOR).ln()).collect();
    let mean = mean(&per);
    (per, mean)
}

/// `dL/dp` of the log loss, `1 / p`, zero below the floor.
pub fn inverse_kl_loss_grad(p: f64) -> f64 {
    if p > INVERSE_KL_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[inline]
pub(crate) fn smooth_from_log(log_p: f64, r: f64) -> f64 {
    let m = (r + log_p).max(0.0);
    m * m
}

/// The final clamp only absorbs rounding at the ends of the range.
pub fn smoothmap(x: f64, min: f64, max: f64) -> f64 {
    ((max + min) / 2.0 + (max - min) / 2.0 * x.sin()).clamp(min, max)
}

pub fn smoothmap_grad(x: f64, min: f64, max: f64) -> f64 {
    (max - min) / 2.0 * x.cos()
}

pub fn clamp(x: f64, min: f64, max: f64) -> f64 {
    x.clamp(min, max)
}

/// 1 inside `[min, max]` (boundary included), 0 outside.
pub fn clamp_grad(x: f64, min: f64, max: f64) -> f64 {
    if (min..=max).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// Attack loss minimized over the injected features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `max(r + ln p, 0)^2`.
    Smooth { r: f64 },
    /// `ln p`, floored at [`INVERSE_KL_FLOOR`].
    InverseKl,
}

impl LossKind {
    /// Loss and `dL/d(ln p)` given `ln p`.
    #[inline]
    pub fn value_and_slope(self, log_p: f64) -> (f64, f64) {
        match self {
            LossKind::Smooth { r } => {
                let m = r + log_p;
                if m > 0.0 {
                    (m * m, 2.0 * m)
                } else {
                    (0.0, 0.0)
                }
            }
            LossKind::InverseKl => {
                let floor = INVERSE_KL_FLOOR.ln();
                if log_p > floor {
                    (log_p, 1.0)
                } else {
                    (floor, 0.0)
                }
            }
        }
    }
}

/// How unconstrained optimization variables become admissible features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    Smoothmap,
    Clamp,
}

impl FeatureMap {
    #[inline]
    pub fn apply(self, x: f64, (min, max): (f64, f64)) -> f64 {
        match self {
            FeatureMap::Smoothmap => smoothmap(x, min, max),
            FeatureMap::Clamp => clamp(x, min, max),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64, (min, max): (f64, f64)) -> f64 {
        match self {
            FeatureMap::Smoothmap => smoothmap_grad(x, min, max),
            FeatureMap::Clamp => clamp_grad(x, min, max),
        }
    }
}
