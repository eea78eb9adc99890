//! Mixture-density tracking filter.
//!
//! Two models share one input encoding ([`FilterInput`]) and one output
//! head ([`MixturePrediction`]):
//!
//! * PMC: a prior encoder over `(x_1, t)`, a motion branch over the
//!   constant-velocity extrapolation of the latest detection, and a
//!   confidence net producing a scalar `α` that blends the two embeddings
//!   as `α·p_h + (1 − α)·m_h` before the mixture decoder.
//! * FC: a plain MLP from the full input to the same decoder head.
//!
//! Both are trained on the mixture negative log-likelihood.

mod metrics;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    bench_runtime, disk_probability, metric_ade, metric_ctp, metric_desv, metric_ll, motion_baseline_ade,
    FilterMetrics, DESV_IDEAL,
};
pub use model::{mixture_nll, sidecar, FilterArch, FilterKind, FilterModel, Heads};
pub use train::{continue_training, mean_nll, train_filter, EpochLoss, FilterTrainConfig, TrainedFilter, TrainingPair};

use crate::geom::Vec2;
use crate::ndgrad::{log_sum_exp, NdError};
use crate::world::Detection;

pub const INPUT_DIM: usize = 13;
pub const SIGMA_MIN: f64 = 1e-3;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("non-finite output in the {0} head")]
    Numeric(&'static str),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

/// One detection as the filter sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSlot {
    pub position: Vec2,
    pub velocity: Vec2,
    /// `(t − k) / T_max`
    pub staleness: f64,
}

/// Normalized filter input: evader start, time, and the two most recent
/// detections (most recent first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInput {
    pub start: Vec2,
    pub t_norm: f64,
    pub slots: [DetectionSlot; 2],
}

impl FilterInput {
    /// Flat layout: `[x1 (2), t (1), slot0 pos (2), vel (2), staleness (1), slot1 …]`.
    pub fn to_features(&self) -> [f64; INPUT_DIM] {
        let mut f = [0.0; INPUT_DIM];
        f[0] = self.start.x;
        f[1] = self.start.y;
        f[2] = self.t_norm;
        for (i, s) in self.slots.iter().enumerate() {
            let o = 3 + 5 * i;
            f[o..o + 5].copy_from_slice(&[s.position.x, s.position.y, s.velocity.x, s.velocity.y, s.staleness]);
        }
        f
    }

    pub fn from_features(f: &[f64]) -> Result<Self, FilterError> {
        if f.len() != INPUT_DIM {
            return Err(FilterError::Contract(format!("filter input needs {INPUT_DIM} values, got {}", f.len())));
        }
        let slot = |o: usize| DetectionSlot {
            position: Vec2::new(f[o], f[o + 1]),
            velocity: Vec2::new(f[o + 2], f[o + 3]),
            staleness: f[o + 4],
        };
        Ok(Self {
            start: Vec2::new(f[0], f[1]),
            t_norm: f[2],
            slots: [slot(3), slot(8)],
        })
    }

    /// Constant-velocity extrapolation of the most recent detection to now.
    pub fn motion_estimate(&self, t_max: usize) -> Vec2 {
        let s = &self.slots[0];
        let elapsed = (s.staleness * t_max as f64).round();
        (s.position + s.velocity * elapsed).clamp_unit()
    }
}

/// Builds the filter input at time `t` from a detection log. Detections
/// sharing a timestep count once; missing slots are filled with the start
/// location, zero velocity and staleness `t / T_max`.
pub fn build_filter_input(detections: &[Detection], t: usize, start: Vec2, t_max: usize) -> FilterInput {
    let t_max_f = t_max.max(1) as f64;
    let pad = DetectionSlot {
        position: start,
        velocity: Vec2::ZERO,
        staleness: t as f64 / t_max_f,
    };
    let mut slots = [pad; 2];
    let mut filled = 0;
    let mut last_k = None;
    for d in detections.iter().rev().filter(|d| d.k <= t) {
        if last_k == Some(d.k) {
            continue;
        }
        last_k = Some(d.k);
        slots[filled] = DetectionSlot {
            position: d.position,
            velocity: d.velocity,
            staleness: (t - d.k) as f64 / t_max_f,
        };
        filled += 1;
        if filled == 2 {
            break;
        }
    }
    FilterInput {
        start,
        t_norm: t as f64 / t_max_f,
        slots,
    }
}

/// Last detected position and velocity with the timestep they were seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub k: usize,
}

/// `x_k = x_k̂ + (k − k̂)·u_k̂`, clamped to the map.
pub fn motion_extrapolate(m: &MotionState, k: usize) -> Result<Vec2, FilterError> {
    if k < m.k {
        return Err(FilterError::Contract(format!("extrapolating to {k} before detection at {}", m.k)));
    }
    Ok((m.position + m.velocity * (k - m.k) as f64).clamp_unit())
}

/// Weighted diagonal Gaussians over the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub weights: Vec<f64>,
    pub means: Vec<Vec2>,
    pub scales: Vec<Vec2>,
}

impl MixturePrediction {
    pub fn single(mean: Vec2, scale: Vec2) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            scales: vec![scale],
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Weights sum to one within 1e-6, are non-negative, and every scale is
    /// at least `sigma_min`.
    pub fn check(&self, sigma_min: f64) -> Result<(), FilterError> {
        let n = self.weights.len();
        if n == 0 || self.means.len() != n || self.scales.len() != n {
            return Err(FilterError::Contract("mixture heads disagree on component count".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(FilterError::Numeric("weight"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(FilterError::Numeric("mean"));
        }
        if self.scales.iter().any(|s| !s.is_finite()) {
            return Err(FilterError::Numeric("scale"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(FilterError::Contract(format!("mixture weights sum to {total}")));
        }
        if self.scales.iter().any(|s| s.x < sigma_min || s.y < sigma_min) {
            return Err(FilterError::Contract("scale below floor".into()));
        }
        Ok(())
    }

    /// `log N(y; μ_i, diag σ_i²)` for one component.
    pub fn component_log_density(&self, i: usize, y: Vec2) -> f64 {
        let (m, s) = (self.means[i], self.scales[i]);
        let zx = (y.x - m.x) / s.x;
        let zy = (y.y - m.y) / s.y;
        -0.5 * (zx * zx + zy * zy) - s.x.ln() - s.y.ln() - LN_2PI
    }

    pub fn log_density(&self, y: Vec2) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|i| self.weights[i].ln() + self.component_log_density(i, y))
            .collect();
        log_sum_exp(&terms)
    }

    /// `Σ λ_i μ_i`
    pub fn mean(&self) -> Vec2 {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(Vec2::ZERO, |acc, (&w, &m)| acc + m * w)
    }

    /// Index of the largest weight, lowest index on ties.
    pub fn top_component(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// Component indices by weight, largest first; ties keep index order.
    pub fn ranked_components(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.components()).collect();
        idx.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        idx
    }
}

/// `−log Σ_i λ_i N(y; μ_i, diag σ_i²)`, evaluated in log space.
pub fn nll_loss(pred: &MixturePrediction, y: Vec2) -> f64 {
    -pred.log_density(y)
}
