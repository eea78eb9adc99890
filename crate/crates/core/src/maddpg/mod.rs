//! MADDPG with centralized critics and decentralized actors. Each agent's
//! observation is the world's base vector optionally extended with the last
//! two detections or with a frozen filter's mixture prediction.

mod buffer;
mod nets;
mod train;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use nets::{soft_update, td_target, Maddpg, PolicyMeta, PolicySet};
pub use train::{
    curve_csv, evaluate_policies, observe_world, train_loop, train_marl, EpisodeLog, EvalSummary, MarlEnv, MarlPolicy, MarlRun,
    WorldEnv,
};

use crate::filter::{FilterInput, MixturePrediction};
use crate::geom::Vec2;
use crate::{Error, Result};

/// Floats appended per detection slot: position, velocity, staleness.
pub const DETECTION_SLOT_WIDTH: usize = 5;
/// Floats appended per mixture component: weight, relative mean, scale.
pub const COMPONENT_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    Base,
    Detections,
    Filter,
}

impl AugmentMode {
    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::Base => "base",
            AugmentMode::Detections => "detections",
            AugmentMode::Filter => "filter",
        }
    }

    /// Extra observation entries over the base vector.
    pub fn extra_dim(self, components: usize) -> usize {
        match self {
            AugmentMode::Base => 0,
            AugmentMode::Detections => 2 * DETECTION_SLOT_WIDTH,
            AugmentMode::Filter => COMPONENT_WIDTH * components,
        }
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(AugmentMode::Base),
            "detections" => Ok(AugmentMode::Detections),
            "filter" => Ok(AugmentMode::Filter),
            _ => Err(Error::Config(format!("unknown augment mode {s:?} (base, detections, filter)"))),
        }
    }
}

/// Builds `o_i` from the base observation. Filter mode appends, per
/// component, `(λ_j, μ_j − x_s, σ_j)`.
pub fn augment_observation(
    o_b: &[f64],
    mode: AugmentMode,
    filter_pred: Option<&MixturePrediction>,
    x_s: Vec2,
    detections: Option<&FilterInput>,
) -> Result<Vec<f64>> {
    let mut o = o_b.to_vec();
    match mode {
        AugmentMode::Base => {}
        AugmentMode::Detections => {
            let input = detections.ok_or_else(|| Error::Contract("detections mode needs the detection slots".into()))?;
            for s in &input.slots {
                o.extend([s.position.x, s.position.y, s.velocity.x, s.velocity.y, s.staleness]);
            }
        }
        AugmentMode::Filter => {
            let pred = filter_pred.ok_or_else(|| Error::Contract("filter mode needs a filter prediction".into()))?;
            for j in 0..pred.components() {
                let rel = pred.means[j] - x_s;
                o.extend([pred.weights[j], rel.x, rel.y, pred.scales[j].x, pred.scales[j].y]);
            }
        }
    }
    Ok(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between update rounds.
    pub update_interval: usize,
    pub episodes: usize,
    /// Initial exploration noise as a fraction of max speed.
    pub noise_scale: f64,
    /// Per-episode multiplicative decay of the noise.
    pub noise_decay: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.01,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            buffer_capacity: 100_000,
            batch_size: 256,
            update_interval: 16,
            episodes: 300,
            noise_scale: 0.3,
            noise_decay: 0.999,
            actor_hidden: vec![128, 128],
            critic_hidden: vec![256, 128],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.update_interval == 0 {
            return bad("batch size and update interval must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad("replay buffer must hold at least one batch".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return bad("noise scale must be >= 0 and decay in (0, 1]".into());
        }
        Ok(())
    }

    /// Noise scale used during episode `ep`.
    pub fn noise_at(&self, ep: usize) -> f64 {
        self.noise_scale * self.noise_decay.powi(ep as i32)
    }
}
