use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::WorldError;
use crate::geom::Vec2;

/// Map scale the default speeds are quoted against.
pub const MAP_SCALE: f64 = 2428.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Camera,
    SearchParty,
    Helicopter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// Normalized units per timestep. Zero for cameras only.
    pub max_speed: f64,
    pub base_detect_radius: f64,
    /// Fixed position for cameras; `None` places them from the layout seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec2>,
}

impl AgentSpec {
    pub fn camera(base_detect_radius: f64) -> Self {
        Self {
            kind: AgentKind::Camera,
            max_speed: 0.0,
            base_detect_radius,
            position: None,
        }
    }

    pub fn search_party() -> Self {
        Self {
            kind: AgentKind::SearchParty,
            max_speed: 20.0 / MAP_SCALE,
            base_detect_radius: 0.05,
            position: None,
        }
    }

    pub fn helicopter() -> Self {
        Self {
            kind: AgentKind::Helicopter,
            max_speed: 127.0 / MAP_SCALE,
            base_detect_radius: 0.06,
            position: None,
        }
    }

    pub fn learnable(&self) -> bool {
        self.kind != AgentKind::Camera
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaderConfig {
    pub max_speed: f64,
    /// Base radius at which the evader notices pursuers.
    pub detect_radius: f64,
    /// Visibility penalty weight in the planner edge cost.
    pub w_v: f64,
    pub n_trigger: usize,
    pub t_evade: usize,
    pub dark_threshold: f64,
}

impl Default for EvaderConfig {
    fn default() -> Self {
        Self {
            max_speed: 15.0 / MAP_SCALE,
            detect_radius: 0.06,
            w_v: 2.0,
            n_trigger: 3,
            t_evade: 30,
            dark_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Radius multiplier floor in zero-visibility terrain.
    pub v_min: f64,
    /// Radius growth at full target speed.
    pub kappa: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { v_min: 0.25, kappa: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub c_det: f64,
    pub c_team: f64,
    pub c_dist: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_det: 1.0,
            c_team: 0.5,
            c_dist: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HideoutConfig {
    pub count: usize,
    /// The first `known` hideouts are known to the pursuers.
    pub known: usize,
    pub min_separation: f64,
    /// Explicit locations; overrides the seeded placement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<Vec2>>,
}

impl Default for HideoutConfig {
    fn default() -> Self {
        Self {
            count: 3,
            known: 2,
            min_separation: 0.3,
            locations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub grid: usize,
    pub forest_fraction: f64,
    pub terrain_seed: u64,
    /// Seeds hideout and camera placement.
    pub layout_seed: u64,
    pub t_max: usize,
    pub agents: Vec<AgentSpec>,
    pub evader: EvaderConfig,
    pub detection: DetectionConfig,
    pub reward: RewardConfig,
    pub hideouts: HideoutConfig,
    /// Learnable agents spawn within this distance of the evader start.
    pub spawn_radius: f64,
    /// Minimum distance between the evader start and any hideout.
    pub start_clearance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid: 64,
            forest_fraction: 0.4,
            terrain_seed: 7,
            layout_seed: 11,
            t_max: 500,
            agents: vec![
                AgentSpec::search_party(),
                AgentSpec::search_party(),
                AgentSpec::helicopter(),
                AgentSpec::camera(0.04),
                AgentSpec::camera(0.04),
            ],
            evader: EvaderConfig::default(),
            detection: DetectionConfig::default(),
            reward: RewardConfig::default(),
            hideouts: HideoutConfig::default(),
            spawn_radius: 0.15,
            start_clearance: 0.35,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |msg: String| Err(WorldError::Config(msg));
        if self.grid < 8 {
            return bad(format!("grid must be >= 8, got {}", self.grid));
        }
        if !(0.0..=1.0).contains(&self.forest_fraction) {
            return bad(format!("forest_fraction must be in [0, 1], got {}", self.forest_fraction));
        }
        if self.t_max == 0 {
            return bad("t_max must be positive".into());
        }
        if !self.agents.iter().any(AgentSpec::learnable) {
            return bad("roster needs at least one learnable agent".into());
        }
        for a in &self.agents {
            let finite = a.max_speed.is_finite() && a.base_detect_radius.is_finite();
            if !finite || a.max_speed < 0.0 || a.base_detect_radius < 0.0 {
                return bad(format!("agent {:?} has invalid constants", a.kind));
            }
            if (a.max_speed == 0.0) != (a.kind == AgentKind::Camera) {
                return bad(format!("{:?}: max_speed is zero exactly for cameras", a.kind));
            }
        }
        let e = &self.evader;
        if !(e.max_speed > 0.0 && e.max_speed.is_finite()) || !(e.w_v >= 0.0 && e.w_v.is_finite()) {
            return bad("evader speed must be positive and w_v non-negative".into());
        }
        let d = &self.detection;
        if !(0.0..=1.0).contains(&d.v_min) || !(d.kappa >= 0.0 && d.kappa.is_finite()) {
            return bad("detection constants out of range".into());
        }
        let r = &self.reward;
        if !(r.c_det > 0.0) || !r.c_det.is_finite() || !r.c_team.is_finite() || !r.c_dist.is_finite() {
            return bad("reward constants must be finite with c_det > 0".into());
        }
        let h = &self.hideouts;
        let count = h.locations.as_ref().map_or(h.count, Vec::len);
        if count == 0 {
            return bad("at least one hideout is required".into());
        }
        if h.known > count {
            return bad(format!("{} known hideouts but only {count} exist", h.known));
        }
        Ok(())
    }

    /// Short stable digest of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }

    pub fn learnable_count(&self) -> usize {
        self.agents.iter().filter(|a| a.learnable()).count()
    }

    /// Reads TOML or JSON, picked by file extension.
    pub fn from_path(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Config(format!("{}: {e}", path.display())))?;
        let cfg: EnvConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| WorldError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| WorldError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `base · (v_min + (1 − v_min) · visibility) · (1 + κ · speed / max_speed)`
///
/// A stationary target (or one with zero max speed) gets no speed bonus.
pub fn detection_radius(base: f64, v_min: f64, kappa: f64, target_speed: f64, target_max_speed: f64, visibility: f64) -> f64 {
    let terrain = v_min + (1.0 - v_min) * visibility.clamp(0.0, 1.0);
    let motion = if target_max_speed > 0.0 {
        (target_speed / target_max_speed).max(0.0)
    } else {
        0.0
    };
    base * terrain * (1.0 + kappa * motion)
}
