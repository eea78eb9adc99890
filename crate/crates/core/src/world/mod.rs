//! Pursuit-evasion world on the unit square.
//!
//! A [`Scenario`] holds everything fixed across episodes (terrain, hideouts,
//! camera placement). A [`World`] is one episode on a scenario: it owns the
//! evader's planner state and advances everything one timestep at a time.

mod config;
mod terrain;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    detection_radius, AgentKind, AgentSpec, DetectionConfig, EnvConfig, EvaderConfig, HideoutConfig, RewardConfig,
    MAP_SCALE,
};
pub use terrain::{generate_terrain, TerrainMap, DENSE_THRESHOLD};

use crate::evader::{self, EvaderContext, EvaderMode, EvaderState, Pursuer};
use crate::geom::Vec2;

/// Distance at which the evader counts as having reached a hideout.
pub const HIDEOUT_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hideout {
    pub location: Vec2,
    pub known_to_pursuers: bool,
}

impl Hideout {
    pub fn new(location: Vec2, known_to_pursuers: bool) -> Self {
        Self {
            location,
            known_to_pursuers,
        }
    }
}

/// The evader seen by one detector at timestep `k`. Detections are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub k: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub detector: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    HideoutReached,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainWorldState {
    pub t: usize,
    pub evader_start: Vec2,
    pub evader_pos: Vec2,
    pub evader_vel: Vec2,
    /// Positions of every roster agent, cameras included.
    pub agent_pos: Vec<Vec2>,
    /// Last applied velocity of every roster agent.
    pub agent_vel: Vec<Vec2>,
    pub detections: Vec<Detection>,
    pub outcome: Outcome,
}

impl TerrainWorldState {
    pub fn done(&self) -> bool {
        self.outcome != Outcome::Running
    }

    pub fn last_detection(&self) -> Option<&Detection> {
        self.detections.last()
    }
}

/// Episode-invariant part of the environment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: EnvConfig,
    pub terrain: TerrainMap,
    pub hideouts: Vec<Hideout>,
    /// Fixed position per roster entry for cameras, `None` for mobile agents.
    pub fixed_positions: Vec<Option<Vec2>>,
    pub dark_cells: Vec<usize>,
    learnable: Vec<usize>,
}

impl Scenario {
    pub fn build(config: EnvConfig) -> Result<Arc<Self>, WorldError> {
        let terrain = generate_terrain(config.terrain_seed, config.grid, config.forest_fraction)?;
        Self::with_terrain(config, terrain)
    }

    pub fn with_terrain(config: EnvConfig, terrain: TerrainMap) -> Result<Arc<Self>, WorldError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.layout_seed);
        let h = &config.hideouts;
        let locations = match &h.locations {
            Some(locs) => locs.clone(),
            None => {
                let mut locs: Vec<Vec2> = Vec::with_capacity(h.count);
                let mut tries = 0;
                while locs.len() < h.count {
                    let p = Vec2::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
                    tries += 1;
                    if tries > 10_000 || locs.iter().all(|q| q.dist(p) >= h.min_separation) {
                        locs.push(p);
                    }
                }
                locs
            }
        };
        let hideouts = locations
            .into_iter()
            .enumerate()
            .map(|(i, p)| Hideout::new(p, i < h.known))
            .collect();
        let fixed_positions = config
            .agents
            .iter()
            .map(|a| match (a.learnable(), a.position) {
                (true, _) => None,
                (false, Some(p)) => Some(p.clamp_unit()),
                (false, None) => Some(Vec2::new(rng.random_range(0.15..0.85), rng.random_range(0.15..0.85))),
            })
            .collect();
        let dark_cells = evader::dark_cells(&terrain, config.evader.dark_threshold);
        let learnable = (0..config.agents.len()).filter(|&i| config.agents[i].learnable()).collect();
        Ok(Arc::new(Self {
            config,
            terrain,
            hideouts,
            fixed_positions,
            dark_cells,
            learnable,
        }))
    }

    /// Roster indices of the agents that take actions.
    pub fn learnable(&self) -> &[usize] {
        &self.learnable
    }

    pub fn known_hideouts(&self) -> impl Iterator<Item = &Hideout> {
        self.hideouts.iter().filter(|h| h.known_to_pursuers)
    }

    /// Length of [`World::observe_base`] vectors.
    pub fn base_obs_dim(&self) -> usize {
        2 + 1 + 2 * (self.learnable.len() - 1) + 2 * self.known_hideouts().count()
    }

    pub fn max_speed(&self, learnable_idx: usize) -> f64 {
        self.config.agents[self.learnable[learnable_idx]].max_speed
    }

    fn evader_context(&self) -> EvaderContext<'_> {
        EvaderContext {
            terrain: &self.terrain,
            dark_cells: &self.dark_cells,
            config: &self.config.evader,
            v_min: self.config.detection.v_min,
            kappa: self.config.detection.kappa,
        }
    }
}

/// What happened during one [`World::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// One reward per learnable agent.
    pub rewards: Vec<f64>,
    pub detections: Vec<Detection>,
    /// Velocities actually applied to the learnable agents after clipping.
    pub applied: Vec<Vec2>,
}

impl StepResult {
    pub fn team_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }
}

/// Per-timestep summary used for episode metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub detected: bool,
    pub closest_distance: f64,
    pub team_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub detection_rate: f64,
    pub closest_distance: f64,
    /// Mean per-timestep team reward.
    pub mean_reward: f64,
    /// Sum of the per-timestep team reward over the episode.
    pub total_reward: f64,
    pub steps: usize,
}

pub fn episode_metrics(steps: &[StepStats]) -> Result<EpisodeMetrics, WorldError> {
    if steps.is_empty() {
        return Err(WorldError::Contract("episode metrics of an empty trajectory".into()));
    }
    let n = steps.len() as f64;
    let total_reward = steps.iter().map(|s| s.team_reward).sum::<f64>();
    Ok(EpisodeMetrics {
        detection_rate: steps.iter().filter(|s| s.detected).count() as f64 / n,
        closest_distance: steps.iter().map(|s| s.closest_distance).sum::<f64>() / n,
        mean_reward: total_reward / n,
        total_reward,
        steps: steps.len(),
    })
}

/// One episode.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Arc<Scenario>,
    state: TerrainWorldState,
    evader: EvaderState,
    goal: usize,
    episode_seed: u64,
}

impl World {
    pub fn new(scenario: Arc<Scenario>, episode_seed: u64) -> Result<Self, WorldError> {
        let cfg = &scenario.config;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let mut start = Vec2::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        for _ in 0..1000 {
            if scenario.hideouts.iter().all(|h| h.location.dist(start) >= cfg.start_clearance) {
                break;
            }
            start = Vec2::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        }
        let goal = evader::choose_goal(&scenario.hideouts, start, episode_seed)?;
        let agent_pos = scenario
            .fixed_positions
            .iter()
            .map(|fixed| match fixed {
                Some(p) => *p,
                None => {
                    let r = cfg.spawn_radius * rng.random::<f64>().sqrt();
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    (start + Vec2::new(r * a.cos(), r * a.sin())).clamp_unit()
                }
            })
            .collect::<Vec<_>>();
        let evader = EvaderState::new(&scenario.evader_context(), start, scenario.hideouts[goal].location)?;
        let n = agent_pos.len();
        Ok(Self {
            state: TerrainWorldState {
                t: 0,
                evader_start: start,
                evader_pos: start,
                evader_vel: Vec2::ZERO,
                agent_pos,
                agent_vel: vec![Vec2::ZERO; n],
                detections: Vec::new(),
                outcome: Outcome::Running,
            },
            scenario,
            evader,
            goal,
            episode_seed,
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.scenario.config
    }

    pub fn state(&self) -> &TerrainWorldState {
        &self.state
    }

    pub fn evader(&self) -> &EvaderState {
        &self.evader
    }

    pub fn evader_mode(&self) -> EvaderMode {
        self.evader.mode
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn learnable_positions(&self) -> Vec<Vec2> {
        self.scenario.learnable.iter().map(|&i| self.state.agent_pos[i]).collect()
    }

    /// Overrides evader and agent positions (roster order) and replans the
    /// evader route from its new position. Intended for scripted tests.
    pub fn place(&mut self, evader_pos: Vec2, agent_pos: &[Vec2]) -> Result<(), WorldError> {
        if agent_pos.len() != self.state.agent_pos.len() {
            return Err(WorldError::Contract(format!(
                "expected {} agent positions, got {}",
                self.state.agent_pos.len(),
                agent_pos.len()
            )));
        }
        self.state.evader_pos = evader_pos.clamp_unit();
        self.state.agent_pos = agent_pos.iter().map(|p| p.clamp_unit()).collect();
        self.evader = EvaderState::new(
            &self.scenario.evader_context(),
            self.state.evader_pos,
            self.scenario.hideouts[self.goal].location,
        )?;
        Ok(())
    }

    /// Advances one timestep. `actions` holds one velocity per learnable
    /// agent, in roster order.
    pub fn step(&mut self, actions: &[Vec2]) -> Result<StepResult, WorldError> {
        if self.state.done() {
            return Err(WorldError::Contract("step called on a finished episode".into()));
        }
        let sc = Arc::clone(&self.scenario);
        let cfg = &sc.config;
        if actions.len() != sc.learnable.len() {
            return Err(WorldError::Contract(format!(
                "expected {} actions, got {}",
                sc.learnable.len(),
                actions.len()
            )));
        }
        if let Some(a) = actions.iter().find(|a| !a.is_finite()) {
            return Err(WorldError::Contract(format!("non-finite action {a:?}")));
        }

        let mut applied = Vec::with_capacity(actions.len());
        for (&idx, &a) in sc.learnable.iter().zip(actions) {
            let v = a.clip_norm(cfg.agents[idx].max_speed);
            let before = self.state.agent_pos[idx];
            let after = (before + v).clamp_unit();
            self.state.agent_pos[idx] = after;
            self.state.agent_vel[idx] = after - before;
            applied.push(v);
        }

        let pursuers: Vec<Pursuer> = sc
            .learnable
            .iter()
            .map(|&i| Pursuer {
                position: self.state.agent_pos[i],
                speed: self.state.agent_vel[i].norm(),
                max_speed: cfg.agents[i].max_speed,
            })
            .collect();
        let ev = self.evader.step(&sc.evader_context(), self.state.evader_pos, &pursuers)?;
        let before = self.state.evader_pos;
        self.state.evader_pos = (before + ev.clip_norm(cfg.evader.max_speed)).clamp_unit();
        self.state.evader_vel = self.state.evader_pos - before;
        self.state.t += 1;

        let detections = self.detect();
        self.state.detections.extend_from_slice(&detections);

        if sc.hideouts.iter().any(|h| h.location.dist(self.state.evader_pos) <= HIDEOUT_EPS) {
            self.state.outcome = Outcome::HideoutReached;
        } else if self.state.t >= cfg.t_max {
            self.state.outcome = Outcome::Timeout;
        }

        let rewards = (0..sc.learnable.len()).map(|i| self.reward(i, &detections)).collect();
        Ok(StepResult {
            rewards,
            detections,
            applied,
        })
    }

    fn detect(&self) -> Vec<Detection> {
        let cfg = &self.scenario.config;
        let pos = self.state.evader_pos;
        let speed = self.state.evader_vel.norm();
        let vis = self.scenario.terrain.visibility_at(pos);
        cfg.agents
            .iter()
            .enumerate()
            .filter(|(i, spec)| {
                let r = detection_radius(
                    spec.base_detect_radius,
                    cfg.detection.v_min,
                    cfg.detection.kappa,
                    speed,
                    cfg.evader.max_speed,
                    vis,
                );
                self.state.agent_pos[*i].dist(pos) <= r
            })
            .map(|(i, _)| Detection {
                k: self.state.t,
                position: pos,
                velocity: self.state.evader_vel,
                detector: i,
            })
            .collect()
    }

    /// `c_det · [i detected] + c_team · [anyone detected] − c_dist · ‖x_i − x_evader‖`
    pub fn reward(&self, learnable_idx: usize, detections: &[Detection]) -> f64 {
        let r = &self.scenario.config.reward;
        let roster = self.scenario.learnable[learnable_idx];
        let own = detections.iter().any(|d| d.detector == roster);
        let any = !detections.is_empty();
        let dist = self.state.agent_pos[roster].dist(self.state.evader_pos);
        r.c_det * f64::from(u8::from(own)) + r.c_team * f64::from(u8::from(any)) - r.c_dist * dist
    }

    /// Base observation of a learnable agent:
    /// `[own x, own y, t / T_max, others (x, y)…, known hideouts (x, y)…]`.
    /// Other agents appear in roster order with the observer skipped.
    pub fn observe_base(&self, learnable_idx: usize) -> Result<Vec<f64>, WorldError> {
        let sc = &self.scenario;
        let &me = sc
            .learnable
            .get(learnable_idx)
            .ok_or_else(|| WorldError::Contract(format!("no learnable agent {learnable_idx}")))?;
        let mut o = Vec::with_capacity(sc.base_obs_dim());
        let p = self.state.agent_pos[me];
        o.extend([p.x, p.y, self.state.t as f64 / sc.config.t_max as f64]);
        for &j in sc.learnable.iter().filter(|&&j| j != me) {
            let q = self.state.agent_pos[j];
            o.extend([q.x, q.y]);
        }
        for h in sc.known_hideouts() {
            o.extend([h.location.x, h.location.y]);
        }
        Ok(o)
    }

    pub fn step_stats(&self, result: &StepResult) -> StepStats {
        let closest = self
            .learnable_positions()
            .iter()
            .map(|p| p.dist(self.state.evader_pos))
            .fold(f64::INFINITY, f64::min);
        StepStats {
            detected: !result.detections.is_empty(),
            closest_distance: closest,
            team_reward: result.team_reward(),
        }
    }
}
