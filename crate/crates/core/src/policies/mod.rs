//! Scripted pursuit policies: random walk, the shared-detection heuristic
//! (chase, intercept, spiral, random spiral) and two policies that steer by
//! a filter's mixture prediction.

mod spiral;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use spiral::{spiral_arc_length, spiral_waypoint};

use crate::filter::{build_filter_input, FilterModel, MixturePrediction};
use crate::geom::Vec2;
use crate::world::World;
use crate::{Error, Result};

/// A team policy: one velocity per learnable agent, in roster order.
pub trait PursuitPolicy: Send {
    fn name(&self) -> String;

    /// Called once per episode before the first [`act`](Self::act).
    fn reset(&mut self, world: &World, seed: u64);

    fn act(&mut self, world: &World) -> Result<Vec<Vec2>>;
}

/// Uniform direction on the circle at full speed.
pub fn random_policy(rng: &mut impl Rng, max_speed: f64) -> Vec2 {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    Vec2::new(a.cos(), a.sin()) * max_speed
}

/// Point where an agent at `x_s` moving at `v_max` first meets a target at
/// `x_p` moving with constant velocity `u_p`. `None` when it never can.
pub fn intercept_point(x_s: Vec2, v_max: f64, x_p: Vec2, u_p: Vec2) -> Option<Vec2> {
    let d = x_p - x_s;
    let c = d.dot(d);
    if c == 0.0 {
        return Some(x_p);
    }
    if !(v_max > 0.0) {
        return None;
    }
    // (u·u − v²) T² + 2 (d·u) T + d·d = 0
    let a = u_p.dot(u_p) - v_max * v_max;
    let b = 2.0 * d.dot(u_p);
    let t = if a.abs() < 1e-15 {
        if b < 0.0 {
            Some(-c / b)
        } else {
            None
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            None
        } else {
            let sq = disc.sqrt();
            let mut roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
            roots.sort_by(f64::total_cmp);
            roots.into_iter().find(|&t| t > 0.0)
        }
    };
    t.map(|t| x_p + u_p * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    /// Steps spent spiralling around a lost detection, and the lifetime of
    /// each random spiral.
    pub t_spiral: usize,
    pub spiral_a: f64,
    /// Radius growth per radian.
    pub spiral_b: f64,
    pub random_center_min: f64,
    pub random_center_max: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            t_spiral: 50,
            spiral_a: 0.01,
            spiral_b: 0.02 / std::f64::consts::TAU,
            random_center_min: 0.1,
            random_center_max: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    Chase,
    Intercept,
    Spiral,
    RandomSpiral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPlan {
    pub mode: HeuristicMode,
    pub center: Vec2,
    pub step: usize,
    /// Steps spent in the current random spiral.
    pub timer: usize,
}

/// Per-episode heuristic state. Every agent reads the same detection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicState {
    pub agents: Vec<AgentPlan>,
}

impl HeuristicState {
    pub fn new(n_agents: usize) -> Self {
        Self {
            agents: vec![
                AgentPlan {
                    mode: HeuristicMode::RandomSpiral,
                    center: Vec2::ZERO,
                    step: 0,
                    // Forces a fresh random center on the first step.
                    timer: usize::MAX,
                };
                n_agents
            ],
        }
    }
}

/// Everything the heuristic needs to see at one step.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicView<'a> {
    pub t: usize,
    pub positions: &'a [Vec2],
    pub max_speeds: &'a [f64],
    /// Most recent detection position, velocity and timestep.
    pub last_detection: Option<(Vec2, Vec2, usize)>,
}

/// One step of the heuristic state machine for every agent.
pub fn heuristic_policy(
    view: &HeuristicView<'_>,
    state: &mut HeuristicState,
    cfg: &HeuristicConfig,
    rng: &mut impl Rng,
) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(view.positions.len());
    for (i, plan) in state.agents.iter_mut().enumerate() {
        let x_s = view.positions[i];
        let v = view.max_speeds[i];
        let fresh = view.last_detection.filter(|d| d.2 == view.t);
        let lost = view
            .last_detection
            .filter(|d| d.2 < view.t && view.t - d.2 <= cfg.t_spiral);

        let mode = if let Some((x_p, _, _)) = fresh {
            if x_p.dist(x_s) < v {
                HeuristicMode::Chase
            } else {
                HeuristicMode::Intercept
            }
        } else if lost.is_some() {
            HeuristicMode::Spiral
        } else {
            HeuristicMode::RandomSpiral
        };

        if mode != plan.mode {
            plan.step = 0;
            plan.timer = if mode == HeuristicMode::RandomSpiral { usize::MAX } else { 0 };
        }
        plan.mode = mode;

        let vel = match mode {
            HeuristicMode::Chase => {
                let (x_p, _, _) = fresh.expect("chase needs a detection");
                x_s.toward(x_p, v)
            }
            HeuristicMode::Intercept => {
                let (x_p, u_p, _) = fresh.expect("intercept needs a detection");
                let aim = intercept_point(x_s, v, x_p, u_p).map_or(x_p, Vec2::clamp_unit);
                x_s.toward(aim, v)
            }
            HeuristicMode::Spiral => {
                let (x_p, _, _) = lost.expect("spiral needs a lost detection");
                if plan.center != x_p {
                    plan.center = x_p;
                    plan.step = 0;
                }
                spiral_velocity(plan, x_s, v, cfg)
            }
            HeuristicMode::RandomSpiral => {
                if plan.timer >= cfg.t_spiral {
                    let r = cfg.random_center_min..cfg.random_center_max;
                    plan.center = Vec2::new(rng.random_range(r.clone()), rng.random_range(r));
                    plan.step = 0;
                    plan.timer = 0;
                }
                plan.timer += 1;
                spiral_velocity(plan, x_s, v, cfg)
            }
        };
        out.push(vel);
    }
    out
}

fn spiral_velocity(plan: &mut AgentPlan, x_s: Vec2, v: f64, cfg: &HeuristicConfig) -> Vec2 {
    let target = spiral_waypoint(plan.center, plan.step, cfg.spiral_a, cfg.spiral_b, v).clamp_unit();
    if x_s.dist(target) <= v {
        plan.step += 1;
    }
    x_s.toward(target, v)
}

/// Every agent heads for the mean of the heaviest component.
pub fn pmc_highest_prob_policy(pred: &MixturePrediction, positions: &[Vec2], max_speeds: &[f64]) -> Vec<Vec2> {
    let target = pred.means[pred.top_component()];
    positions
        .iter()
        .zip(max_speeds)
        .map(|(&p, &v)| p.toward(target, v))
        .collect()
}

/// Agents are dealt round-robin onto the heaviest components, one component
/// per agent while there are enough of them.
pub fn pmc_search_policy(pred: &MixturePrediction, positions: &[Vec2], max_speeds: &[f64]) -> Vec<Vec2> {
    let ranked = pred.ranked_components();
    let m = positions.len().min(ranked.len()).max(1);
    positions
        .iter()
        .zip(max_speeds)
        .enumerate()
        .map(|(i, (&p, &v))| p.toward(pred.means[ranked[i % m]], v))
        .collect()
}

fn max_speeds(world: &World) -> Vec<f64> {
    let sc = world.scenario();
    (0..sc.learnable().len()).map(|i| sc.max_speed(i)).collect()
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl PursuitPolicy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, _world: &World, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0AD0_0A11);
    }

    fn act(&mut self, world: &World) -> Result<Vec<Vec2>> {
        Ok(max_speeds(world).into_iter().map(|v| random_policy(&mut self.rng, v)).collect())
    }
}

pub struct HeuristicPolicy {
    pub config: HeuristicConfig,
    pub state: HeuristicState,
    rng: ChaCha8Rng,
}

impl HeuristicPolicy {
    pub fn new(config: HeuristicConfig) -> Self {
        Self {
            config,
            state: HeuristicState::new(0),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl PursuitPolicy for HeuristicPolicy {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn reset(&mut self, world: &World, seed: u64) {
        self.state = HeuristicState::new(world.scenario().learnable().len());
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4E0_5EA2C);
    }

    fn act(&mut self, world: &World) -> Result<Vec<Vec2>> {
        let positions = world.learnable_positions();
        if self.state.agents.len() != positions.len() {
            return Err(Error::Contract("heuristic policy used before reset".into()));
        }
        let speeds = max_speeds(world);
        let st = world.state();
        let view = HeuristicView {
            t: st.t,
            positions: &positions,
            max_speeds: &speeds,
            last_detection: st.last_detection().map(|d| (d.position, d.velocity, d.k)),
        };
        Ok(heuristic_policy(&view, &mut self.state, &self.config, &mut self.rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterSteering {
    HighestProb,
    Search,
}

/// Steers by a frozen filter's prediction from the live detection log.
#[derive(Clone)]
pub struct FilterPolicy {
    model: Arc<FilterModel>,
    steering: FilterSteering,
}

impl FilterPolicy {
    pub fn new(model: Arc<FilterModel>, steering: FilterSteering) -> Self {
        Self { model, steering }
    }
}

/// Filter prediction for the current state of `world`.
pub fn predict_for(model: &FilterModel, world: &World) -> Result<MixturePrediction> {
    let st = world.state();
    let input = build_filter_input(&st.detections, st.t, st.evader_start, world.config().t_max);
    Ok(model.predict_one(&input)?)
}

impl PursuitPolicy for FilterPolicy {
    fn name(&self) -> String {
        match self.steering {
            FilterSteering::HighestProb => format!("{}_highest_prob", self.model.kind().name()),
            FilterSteering::Search => format!("{}_search", self.model.kind().name()),
        }
    }

    fn reset(&mut self, _world: &World, _seed: u64) {}

    fn act(&mut self, world: &World) -> Result<Vec<Vec2>> {
        let pred = predict_for(&self.model, world)?;
        let positions = world.learnable_positions();
        let speeds = max_speeds(world);
        Ok(match self.steering {
            FilterSteering::HighestProb => pmc_highest_prob_policy(&pred, &positions, &speeds),
            FilterSteering::Search => pmc_search_policy(&pred, &positions, &speeds),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_policy_speed_and_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let va = random_policy(&mut a, 0.02);
            assert!((va.norm() - 0.02).abs() < 1e-15);
            assert_eq!(va, random_policy(&mut b, 0.02));
        }
    }

    #[test]
    fn random_walk_has_no_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let sum = (0..n).fold(Vec2::ZERO, |acc, _| acc + random_policy(&mut rng, 1.0));
        // Each coordinate has variance 1/2 per step.
        let bound = 3.0 * (0.5f64).sqrt() / (n as f64).sqrt();
        assert!((sum.x / n as f64).abs() < bound && (sum.y / n as f64).abs() < bound);
    }

    #[test]
    fn intercept_cases() {
        let p = Vec2::new(0.4, 0.4);
        assert_eq!(intercept_point(Vec2::ZERO, 0.02, p, Vec2::ZERO), Some(p));
        let hit = intercept_point(Vec2::new(0.0, 0.03), 0.02, Vec2::ZERO, Vec2::new(0.01, 0.0)).unwrap();
        assert!((hit.x - 3f64.sqrt() * 0.01).abs() < 1e-12 && hit.y.abs() < 1e-15);
        // Faster target running straight away.
        assert_eq!(intercept_point(Vec2::ZERO, 0.01, Vec2::new(0.1, 0.0), Vec2::new(0.02, 0.0)), None);
    }

    #[test]
    fn intercept_satisfies_its_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut found = 0;
        for _ in 0..2000 {
            let mut pt = || Vec2::new(rng.random(), rng.random());
            let (x_s, x_p) = (pt(), pt());
            let u = Vec2::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
            let v = rng.random_range(0.005..0.05);
            if let Some(hit) = intercept_point(x_s, v, x_p, u) {
                found += 1;
                let t = if u.norm() > 0.0 { (hit - x_p).norm() / u.norm() } else { 0.0 };
                assert!(t > 0.0);
                assert!(((hit - x_s).norm() - t * v).abs() < 1e-9);
            }
        }
        assert!(found > 500);
    }

    fn view<'a>(t: usize, pos: &'a [Vec2], speeds: &'a [f64], det: Option<(Vec2, Vec2, usize)>) -> HeuristicView<'a> {
        HeuristicView {
            t,
            positions: pos,
            max_speeds: speeds,
            last_detection: det,
        }
    }

    #[test]
    fn chase_points_at_detection() {
        let cfg = HeuristicConfig::default();
        let mut st = HeuristicState::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pos = [Vec2::new(0.5, 0.5)];
        let x_p = Vec2::new(0.505, 0.503);
        let v = heuristic_policy(&view(4, &pos, &[0.01], Some((x_p, Vec2::ZERO, 4))), &mut st, &cfg, &mut rng);
        assert_eq!(st.agents[0].mode, HeuristicMode::Chase);
        assert_eq!(pos[0] + v[0], x_p);
    }

    #[test]
    fn undetected_agents_random_spiral() {
        let cfg = HeuristicConfig::default();
        let mut st = HeuristicState::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pos = vec![Vec2::new(0.5, 0.5), Vec2::new(0.2, 0.7)];
        let speeds = [0.01, 0.05];
        let mut centers = Vec::new();
        for t in 0..300 {
            let v = heuristic_policy(&view(t, &pos, &speeds, None), &mut st, &cfg, &mut rng);
            for (i, a) in st.agents.iter().enumerate() {
                assert_eq!(a.mode, HeuristicMode::RandomSpiral);
                assert!(v[i].norm() <= speeds[i] + 1e-15);
                assert!((0.1..0.9).contains(&a.center.x) && (0.1..0.9).contains(&a.center.y));
            }
            if t % cfg.t_spiral == 0 {
                centers.push(st.agents[0].center);
            }
            for (p, v) in pos.iter_mut().zip(&v) {
                *p = (*p + *v).clamp_unit();
            }
        }
        assert_eq!(centers.len(), 6);
        centers.dedup();
        assert_eq!(centers.len(), 6);
    }

    #[test]
    fn spiral_after_loss_lasts_t_spiral_steps() {
        let cfg = HeuristicConfig::default();
        let mut st = HeuristicState::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos = [Vec2::new(0.3, 0.3)];
        let det = Some((Vec2::new(0.6, 0.6), Vec2::new(0.001, 0.0), 10));
        heuristic_policy(&view(10, &pos, &[0.01], det), &mut st, &cfg, &mut rng);
        assert_eq!(st.agents[0].mode, HeuristicMode::Intercept);
        let mut spiral = 0;
        for t in 11..=(10 + cfg.t_spiral + 5) {
            heuristic_policy(&view(t, &pos, &[0.01], det), &mut st, &cfg, &mut rng);
            match st.agents[0].mode {
                HeuristicMode::Spiral => {
                    spiral += 1;
                    assert_eq!(st.agents[0].center, Vec2::new(0.6, 0.6));
                }
                HeuristicMode::RandomSpiral => assert!(t > 10 + cfg.t_spiral),
                m => panic!("unexpected {m:?}"),
            }
        }
        assert_eq!(spiral, cfg.t_spiral);
    }

    #[test]
    fn intercept_falls_back_to_pointwise() {
        let cfg = HeuristicConfig::default();
        let mut st = HeuristicState::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pos = [Vec2::ZERO];
        let x_p = Vec2::new(0.3, 0.0);
        let det = Some((x_p, Vec2::new(0.05, 0.0), 3));
        let v = heuristic_policy(&view(3, &pos, &[0.01], det), &mut st, &cfg, &mut rng);
        assert_eq!(st.agents[0].mode, HeuristicMode::Intercept);
        assert!((v[0] - Vec2::new(0.01, 0.0)).norm() < 1e-15);
    }

    fn mixture(weights: &[f64]) -> MixturePrediction {
        MixturePrediction {
            weights: weights.to_vec(),
            means: (0..weights.len()).map(|i| Vec2::new(0.1 * i as f64, 0.5)).collect(),
            scales: vec![Vec2::new(0.1, 0.1); weights.len()],
        }
    }

    #[test]
    fn highest_prob_targets() {
        let mut w = vec![0.1 / 7.0; 8];
        w[0] = 0.9;
        let p = mixture(&w);
        let pos = [Vec2::new(0.5, 0.9), Vec2::new(0.9, 0.1)];
        for v in pmc_highest_prob_policy(&p, &pos, &[10.0, 10.0]).iter().zip(&pos) {
            assert!((*v.1 + *v.0).dist(p.means[0]) < 1e-15);
        }
        let eq = mixture(&[0.125; 8]);
        assert_eq!(eq.top_component(), 0);
        let at = [eq.means[0]];
        assert_eq!(pmc_highest_prob_policy(&eq, &at, &[0.01])[0], Vec2::ZERO);
    }

    #[test]
    fn search_round_robin() {
        let w = [0.05, 0.3, 0.1, 0.2, 0.05, 0.1, 0.15, 0.05];
        let p = mixture(&w);
        let ranked = p.ranked_components();
        assert_eq!(&ranked[..3], &[1, 3, 6]);
        let far = Vec2::new(0.5, 0.0);
        let two = pmc_search_policy(&p, &[far, far], &[10.0, 10.0]);
        assert!((far + two[0]).dist(p.means[1]) < 1e-15);
        assert!((far + two[1]).dist(p.means[3]) < 1e-15);
        assert_eq!(pmc_search_policy(&p, &[far], &[0.02]), pmc_highest_prob_policy(&p, &[far], &[0.02]));
        let ten = pmc_search_policy(&p, &[far; 10], &[10.0; 10]);
        let mut hits = [0usize; 8];
        for v in ten {
            let k = p.means.iter().position(|&m| m.dist(far + v) < 1e-15).unwrap();
            hits[k] += 1;
        }
        assert_eq!(hits[ranked[0]], 2);
        assert_eq!(hits[ranked[1]], 2);
        assert_eq!(hits.iter().sum::<usize>(), 10);
    }
}
