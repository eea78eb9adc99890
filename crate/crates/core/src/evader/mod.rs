//! The adversary: A* routing to a hideout plus a detection-triggered evasive
//! mode.
//!
//! FOLLOW walks the planned waypoints at max speed. When the evader has seen
//! at least one pursuer for `n_trigger` consecutive steps it switches to
//! EVADE and runs for the nearest dense-forest cell. EVADE ends after
//! `t_evade` steps or on the first step with no pursuer in view, and the
//! route to the goal is replanned from wherever the evader is.

mod planner;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use planner::{astar_cells, astar_plan, Plan, PlanGrid, COST_SCALE};

use crate::geom::Vec2;
use crate::world::{detection_radius, EvaderConfig, Hideout, TerrainMap, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaderMode {
    Follow,
    Evade,
}

/// A pursuer as the evader could see it.
#[derive(Debug, Clone, Copy)]
pub struct Pursuer {
    pub position: Vec2,
    pub speed: f64,
    pub max_speed: f64,
}

/// Static inputs the evader needs every step.
#[derive(Debug, Clone, Copy)]
pub struct EvaderContext<'a> {
    pub terrain: &'a TerrainMap,
    /// Cell indices with visibility below `config.dark_threshold`.
    pub dark_cells: &'a [usize],
    pub config: &'a EvaderConfig,
    pub v_min: f64,
    pub kappa: f64,
}

impl EvaderContext<'_> {
    /// Whether the evader at `at` sees `p`, using the shared radius law with
    /// the evader as observer.
    pub fn sees(&self, at: Vec2, p: &Pursuer) -> bool {
        let vis = self.terrain.visibility_at(p.position);
        let r = detection_radius(
            self.config.detect_radius,
            self.v_min,
            self.kappa,
            p.speed,
            p.max_speed,
            vis,
        );
        at.dist(p.position) <= r
    }
}

pub fn dark_cells(terrain: &TerrainMap, threshold: f64) -> Vec<usize> {
    (0..terrain.side() * terrain.side())
        .filter(|&i| terrain.visibility_at_index(i) < threshold)
        .collect()
}

/// Seeded uniform choice of the goal hideout.
pub fn choose_goal(hideouts: &[Hideout], _start: Vec2, seed: u64) -> Result<usize, WorldError> {
    if hideouts.is_empty() {
        return Err(WorldError::Config("no hideouts to choose from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A09_E667_F3BC_C908);
    Ok(rng.random_range(0..hideouts.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaderState {
    pub mode: EvaderMode,
    pub waypoints: VecDeque<Vec2>,
    /// Cells of the most recent plan; the first entry is the cell the
    /// evader occupied when it planned.
    pub plan_cells: Vec<usize>,
    pub goal: Vec2,
    pub seen_streak: usize,
    pub evade_timer: usize,
    pub replans: usize,
}

impl EvaderState {
    pub fn new(ctx: &EvaderContext<'_>, start: Vec2, goal: Vec2) -> Result<Self, WorldError> {
        let mut s = Self {
            mode: EvaderMode::Follow,
            waypoints: VecDeque::new(),
            plan_cells: Vec::new(),
            goal,
            seen_streak: 0,
            evade_timer: 0,
            replans: 0,
        };
        s.plan(ctx, start)?;
        Ok(s)
    }

    fn plan(&mut self, ctx: &EvaderContext<'_>, from: Vec2) -> Result<(), WorldError> {
        let plan = astar_plan(ctx.terrain, from, self.goal, ctx.config.w_v)?;
        let mut wps: VecDeque<Vec2> = plan.waypoints(ctx.terrain).into();
        wps.push_back(self.goal);
        self.waypoints = wps;
        self.plan_cells = plan.cells;
        Ok(())
    }

    /// Velocity for this step given the evader position and the dynamic
    /// pursuers. Its norm never exceeds the configured max speed.
    pub fn step(&mut self, ctx: &EvaderContext<'_>, pos: Vec2, pursuers: &[Pursuer]) -> Result<Vec2, WorldError> {
        let speed = ctx.config.max_speed;
        let seen: Vec<&Pursuer> = pursuers.iter().filter(|p| ctx.sees(pos, p)).collect();
        if seen.is_empty() {
            self.seen_streak = 0;
        } else {
            self.seen_streak += 1;
        }

        match self.mode {
            EvaderMode::Follow if self.seen_streak >= ctx.config.n_trigger => {
                self.mode = EvaderMode::Evade;
                self.evade_timer = 0;
            }
            EvaderMode::Evade if self.evade_timer >= ctx.config.t_evade || seen.is_empty() => {
                self.mode = EvaderMode::Follow;
                self.seen_streak = 0;
                self.evade_timer = 0;
                self.replans += 1;
                self.plan(ctx, pos)?;
            }
            _ => {}
        }

        match self.mode {
            EvaderMode::Evade => {
                self.evade_timer += 1;
                Ok(self.evade_velocity(ctx, pos, &seen))
            }
            EvaderMode::Follow => Ok(self.follow_velocity(pos, speed)),
        }
    }

    fn follow_velocity(&mut self, pos: Vec2, speed: f64) -> Vec2 {
        while self.waypoints.len() > 1 && pos.dist(self.waypoints[0]) <= speed {
            self.waypoints.pop_front();
        }
        match self.waypoints.front().copied() {
            Some(next) => {
                if pos.dist(next) <= speed {
                    self.waypoints.pop_front();
                    next - pos
                } else {
                    pos.toward(next, speed)
                }
            }
            None => Vec2::ZERO,
        }
    }

    fn evade_velocity(&self, ctx: &EvaderContext<'_>, pos: Vec2, seen: &[&Pursuer]) -> Vec2 {
        let speed = ctx.config.max_speed;
        let here = ctx.terrain.cell_index(pos);
        let target = ctx
            .dark_cells
            .iter()
            .filter(|&&c| c != here)
            .map(|&c| ctx.terrain.cell_center(c))
            .min_by(|a, b| pos.dist(*a).total_cmp(&pos.dist(*b)));
        let in_dark = ctx.terrain.visibility_at_index(here) < ctx.config.dark_threshold;
        let dir = match (target, in_dark) {
            (Some(t), false) => t - pos,
            _ => {
                // Already under cover (or no cover exists): move away from
                // the closest pursuer.
                let nearest = seen
                    .iter()
                    .min_by(|a, b| pos.dist(a.position).total_cmp(&pos.dist(b.position)));
                match nearest {
                    Some(p) if p.position != pos => pos - p.position,
                    _ => self.waypoints.front().map_or(Vec2::new(1.0, 0.0), |&w| w - pos),
                }
            }
        };
        let n = dir.norm();
        if n == 0.0 {
            Vec2::new(speed, 0.0)
        } else {
            dir * (speed / n)
        }
    }
}
