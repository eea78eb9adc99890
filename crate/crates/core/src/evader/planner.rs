//! Terrain-weighted 8-connected A*.
//!
//! Edge costs are stored as integers in units of `1 / COST_SCALE` normalized
//! lengths. Path costs are then sums of integers, so two different searches
//! that find optimal paths agree on the cost bit for bit, regardless of the
//! order in which they add edges.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::geom::Vec2;
use crate::world::{TerrainMap, WorldError};

pub const COST_SCALE: f64 = 1e9;

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Cell lattice over a [`TerrainMap`] with visibility-penalized edge costs:
/// `step_length · (1 + w_v · visibility(destination))`.
#[derive(Debug, Clone, Copy)]
pub struct PlanGrid<'a> {
    terrain: &'a TerrainMap,
    w_v: f64,
}

impl<'a> PlanGrid<'a> {
    pub fn new(terrain: &'a TerrainMap, w_v: f64) -> Result<Self, WorldError> {
        if !(w_v >= 0.0 && w_v.is_finite()) {
            return Err(WorldError::Config(format!("visibility weight must be finite and >= 0, got {w_v}")));
        }
        Ok(Self { terrain, w_v })
    }

    pub fn terrain(&self) -> &TerrainMap {
        self.terrain
    }

    pub fn node_count(&self) -> usize {
        self.terrain.side() * self.terrain.side()
    }

    /// Unscaled edge cost between adjacent cells.
    pub fn edge_cost_exact(&self, from: usize, to: usize) -> f64 {
        let g = self.terrain.side();
        let diagonal = from % g != to % g && from / g != to / g;
        let step = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 } / g as f64;
        step * (1.0 + self.w_v * self.terrain.visibility_at_index(to))
    }

    pub fn edge_cost(&self, from: usize, to: usize) -> u64 {
        (self.edge_cost_exact(from, to) * COST_SCALE).round() as u64
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let g = self.terrain.side() as isize;
        let (x, y) = ((node as isize) % g, (node as isize) / g);
        NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if (0..g).contains(&nx) && (0..g).contains(&ny) {
                let to = (ny * g + nx) as usize;
                Some((to, self.edge_cost(node, to)))
            } else {
                None
            }
        })
    }

    /// Straight-line distance between cell centers, shrunk slightly so that
    /// integer rounding of edge costs can never make it overestimate.
    pub fn heuristic(&self, a: usize, b: usize) -> u64 {
        let d = self.terrain.cell_center(a).dist(self.terrain.cell_center(b));
        (d * COST_SCALE * (1.0 - 1e-6)).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Cell indices from the start cell to the goal cell inclusive.
    pub cells: Vec<usize>,
    pub cost_units: u64,
}

impl Plan {
    pub fn cost(&self) -> f64 {
        self.cost_units as f64 / COST_SCALE
    }

    /// Cell centers along the path, in normalized coordinates.
    pub fn waypoints(&self, terrain: &TerrainMap) -> Vec<Vec2> {
        self.cells.iter().map(|&c| terrain.cell_center(c)).collect()
    }
}

/// Cost-optimal path between the cells containing `start` and `goal`.
pub fn astar_plan(terrain: &TerrainMap, start: Vec2, goal: Vec2, w_v: f64) -> Result<Plan, WorldError> {
    for p in [start, goal] {
        if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
            return Err(WorldError::Contract(format!("plan endpoint {p:?} outside the unit square")));
        }
    }
    let grid = PlanGrid::new(terrain, w_v)?;
    let (s, t) = (terrain.cell_index(start), terrain.cell_index(goal));
    astar_cells(&grid, s, t)
}

pub fn astar_cells(grid: &PlanGrid<'_>, start: usize, goal: usize) -> Result<Plan, WorldError> {
    let n = grid.node_count();
    let mut best = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    best[start] = 0;
    open.push(Reverse((grid.heuristic(start, goal), start)));

    while let Some(Reverse((f, node))) = open.pop() {
        let g = best[node];
        if f != g + grid.heuristic(node, goal) {
            continue;
        }
        if node == goal {
            let mut cells = vec![goal];
            while *cells.last().expect("non-empty") != start {
                cells.push(parent[*cells.last().expect("non-empty")]);
            }
            cells.reverse();
            return Ok(Plan { cells, cost_units: g });
        }
        for (next, cost) in grid.neighbors(node) {
            let cand = g + cost;
            if cand < best[next] {
                best[next] = cand;
                parent[next] = node;
                open.push(Reverse((cand + grid.heuristic(next, goal), next)));
            }
        }
    }
    // Every cell has finite-cost edges to all its neighbours.
    unreachable!("goal cell {goal} unreachable on a connected lattice")
}
