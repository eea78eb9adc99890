use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WorldError;
use crate::geom::Vec2;

/// Visibility below this marks dense forest.
pub const DENSE_THRESHOLD: f64 = 0.3;

/// Square visibility grid over the unit map. Immutable once generated.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMap {
    side: usize,
    visibility: Vec<f64>,
    seed: u64,
}

impl TerrainMap {
    /// Builds a map from explicit row-major visibility values.
    pub fn from_values(side: usize, visibility: Vec<f64>) -> Result<Self, WorldError> {
        if side == 0 || visibility.len() != side * side {
            return Err(WorldError::Config(format!(
                "terrain needs {} values for side {side}, got {}",
                side * side,
                visibility.len()
            )));
        }
        if let Some(v) = visibility.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(WorldError::Config(format!("visibility {v} outside [0, 1]")));
        }
        Ok(Self {
            side,
            visibility,
            seed: 0,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.visibility
    }

    pub fn cell(&self, p: Vec2) -> (usize, usize) {
        let g = self.side;
        let c = |v: f64| ((v.clamp(0.0, 1.0) * g as f64) as usize).min(g - 1);
        (c(p.x), c(p.y))
    }

    pub fn cell_index(&self, p: Vec2) -> usize {
        let (cx, cy) = self.cell(p);
        cy * self.side + cx
    }

    pub fn cell_center(&self, index: usize) -> Vec2 {
        let g = self.side as f64;
        let (cx, cy) = (index % self.side, index / self.side);
        Vec2::new((cx as f64 + 0.5) / g, (cy as f64 + 0.5) / g)
    }

    pub fn visibility_at_index(&self, index: usize) -> f64 {
        self.visibility[index]
    }

    pub fn visibility_at(&self, p: Vec2) -> f64 {
        self.visibility[self.cell_index(p)]
    }

    pub fn dense_fraction(&self) -> f64 {
        let n = self.visibility.iter().filter(|&&v| v < DENSE_THRESHOLD).count();
        n as f64 / self.visibility.len() as f64
    }

    /// One row per grid row (y), comma separated, full precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.visibility.chunks(self.side) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

/// Seeded smooth random field, rank-mapped so that exactly
/// `round(forest_fraction · G²)` cells fall below [`DENSE_THRESHOLD`].
pub fn generate_terrain(seed: u64, side: usize, forest_fraction: f64) -> Result<TerrainMap, WorldError> {
    if side < 8 {
        return Err(WorldError::Config(format!("terrain side must be >= 8, got {side}")));
    }
    if !(0.0..=1.0).contains(&forest_fraction) {
        return Err(WorldError::Config(format!(
            "forest fraction must be in [0, 1], got {forest_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let mut field: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    // Box blur, radius ~G/16, three passes: close to a Gaussian smoothing.
    let radius = (side / 16).max(1) as isize;
    for _ in 0..3 {
        field = blur(&field, side, radius);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let dense = (forest_fraction * n as f64).round() as usize;
    let mut visibility = vec![0.0; n];
    for (rank, &cell) in order.iter().enumerate() {
        visibility[cell] = if rank < dense {
            0.05 + (DENSE_THRESHOLD - 0.05) * rank as f64 / dense as f64
        } else {
            let open = n - dense;
            let t = if open > 1 {
                (rank - dense) as f64 / (open - 1) as f64
            } else {
                1.0
            };
            DENSE_THRESHOLD + (1.0 - DENSE_THRESHOLD) * t
        };
    }
    Ok(TerrainMap {
        side,
        visibility,
        seed,
    })
}

fn blur(field: &[f64], side: usize, radius: isize) -> Vec<f64> {
    let g = side as isize;
    let mut out = vec![0.0; field.len()];
    for y in 0..g {
        for x in 0..g {
            let mut sum = 0.0;
            let mut count = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (nx, ny) = (x + dx, y + dy);
                    if (0..g).contains(&nx) && (0..g).contains(&ny) {
                        sum += field[(ny * g + nx) as usize];
                        count += 1.0;
                    }
                }
            }
            out[(y * g + x) as usize] = sum / count;
        }
    }
    out
}
