use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrajectoryRecord;
use crate::filter::{build_filter_input, TrainingPair};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub eval: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            eval: 0.2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    /// Everything into one split.
    pub fn all(split: Split) -> Self {
        let (train, val, eval) = match split {
            Split::Train => (1.0, 0.0, 0.0),
            Split::Val => (0.0, 1.0, 0.0),
            Split::Eval => (0.0, 0.0, 1.0),
        };
        Self {
            train,
            val,
            eval,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.eval];
        if parts.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must be non-negative and sum to 1, got {parts:?}")));
        }
        Ok(())
    }
}

/// Split of a trajectory; a pure function of its id and the split seed.
pub fn assign_split(trajectory_id: u64, cfg: &SplitConfig) -> Split {
    let mut h = Sha256::new();
    h.update(trajectory_id.to_le_bytes());
    h.update(cfg.seed.to_le_bytes());
    let d = h.finalize();
    let u = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / 2f64.powi(64);
    if u < cfg.train {
        Split::Train
    } else if u < cfg.train + cfg.val {
        Split::Val
    } else {
        Split::Eval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetPair {
    pub trajectory_id: u64,
    pub t: usize,
    pub split: Split,
    pub pair: TrainingPair,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterDataset {
    pub pairs: Vec<DatasetPair>,
}

impl FilterDataset {
    pub fn split(&self, which: Split) -> Vec<TrainingPair> {
        self.pairs.iter().filter(|p| p.split == which).map(|p| p.pair).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn extend(&mut self, other: FilterDataset) {
        self.pairs.extend(other.pairs);
    }
}

/// One pair per timestep per trajectory, target = true evader position.
pub fn build_filter_dataset(records: &[TrajectoryRecord], t_max: usize, split: &SplitConfig) -> Result<FilterDataset> {
    split.validate()?;
    if records.is_empty() {
        return Err(Error::Config("no trajectories to build a dataset from".into()));
    }
    let mut pairs = Vec::new();
    for rec in records {
        let which = assign_split(rec.header.trajectory_id, split);
        let dets = rec.detections();
        for row in &rec.rows {
            let seen = dets.partition_point(|d| d.k <= row.t);
            pairs.push(DatasetPair {
                trajectory_id: rec.header.trajectory_id,
                t: row.t,
                split: which,
                pair: TrainingPair {
                    input: build_filter_input(&dets[..seen], row.t, rec.header.evader_start, t_max),
                    target: row.evader_pos,
                },
            });
        }
    }
    Ok(FilterDataset { pairs })
}
