use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ndgrad::DenseArray;
use crate::{Error, Result};

/// One joint step. Observations are the agents' vectors concatenated in
/// roster order; actions are normalized velocities `v / max_speed`, two per
/// agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with its own seeded sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Vec<&Transition>> {
        if self.items.is_empty() || n == 0 {
            return Err(Error::Contract("cannot sample an empty batch".into()));
        }
        let len = self.items.len();
        let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..len)).collect();
        Ok(idx.into_iter().map(|i| &self.items[i]).collect())
    }
}

/// A sampled batch laid out as matrices, one row per transition.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: DenseArray,
    pub actions: DenseArray,
    pub next_obs: DenseArray,
    /// `rewards[i][b]`: agent `i`, row `b`.
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let first = ts.first().ok_or_else(|| Error::Contract("batch is empty".into()))?;
        let (d, a, n) = (first.obs.len(), first.actions.len(), first.rewards.len());
        for t in ts {
            if t.obs.len() != d || t.next_obs.len() != d || t.actions.len() != a || t.rewards.len() != n {
                return Err(Error::Contract("transitions in a batch differ in layout".into()));
            }
        }
        let stack = |f: &dyn Fn(&Transition) -> &[f64], w: usize| {
            DenseArray::matrix(ts.len(), w, ts.iter().flat_map(|t| f(t).iter().copied()).collect())
        };
        Ok(Self {
            obs: stack(&|t| &t.obs, d)?,
            actions: stack(&|t| &t.actions, a)?,
            next_obs: stack(&|t| &t.next_obs, d)?,
            rewards: (0..n).map(|i| ts.iter().map(|t| t.rewards[i]).collect()).collect(),
            done: ts.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }
}

/// Columns `start..end` of a matrix.
pub(crate) fn columns(m: &DenseArray, start: usize, end: usize) -> DenseArray {
    let (rows, cols) = (m.rows(), m.cols());
    let data = (0..rows)
        .flat_map(|r| m.data()[r * cols + start..r * cols + end].iter().copied())
        .collect();
    DenseArray::matrix(rows, end - start, data).expect("column slice")
}
