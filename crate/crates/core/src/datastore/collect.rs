use std::sync::Arc;

use super::{TrajectoryHeader, TrajectoryRecord, TrajectoryRow};
use crate::policies::PursuitPolicy;
use crate::world::{Scenario, World};
use crate::{Error, Result};

/// Caps the number of parallel episode workers.
pub const THREADS_ENV: &str = "PURSUIT_TRACK_THREADS";

pub type PolicyFactory<'a> = dyn Fn() -> Box<dyn PursuitPolicy> + Sync + 'a;

pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => available,
    }
}

/// Seed of episode `i` of a collection started from `base`.
pub fn episode_seed(base: u64, i: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plays one full episode and records it.
pub fn run_episode(scenario: &Arc<Scenario>, policy: &mut dyn PursuitPolicy, seed: u64) -> Result<TrajectoryRecord> {
    let mut world = World::new(Arc::clone(scenario), seed)?;
    policy.reset(&world, seed);
    let mut rows = Vec::new();
    while !world.state().done() {
        let actions = policy.act(&world)?;
        let res = world.step(&actions)?;
        let st = world.state();
        rows.push(TrajectoryRow {
            t: st.t,
            evader_pos: st.evader_pos,
            evader_vel: st.evader_vel,
            evader_mode: world.evader_mode(),
            agent_pos: st.agent_pos.clone(),
            detections: res.detections,
            rewards: res.rewards,
        });
    }
    let cfg = world.config();
    Ok(TrajectoryRecord {
        header: TrajectoryHeader {
            trajectory_id: seed,
            episode_seed: seed,
            terrain_seed: cfg.terrain_seed,
            layout_seed: cfg.layout_seed,
            config_hash: cfg.hash(),
            policy: policy.name(),
            outcome: world.state().outcome,
            steps: rows.len(),
            t_max: cfg.t_max,
            evader_start: world.state().evader_start,
            goal: world.goal(),
            learnable: scenario.learnable().to_vec(),
        },
        rows,
    })
}

/// Runs `n_episodes` with fresh policies from `factory`. Episodes are
/// spread over [`worker_count`] threads; the result is in episode order and
/// does not depend on the thread count.
pub fn collect_dataset(
    scenario: &Arc<Scenario>,
    factory: &PolicyFactory<'_>,
    n_episodes: usize,
    base_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let workers = worker_count().min(n_episodes).max(1);
    let mut slots: Vec<Option<Result<TrajectoryRecord>>> = (0..n_episodes).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let mut policy = factory();
                    (w..n_episodes)
                        .step_by(workers)
                        .map(|i| (i, run_episode(scenario, policy.as_mut(), episode_seed(base_seed, i))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("collection worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| Err(Error::Contract("episode was not run".into()))))
        .collect()
}
