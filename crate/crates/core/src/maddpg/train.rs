use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment_observation, AugmentMode, Batch, Maddpg, PolicyMeta, PolicySet, ReplayBuffer, TrainConfig, Transition};
use crate::datastore::{collect_dataset, episode_seed, fmt_sig, PolicyFactory, ReportRow, Stat};
use crate::filter::{build_filter_input, FilterModel};
use crate::geom::Vec2;
use crate::policies::{predict_for, PursuitPolicy};
use crate::world::{EpisodeMetrics, Scenario, World};
use crate::{Error, Result};

/// What the training loop needs from an environment.
pub trait MarlEnv {
    fn max_speeds(&self) -> Vec<f64>;

    /// One observation vector per agent, all of equal length.
    fn observe(&self) -> Result<Vec<Vec<f64>>>;

    /// Applies one velocity per agent; returns the per-agent rewards and
    /// whether anyone detected the target.
    fn step(&mut self, velocities: &[Vec2]) -> Result<(Vec<f64>, bool)>;

    fn done(&self) -> bool;
}

/// Observations of every learnable agent of `world`.
pub fn observe_world(world: &World, mode: AugmentMode, filter: Option<&FilterModel>) -> Result<Vec<Vec<f64>>> {
    let pred = match (mode, filter) {
        (AugmentMode::Filter, Some(f)) => Some(predict_for(f, world)?),
        (AugmentMode::Filter, None) => return Err(Error::Contract("filter mode without a filter".into())),
        _ => None,
    };
    let st = world.state();
    let slots = (mode == AugmentMode::Detections)
        .then(|| build_filter_input(&st.detections, st.t, st.evader_start, world.config().t_max));
    let positions = world.learnable_positions();
    positions
        .iter()
        .enumerate()
        .map(|(i, &x_s)| augment_observation(&world.observe_base(i)?, mode, pred.as_ref(), x_s, slots.as_ref()))
        .collect()
}

pub struct WorldEnv<'a> {
    pub world: World,
    pub mode: AugmentMode,
    pub filter: Option<&'a FilterModel>,
}

impl MarlEnv for WorldEnv<'_> {
    fn max_speeds(&self) -> Vec<f64> {
        let sc = self.world.scenario();
        (0..sc.learnable().len()).map(|i| sc.max_speed(i)).collect()
    }

    fn observe(&self) -> Result<Vec<Vec<f64>>> {
        observe_world(&self.world, self.mode, self.filter)
    }

    fn step(&mut self, velocities: &[Vec2]) -> Result<(Vec<f64>, bool)> {
        let res = self.world.step(velocities)?;
        let detected = !res.detections.is_empty();
        Ok((res.rewards, detected))
    }

    fn done(&self) -> bool {
        self.world.state().done()
    }
}

/// Training summary of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    /// Sum over steps of the mean agent reward.
    pub total_reward: f64,
    pub mean_reward: f64,
    pub detection_rate: f64,
}

pub fn curve_csv(curve: &[EpisodeLog]) -> String {
    let mut s = String::from("episode,steps,total_reward,mean_reward,detection_rate\n");
    for e in curve {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            e.episode,
            e.steps,
            fmt_sig(e.total_reward, 6),
            fmt_sig(e.mean_reward, 6),
            fmt_sig(e.detection_rate, 6)
        ));
    }
    s
}

/// Rolls `maddpg.config.episodes` episodes from `make_env(episode)`, storing
/// transitions and running one update round every `update_interval` steps
/// once the buffer holds a full batch.
pub fn train_loop<E: MarlEnv>(maddpg: &mut Maddpg, mut make_env: impl FnMut(usize) -> Result<E>) -> Result<Vec<EpisodeLog>> {
    let cfg = maddpg.config.clone();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0015_E5EE);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed ^ 0xB0FF_E125);
    let n = maddpg.policies.n_agents();
    let mut total_steps = 0usize;
    let mut curve = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let mut env = make_env(ep)?;
        let speeds = env.max_speeds();
        if speeds.len() != n {
            return Err(Error::Contract(format!("environment has {} agents, policies {n}", speeds.len())));
        }
        let noise = cfg.noise_at(ep);
        let mut obs = env.observe()?;
        let (mut steps, mut total, mut detected) = (0usize, 0.0, 0usize);
        while !env.done() {
            let vel = (0..n)
                .map(|i| maddpg.policies.act(i, &obs[i], noise, &mut noise_rng))
                .collect::<Result<Vec<_>>>()?;
            let (rewards, hit) = env.step(&vel)?;
            if rewards.iter().any(|r| !r.is_finite()) {
                return Err(Error::Contract(format!("non-finite reward at episode {ep}")));
            }
            let next = env.observe()?;
            buffer.push(Transition {
                obs: obs.concat(),
                actions: vel.iter().zip(&speeds).flat_map(|(v, &s)| [v.x / s, v.y / s]).collect(),
                rewards: rewards.clone(),
                next_obs: next.concat(),
                done: env.done(),
            });
            steps += 1;
            total_steps += 1;
            total += rewards.iter().sum::<f64>() / n as f64;
            detected += usize::from(hit);
            if total_steps.is_multiple_of(cfg.update_interval) && buffer.len() >= cfg.batch_size {
                let batch = Batch::from_transitions(&buffer.sample(cfg.batch_size)?)?;
                maddpg.update(&batch)?;
            }
            obs = next;
        }
        let log = EpisodeLog {
            episode: ep,
            steps,
            total_reward: total,
            mean_reward: total / steps.max(1) as f64,
            detection_rate: detected as f64 / steps.max(1) as f64,
        };
        log::debug!("episode {ep}: reward {:.3} detection {:.3}", log.total_reward, log.detection_rate);
        curve.push(log);
    }
    Ok(curve)
}

pub struct MarlRun {
    pub policies: PolicySet,
    pub curve: Vec<EpisodeLog>,
    /// Checksum of the filter parameters, identical before and after.
    pub filter_checksum: Option<String>,
}

/// Trains a fresh policy set on `scenario`. The filter is only read; its
/// checksum is compared before and after training.
pub fn train_marl(
    scenario: &Arc<Scenario>,
    filter: Option<&FilterModel>,
    mode: AugmentMode,
    config: &TrainConfig,
) -> Result<MarlRun> {
    config.validate()?;
    if mode == AugmentMode::Filter && filter.is_none() {
        return Err(Error::Config("filter augmentation needs a filter checkpoint".into()));
    }
    let filter = if mode == AugmentMode::Filter { filter } else { None };
    let components = filter.map_or(0, |f| f.arch().components);
    let n = scenario.learnable().len();
    let meta = PolicyMeta {
        mode,
        filter: filter.map(|f| f.kind().name().to_string()),
        obs_dim: scenario.base_obs_dim() + mode.extra_dim(components),
        max_speeds: (0..n).map(|i| scenario.max_speed(i)).collect(),
        actor_hidden: config.actor_hidden.clone(),
        critic_hidden: config.critic_hidden.clone(),
    };
    let before = filter.map(|f| f.params().checksum());
    let mut maddpg = Maddpg::new(PolicySet::new(meta, config.seed)?, config.clone())?;
    let curve = train_loop(&mut maddpg, |ep| {
        Ok(WorldEnv {
            world: World::new(Arc::clone(scenario), episode_seed(config.seed, ep))?,
            mode,
            filter,
        })
    })?;
    let after = filter.map(|f| f.params().checksum());
    if before != after {
        return Err(Error::Contract("filter parameters changed during MARL training".into()));
    }
    Ok(MarlRun {
        policies: maddpg.policies,
        curve,
        filter_checksum: after,
    })
}

/// Noise-free execution of a trained policy set.
#[derive(Clone)]
pub struct MarlPolicy {
    pub policies: Arc<PolicySet>,
    pub filter: Option<Arc<FilterModel>>,
}

impl MarlPolicy {
    pub fn new(policies: Arc<PolicySet>, filter: Option<Arc<FilterModel>>) -> Result<Self> {
        if policies.meta.mode == AugmentMode::Filter && filter.is_none() {
            return Err(Error::Config("policy was trained with a filter; supply one".into()));
        }
        Ok(Self { policies, filter })
    }
}

impl PursuitPolicy for MarlPolicy {
    fn name(&self) -> String {
        match (&self.policies.meta.mode, &self.policies.meta.filter) {
            (AugmentMode::Filter, Some(kind)) => format!("{kind}_maddpg"),
            (mode, _) => format!("{}_maddpg", mode.name()),
        }
    }

    fn reset(&mut self, _world: &World, _seed: u64) {}

    fn act(&mut self, world: &World) -> Result<Vec<Vec2>> {
        let obs = observe_world(world, self.policies.meta.mode, self.filter.as_deref())?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        obs.iter()
            .enumerate()
            .map(|(i, o)| self.policies.act(i, o, 0.0, &mut unused))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeMetrics>,
    pub detection_rate: Stat,
    pub closest_distance: Stat,
    pub reward: Stat,
    pub total_reward: Stat,
}

impl EvalSummary {
    pub fn from_episodes(episodes: Vec<EpisodeMetrics>) -> Self {
        let stat = |f: fn(&EpisodeMetrics) -> f64| Stat::of(&episodes.iter().map(f).collect::<Vec<_>>());
        Self {
            detection_rate: stat(|m| m.detection_rate),
            closest_distance: stat(|m| m.closest_distance),
            reward: stat(|m| m.mean_reward),
            total_reward: stat(|m| m.total_reward),
            episodes,
        }
    }

    pub fn report_row(&self, name: impl Into<String>) -> ReportRow {
        ReportRow {
            detection_rate: Some(self.detection_rate),
            closest_distance: Some(self.closest_distance),
            reward: Some(self.reward),
            total_reward: Some(self.total_reward),
            ..ReportRow::named(name)
        }
    }
}

/// Runs `n_episodes` with policies from `factory` and aggregates the
/// episode metrics. Works for scripted and trained policies alike.
pub fn evaluate_policies(
    scenario: &Arc<Scenario>,
    factory: &PolicyFactory<'_>,
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalSummary> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let records = collect_dataset(scenario, factory, n_episodes, base_seed)?;
    let metrics = records.iter().map(|r| r.metrics()).collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_episodes(metrics))
}
