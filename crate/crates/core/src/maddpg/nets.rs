use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{columns, Batch};
use super::{AugmentMode, TrainConfig};
use crate::filter::sidecar;
use crate::geom::Vec2;
use crate::ndgrad::{checkpoint, Activation, Adam, AdamConfig, DenseArray, Graph, Mlp, ParamSet, Var};
use crate::{Error, Result};

/// `y = r + γ (1 − done) Q′`
pub fn td_target(r: f64, gamma: f64, q_next: f64, done: bool) -> f64 {
    if done {
        r
    } else {
        r + gamma * q_next
    }
}

/// `target ← τ · online + (1 − τ) · target`
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<()> {
    Ok(target.soft_update_from(online, tau)?)
}

/// Shape of a policy set, stored next to its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub mode: AugmentMode,
    /// Filter kind used to build observations in filter mode.
    pub filter: Option<String>,
    pub obs_dim: usize,
    pub max_speeds: Vec<f64>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

/// Actors and centralized critics of every agent with their target copies.
/// All agents share one layout, so a single pair of [`Mlp`] maps serves
/// every parameter set.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub meta: PolicyMeta,
    actor_net: Mlp,
    critic_net: Mlp,
    pub actors: Vec<ParamSet>,
    pub critics: Vec<ParamSet>,
    pub target_actors: Vec<ParamSet>,
    pub target_critics: Vec<ParamSet>,
}

impl PolicySet {
    pub fn new(meta: PolicyMeta, seed: u64) -> Result<Self> {
        let n = meta.max_speeds.len();
        if n == 0 || meta.obs_dim == 0 {
            return Err(Error::Config("policy set needs agents and a non-empty observation".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor_sizes = widths(meta.obs_dim, &meta.actor_hidden, 2);
        let critic_sizes = widths(n * (meta.obs_dim + 2), &meta.critic_hidden, 1);
        let mut actors = Vec::new();
        let mut critics = Vec::new();
        let mut actor_net = None;
        let mut critic_net = None;
        for _ in 0..n {
            let mut a = ParamSet::new();
            actor_net = Some(Mlp::new(&mut a, "actor", &actor_sizes, Activation::Relu, Some(Activation::Tanh), &mut rng));
            let mut c = ParamSet::new();
            critic_net = Some(Mlp::new(&mut c, "critic", &critic_sizes, Activation::Relu, None, &mut rng));
            actors.push(a);
            critics.push(c);
        }
        Ok(Self {
            meta,
            actor_net: actor_net.expect("n > 0"),
            critic_net: critic_net.expect("n > 0"),
            target_actors: actors.clone(),
            target_critics: critics.clone(),
            actors,
            critics,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.actors.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.meta.obs_dim
    }

    fn check_obs(&self, o: &[f64]) -> Result<()> {
        if o.len() != self.meta.obs_dim {
            return Err(Error::Contract(format!(
                "actor expects {} observation values, got {}",
                self.meta.obs_dim,
                o.len()
            )));
        }
        Ok(())
    }

    /// Normalized actor output `tanh(π_i(o))` for a B×obs_dim batch.
    pub fn actor_graph(&self, g: &mut Graph, actor: &ParamSet, obs: Var) -> Result<Var> {
        Ok(self.actor_net.forward(g, actor, obs)?)
    }

    /// `Q(O, a)` for B×joint observations and B×2N normalized actions.
    pub fn critic_graph(&self, g: &mut Graph, critic: &ParamSet, obs: Var, actions: Var) -> Result<Var> {
        let x = g.concat(&[obs, actions])?;
        Ok(self.critic_net.forward(g, critic, x)?)
    }

    fn actor_values(&self, actor: &ParamSet, obs: DenseArray) -> Result<DenseArray> {
        let mut g = Graph::new();
        let x = g.input(obs);
        let out = self.actor_graph(&mut g, actor, x)?;
        Ok(g.value(out).clone())
    }

    /// Velocity of agent `i`: `tanh(π_i(o)) · v_max` plus Gaussian noise with
    /// standard deviation `noise_scale · v_max` per axis, clipped to `v_max`.
    pub fn act(&self, i: usize, o: &[f64], noise_scale: f64, rng: &mut impl Rng) -> Result<Vec2> {
        self.check_obs(o)?;
        let v_max = self.meta.max_speeds[i];
        let out = self.actor_values(&self.actors[i], DenseArray::row(o.to_vec()))?;
        let mut a = Vec2::new(out.data()[0], out.data()[1]) * v_max;
        if noise_scale > 0.0 {
            let normal = Normal::new(0.0, noise_scale * v_max).map_err(|e| Error::Config(e.to_string()))?;
            a += Vec2::new(normal.sample(rng), normal.sample(rng));
        }
        Ok(a.clip_norm(v_max))
    }

    /// Target-actor actions of every agent on the next observations.
    pub fn target_actions(&self, next_obs: &DenseArray) -> Result<DenseArray> {
        let d = self.meta.obs_dim;
        let rows = next_obs.rows();
        let n = self.n_agents();
        let mut data = vec![0.0; rows * 2 * n];
        for j in 0..n {
            let a = self.actor_values(&self.target_actors[j], columns(next_obs, j * d, (j + 1) * d))?;
            for r in 0..rows {
                data[r * 2 * n + 2 * j..r * 2 * n + 2 * j + 2].copy_from_slice(a.row_slice(r));
            }
        }
        Ok(DenseArray::matrix(rows, 2 * n, data)?)
    }

    /// TD targets of agent `i` from the target networks.
    pub fn td_targets(&self, i: usize, batch: &Batch, next_actions: &DenseArray, gamma: f64) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let o = g.input(batch.next_obs.clone());
        let a = g.input(next_actions.clone());
        let q = self.critic_graph(&mut g, &self.target_critics[i], o, a)?;
        Ok(g.value(q)
            .data()
            .iter()
            .zip(&batch.rewards[i])
            .zip(&batch.done)
            .map(|((&q, &r), &done)| td_target(r, gamma, q, done))
            .collect())
    }

    /// Mean squared TD error of `critic` against fixed targets `y`.
    pub fn critic_loss(&self, g: &mut Graph, critic: &ParamSet, batch: &Batch, y: &[f64]) -> Result<Var> {
        let o = g.input(batch.obs.clone());
        let a = g.input(batch.actions.clone());
        let q = self.critic_graph(g, critic, o, a)?;
        let y = g.input(DenseArray::matrix(y.len(), 1, y.to_vec())?);
        let diff = g.sub(q, y)?;
        let sq = g.mul(diff, diff)?;
        Ok(g.mean(sq))
    }

    /// `−mean Q_i(O, a_1 … π_i(o_i) … a_N)`, with the other agents' actions
    /// taken from the batch. The critic is read frozen.
    pub fn actor_loss(&self, g: &mut Graph, i: usize, actor: &ParamSet, critic: &ParamSet, batch: &Batch) -> Result<Var> {
        g.freeze(critic);
        let d = self.meta.obs_dim;
        let n = self.n_agents();
        let own = g.input(columns(&batch.obs, i * d, (i + 1) * d));
        let pi = self.actor_graph(g, actor, own)?;
        let mut parts = Vec::new();
        if i > 0 {
            parts.push(g.input(columns(&batch.actions, 0, 2 * i)));
        }
        parts.push(pi);
        if i + 1 < n {
            parts.push(g.input(columns(&batch.actions, 2 * i + 2, 2 * n)));
        }
        let actions = g.concat(&parts)?;
        let o = g.input(batch.obs.clone());
        let q = self.critic_graph(g, critic, o, actions)?;
        let m = g.mean(q);
        Ok(g.scale(m, -1.0))
    }

    /// Mean `Q_i` under the current actor `i` on `batch`.
    pub fn mean_q(&self, i: usize, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.actor_loss(&mut g, i, &self.actors[i], &self.critics[i], batch)?;
        Ok(-g.value(l).data()[0])
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        for i in 0..self.n_agents() {
            soft_update(&mut self.target_actors[i], &self.actors[i], tau)?;
            soft_update(&mut self.target_critics[i], &self.critics[i], tau)?;
        }
        Ok(())
    }

    /// Writes every network into one blob plus a JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut all = ParamSet::new();
        for i in 0..self.n_agents() {
            all.extend_prefixed(&format!("agent{i}.actor."), &self.actors[i]);
            all.extend_prefixed(&format!("agent{i}.critic."), &self.critics[i]);
            all.extend_prefixed(&format!("agent{i}.target_actor."), &self.target_actors[i]);
            all.extend_prefixed(&format!("agent{i}.target_critic."), &self.target_critics[i]);
        }
        checkpoint::save(&all, path)?;
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: PolicyMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
        let all = checkpoint::load(path)?;
        let mut set = Self::new(meta, 0)?;
        for i in 0..set.n_agents() {
            let parts = [
                ("actor", &mut set.actors[i]),
                ("critic", &mut set.critics[i]),
                ("target_actor", &mut set.target_actors[i]),
                ("target_critic", &mut set.target_critics[i]),
            ];
            for (name, dst) in parts {
                dst.copy_values_from(&all.extract_prefixed(&format!("agent{i}.{name}.")))?;
            }
        }
        Ok(set)
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// A policy set with its optimizers.
#[derive(Debug, Clone)]
pub struct Maddpg {
    pub policies: PolicySet,
    pub config: TrainConfig,
    actor_opt: Vec<Adam>,
    critic_opt: Vec<Adam>,
}

impl Maddpg {
    pub fn new(policies: PolicySet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = policies.n_agents();
        Ok(Self {
            actor_opt: (0..n).map(|_| Adam::new(AdamConfig::with_lr(config.lr_actor))).collect(),
            critic_opt: (0..n).map(|_| Adam::new(AdamConfig::with_lr(config.lr_critic))).collect(),
            policies,
            config,
        })
    }

    /// One Adam step on critic `i`; returns the loss before the step.
    pub fn critic_update(&mut self, i: usize, batch: &Batch, next_actions: &DenseArray) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("critic update on an empty batch".into()));
        }
        let y = self.policies.td_targets(i, batch, next_actions, self.config.gamma)?;
        let p = &mut self.policies;
        let mut g = Graph::new();
        let loss = p.critic_loss(&mut g, &p.critics[i], batch, &y)?;
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss)?;
        p.critics[i].zero_grad();
        grads.accumulate_into(&mut p.critics[i]);
        self.critic_opt[i].step(&mut p.critics[i])?;
        Ok(value)
    }

    /// One Adam step on actor `i` through the frozen critic `i`; returns the
    /// gradient norm. Critic parameters are only read.
    pub fn actor_update(&mut self, i: usize, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("actor update on an empty batch".into()));
        }
        let p = &mut self.policies;
        let mut g = Graph::new();
        let loss = p.actor_loss(&mut g, i, &p.actors[i], &p.critics[i], batch)?;
        let grads = g.backward(loss)?;
        p.actors[i].zero_grad();
        grads.accumulate_into(&mut p.actors[i]);
        let norm = p.actors[i]
            .params()
            .iter()
            .flat_map(|q| q.grad.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        self.actor_opt[i].step(&mut p.actors[i])?;
        Ok(norm)
    }

    /// Critic then actor update for every agent on one batch, followed by
    /// the soft target update. Returns the mean critic loss.
    pub fn update(&mut self, batch: &Batch) -> Result<f64> {
        let next_actions = self.policies.target_actions(&batch.next_obs)?;
        let n = self.policies.n_agents();
        let mut loss = 0.0;
        for i in 0..n {
            loss += self.critic_update(i, batch, &next_actions)?;
            self.actor_update(i, batch)?;
        }
        self.policies.soft_update_targets(self.config.tau)?;
        Ok(loss / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maddpg::Transition;
    use crate::ndgrad::{grad_check_with, Coverage};

    fn meta(obs_dim: usize, n: usize) -> PolicyMeta {
        PolicyMeta {
            mode: AugmentMode::Base,
            filter: None,
            obs_dim,
            max_speeds: vec![0.02; n],
            actor_hidden: vec![8, 8],
            critic_hidden: vec![12, 6],
        }
    }

    fn batch(obs_dim: usize, n: usize, rows: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<Transition> = (0..rows)
            .map(|b| Transition {
                obs: (0..obs_dim * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                actions: (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                next_obs: (0..obs_dim * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: b % 3 == 0,
            })
            .collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn td_target_cases() {
        assert!((td_target(1.0, 0.9, 2.0, false) - 2.8).abs() < 1e-15);
        assert_eq!(td_target(1.0, 0.9, 2.0, true), 1.0);
        assert_eq!(td_target(1.0, 0.9, f64::NAN, true), 1.0);
        assert_eq!(td_target(1.0, 0.0, 5.0, false), 1.0);
    }

    #[test]
    fn soft_update_cases() {
        let p = PolicySet::new(meta(3, 2), 1).unwrap();
        let q = PolicySet::new(meta(3, 2), 2).unwrap();
        let mut t = q.actors[0].clone();
        soft_update(&mut t, &p.actors[0], 1.0).unwrap();
        assert_eq!(t, p.actors[0]);
        let mut t = q.actors[0].clone();
        soft_update(&mut t, &p.actors[0], 0.0).unwrap();
        assert_eq!(t, q.actors[0]);
        let mut t = p.actors[0].clone();
        soft_update(&mut t, &p.actors[0], 0.3).unwrap();
        assert_eq!(t, p.actors[0]);
    }

    #[test]
    fn act_is_bounded_and_deterministic_without_noise() {
        let p = PolicySet::new(meta(4, 2), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = [0.3, -0.2, 0.9, 0.1];
        let a = p.act(1, &o, 0.0, &mut rng).unwrap();
        assert_eq!(a, p.act(1, &o, 0.0, &mut rng).unwrap());
        for _ in 0..200 {
            assert!(p.act(0, &o, 2.0, &mut rng).unwrap().norm() <= 0.02 + 1e-15);
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(p.act(0, &o, 0.3, &mut r1).unwrap(), p.act(0, &o, 0.3, &mut r2).unwrap());
        assert!(p.act(0, &o[..3], 0.0, &mut rng).is_err());
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let p = PolicySet::new(meta(3, 2), 4).unwrap();
        let b = batch(3, 2, 6, 1);
        let y: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let mut c = p.critics[1].clone();
        let err = grad_check_with(&mut c, 1e-6, Coverage::All, |g, set| {
            p.critic_loss(g, set, &b, &y).map_err(|e| match e {
                Error::Nd(e) => e,
                e => panic!("{e}"),
            })
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn actor_gradient_through_critic_matches_finite_differences() {
        let p = PolicySet::new(meta(3, 3), 5).unwrap();
        let b = batch(3, 3, 5, 2);
        for i in 0..3 {
            let mut a = p.actors[i].clone();
            let err = grad_check_with(&mut a, 1e-6, Coverage::All, |g, set| {
                p.actor_loss(g, i, set, &p.critics[i], &b).map_err(|e| match e {
                    Error::Nd(e) => e,
                    e => panic!("{e}"),
                })
            })
            .unwrap();
            assert!(err < 1e-4, "agent {i}: {err}");
        }
    }

    #[test]
    fn critic_fixed_point_has_zero_loss() {
        let p = PolicySet::new(meta(3, 2), 6).unwrap();
        let b = batch(3, 2, 4, 3);
        let mut g = Graph::new();
        let o = g.constant(b.obs.clone());
        let a = g.constant(b.actions.clone());
        let q = p.critic_graph(&mut g, &p.critics[0], o, a).unwrap();
        let y = g.value(q).data().to_vec();
        let mut m = Maddpg::new(p, TrainConfig::default()).unwrap();
        let mut g = Graph::new();
        let loss = m.policies.critic_loss(&mut g, &m.policies.critics[0], &b, &y).unwrap();
        assert_eq!(g.value(loss).data()[0], 0.0);
        let grads = g.backward(loss).unwrap();
        let mut c = m.policies.critics[0].clone();
        c.zero_grad();
        // Bound to a different set, so nothing is accumulated.
        assert_eq!(grads.accumulate_into(&mut c), 0);
        let c = &mut m.policies.critics[0];
        c.zero_grad();
        assert!(grads.accumulate_into(c) > 0);
        assert!(c.params().iter().all(|p| p.grad.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn actor_update_leaves_critic_untouched_and_raises_q() {
        let p = PolicySet::new(meta(3, 2), 7).unwrap();
        let b = batch(3, 2, 32, 4);
        let cfg = TrainConfig {
            lr_actor: 1e-4,
            ..TrainConfig::default()
        };
        let mut m = Maddpg::new(p, cfg).unwrap();
        let critics_before = m.policies.critics.clone();
        let q0 = m.policies.mean_q(0, &b).unwrap();
        let norm = m.actor_update(0, &b).unwrap();
        assert!(norm > 0.0);
        for (a, b) in critics_before.iter().zip(&m.policies.critics) {
            for (x, y) in a.params().iter().zip(b.params()) {
                let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(x.value.data()), bits(y.value.data()));
            }
        }
        assert!(m.policies.mean_q(0, &b).unwrap() >= q0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ndg");
        let p = PolicySet::new(meta(5, 3), 8).unwrap();
        p.save(&path).unwrap();
        let q = PolicySet::load(&path).unwrap();
        assert_eq!(q.meta, p.meta);
        assert_eq!(q.actors, p.actors);
        assert_eq!(q.target_critics, p.target_critics);
    }
}
