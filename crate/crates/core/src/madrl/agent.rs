//! Agents and their update rules (MATD3 and MADDPG).
//!
//! Each agent owns an actor with its target and either twin critics with twin
//! targets (MATD3) or a single critic pair (MADDPG). Critics are centralised:
//! their input is the joint observation concatenated with every agent's raw
//! action; actors see only their own observation slice.

use crate::madrl::nn::{AdamState, Mlp, OutputActivation};
use crate::madrl::replay::{ReplayBuffer, Transition};
use crate::{Error, Result};
use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Matd3,
    Maddpg,
}

impl Algorithm {
    pub fn critic_count(self) -> usize {
        match self {
            Algorithm::Matd3 => 2,
            Algorithm::Maddpg => 1,
        }
    }
}

/// One agent's networks and optimiser state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: Vec<Mlp>,
    pub critic_targets: Vec<Mlp>,
    pub actor_adam: AdamState,
    pub critic_adams: Vec<AdamState>,
}

/// All agents plus the observation layout they share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentEnsemble {
    pub algorithm: Algorithm,
    pub agents: Vec<Agent>,
    /// Per-agent local observation lengths.
    pub obs_dims: Vec<usize>,
    /// Offsets of each agent's slice inside the joint observation.
    pub obs_offsets: Vec<usize>,
    pub joint_obs_dim: usize,
}

/// Dense view of a sampled minibatch.
pub struct Batch {
    pub obs: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
}

impl Batch {
    pub fn from_indices(buffer: &ReplayBuffer, indices: &[usize]) -> Self {
        let first: &Transition = buffer.get(indices[0]);
        let (d, n) = (first.obs.len(), first.actions.len());
        let b = indices.len();
        let mut obs = Array2::zeros((b, d));
        let mut next_obs = Array2::zeros((b, d));
        let mut actions = Array2::zeros((b, n));
        let mut rewards = Array2::zeros((b, n));
        for (row, &idx) in indices.iter().enumerate() {
            let t = buffer.get(idx);
            obs.row_mut(row).assign(&ndarray::ArrayView1::from(&t.obs));
            next_obs
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.next_obs));
            actions
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.actions));
            rewards
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.rewards));
        }
        Batch {
            obs,
            next_obs,
            actions,
            rewards,
        }
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }
}

/// Bellman target with clipped double-Q: `y = r + gamma * min(q1, q2)`.
pub fn twin_min_target(reward: f64, gamma: f64, q1: f64, q2: f64) -> f64 {
    reward + gamma * q1.min(q2)
}

impl AgentEnsemble {
    /// Fresh ensemble with `[obs, hidden, hidden, 1]` actors and critics over
    /// the joint observation-action input.
    pub fn new<R: Rng>(
        algorithm: Algorithm,
        obs_dims: &[usize],
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let n_agents = obs_dims.len();
        let joint_obs_dim: usize = obs_dims.iter().sum();
        let critic_in = joint_obs_dim + n_agents;
        let mut offsets = Vec::with_capacity(n_agents);
        let mut acc = 0;
        for &d in obs_dims {
            offsets.push(acc);
            acc += d;
        }
        let agents = obs_dims
            .iter()
            .map(|&d| {
                let actor = Mlp::new(&[d, hidden, hidden, 1], OutputActivation::Tanh, rng);
                let actor_target = actor.clone();
                let critics: Vec<Mlp> = (0..algorithm.critic_count())
                    .map(|_| {
                        Mlp::new(
                            &[critic_in, hidden, hidden, 1],
                            OutputActivation::Linear,
                            rng,
                        )
                    })
                    .collect();
                let critic_targets = critics.clone();
                let actor_adam = AdamState::for_network(&actor);
                let critic_adams = critics.iter().map(AdamState::for_network).collect();
                Agent {
                    actor,
                    actor_target,
                    critics,
                    critic_targets,
                    actor_adam,
                    critic_adams,
                }
            })
            .collect();
        AgentEnsemble {
            algorithm,
            agents,
            obs_dims: obs_dims.to_vec(),
            obs_offsets: offsets,
            joint_obs_dim,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Deterministic action of one agent on its local observation.
    pub fn act(&self, agent: usize, obs: &[f64]) -> f64 {
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("obs shape");
        self.agents[agent].actor.forward(&x)[(0, 0)]
    }

    fn agent_obs<'a>(&self, joint: &'a Array2<f64>, agent: usize) -> Array2<f64> {
        let off = self.obs_offsets[agent];
        joint.slice(s![.., off..off + self.obs_dims[agent]]).to_owned()
    }

    /// Target-actor actions on the batch's next observations, with clipped
    /// Gaussian smoothing noise in MATD3 mode.
    fn target_actions<R: Rng>(
        &self,
        batch: &Batch,
        noise_std: f64,
        rng: &mut R,
    ) -> Array2<f64> {
        let b = batch.len();
        let n = self.n_agents();
        let mut actions = Array2::zeros((b, n));
        let noise = if self.algorithm == Algorithm::Matd3 && noise_std > 0.0 {
            Some(Normal::new(0.0, noise_std).expect("valid std"))
        } else {
            None
        };
        for a in 0..n {
            let obs_a = self.agent_obs(&batch.next_obs, a);
            let mut out = self.agents[a].actor_target.forward(&obs_a);
            if let Some(dist) = &noise {
                for v in out.iter_mut() {
                    let eps = dist.sample(rng).clamp(-1.0, 1.0);
                    *v = (*v + eps).clamp(-1.0, 1.0);
                }
            }
            actions.column_mut(a).assign(&out.index_axis(Axis(1), 0));
        }
        actions
    }

    /// Per-sample Bellman targets for one agent:
    /// `y = r_i + gamma * min_j Q_j'(s', a~)` (single critic under MADDPG).
    pub fn target_values<R: Rng>(
        &self,
        agent: usize,
        batch: &Batch,
        gamma: f64,
        target_noise_std: f64,
        rng: &mut R,
    ) -> Array2<f64> {
        let next_actions = self.target_actions(batch, target_noise_std, rng);
        let x = concat_columns(&batch.next_obs, &next_actions);
        let a = &self.agents[agent];
        let mut q = a.critic_targets[0].forward(&x);
        if self.algorithm == Algorithm::Matd3 {
            let q2 = a.critic_targets[1].forward(&x);
            q.zip_mut_with(&q2, |v, &w| *v = v.min(w));
        }
        let r = batch.rewards.slice(s![.., agent..agent + 1]).to_owned();
        r + q * gamma
    }

    /// One gradient step of every evaluation critic of `agent` toward the
    /// shared target. Returns the per-critic losses.
    pub fn critic_update(
        &mut self,
        agent: usize,
        batch: &Batch,
        targets: &Array2<f64>,
        lr: f64,
    ) -> Result<Vec<f64>> {
        let x = concat_columns(&batch.obs, &batch.actions);
        let b = batch.len() as f64;
        let a = &mut self.agents[agent];
        let mut losses = Vec::with_capacity(a.critics.len());
        for (critic, adam) in a.critics.iter_mut().zip(a.critic_adams.iter_mut()) {
            let (q, cache) = critic.forward_cached(&x);
            let diff = &q - targets;
            let loss = diff.mapv(|d| d * d).mean().unwrap();
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "critic loss became non-finite ({loss})"
                )));
            }
            let grad_out = diff * (2.0 / b);
            let (grads, _) = critic.backward(&cache, &grad_out);
            adam.apply(critic, &grads, lr);
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Deterministic policy-gradient step for one agent: ascend critic 1's
    /// Q-value w.r.t. the agent's own action slot, other agents' actions
    /// taken from the batch.
    pub fn actor_update(&mut self, agent: usize, batch: &Batch, lr: f64) -> Result<f64> {
        let obs_i = self.agent_obs(&batch.obs, agent);
        let b = batch.len() as f64;
        let action_col = self.joint_obs_dim + agent;

        let a = &mut self.agents[agent];
        let (own_actions, actor_cache) = a.actor.forward_cached(&obs_i);
        let mut actions = batch.actions.clone();
        actions
            .column_mut(agent)
            .assign(&own_actions.index_axis(Axis(1), 0));
        let x = concat_columns(&batch.obs, &actions);
        let (q, critic_cache) = a.critics[0].forward_cached(&x);
        let mean_q = q.mean().unwrap();
        if !mean_q.is_finite() {
            return Err(Error::Divergence(format!(
                "actor objective became non-finite ({mean_q})"
            )));
        }
        // Minimise -mean(Q): dL/dq = -1/B.
        let grad_q = Array2::from_elem(q.dim(), -1.0 / b);
        let (_, dx) = a.critics[0].backward(&critic_cache, &grad_q);
        let dq_da = dx.slice(s![.., action_col..action_col + 1]).to_owned();
        let (grads, _) = a.actor.backward(&actor_cache, &dq_da);
        a.actor_adam.apply(&mut a.actor, &grads, lr);
        Ok(mean_q)
    }

    /// Gradient step of one actor along an externally supplied dL/d(action);
    /// the critic-free half of [`AgentEnsemble::actor_update`], split out so
    /// analytic critics can drive it.
    pub fn ascend_actor_along(&mut self, agent: usize, obs_i: &Array2<f64>, dloss_da: &Array2<f64>, lr: f64) {
        let a = &mut self.agents[agent];
        let (_, cache) = a.actor.forward_cached(obs_i);
        let (grads, _) = a.actor.backward(&cache, dloss_da);
        a.actor_adam.apply(&mut a.actor, &grads, lr);
    }

    /// Soft update of every target network: `target <- eps*eval + (1-eps)*target`.
    pub fn soft_update(&mut self, eps: f64) {
        for a in &mut self.agents {
            a.actor_target.blend_from(&a.actor, eps);
            for (t, e) in a.critic_targets.iter_mut().zip(&a.critics) {
                t.blend_from(e, eps);
            }
        }
    }
}

/// `[a | b]` along columns.
pub fn concat_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}
