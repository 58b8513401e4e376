//! Conventional power-allocation schemes and the shared evaluation runner.
//!
//! All baselines use equal downlink power (`eta = P_D / max_m Tr(W F F^H
//! W^H)`, the episode's per-AP-cap-respecting coefficient) and differ on the
//! uplink: random in `[0, P_U]`, equal at `P_U / 2`, or maximum `P_U`.
//! Evaluation replays the exact training-episode channels for any scheme, so
//! learned policies and baselines are compared on identical realisations.

use crate::madrl::agent::AgentEnsemble;
use crate::madrl::env::PowerEnv;
use crate::madrl::train::{episode_env, TrainConfig};
use crate::scenario::SystemConfig;
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Uplink halves of the conventional schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UplinkScheme {
    /// Scheme a: uniform random power in [0, P_U] each step.
    Random,
    /// Scheme b: P_U / 2 every step.
    Equal,
    /// Scheme c: P_U every step.
    Max,
}

impl UplinkScheme {
    pub fn label(self) -> &'static str {
        match self {
            UplinkScheme::Random => "ul_random",
            UplinkScheme::Equal => "ul_equal",
            UplinkScheme::Max => "ul_max",
        }
    }
}

/// Raw joint action vector of a baseline scheme for one step.
///
/// Downlink agents reproduce the episode's equal-power coefficient through
/// the action map; uplink agents follow the scheme.
pub fn baseline_actions<R: Rng>(scheme: UplinkScheme, env: &PowerEnv, rng: &mut R) -> Vec<f64> {
    let j = env.chain.n_ul;
    let n = env.n_agents();
    let mut actions = Vec::with_capacity(n);
    for _ in 0..j {
        actions.push(match scheme {
            UplinkScheme::Random => rng.gen_range(-1.0..=1.0),
            UplinkScheme::Equal => 0.0,
            UplinkScheme::Max => 1.0,
        });
    }
    // Invert the affine action map at the equal-power coefficient.
    let eta_eq = crate::beamforming::equal_downlink_eta(
        env.p_d,
        &env.chain.w_rf,
        &env.chain.precoder.per_tap,
    )
    .unwrap_or(0.0);
    let raw_dl = (2.0 * eta_eq / env.eta_max - 1.0).clamp(-1.0, 1.0);
    actions.extend(std::iter::repeat(raw_dl).take(n - j));
    actions
}

/// The allocation a scheme induces on an environment (one draw).
pub fn baseline_allocation<R: Rng>(
    scheme: UplinkScheme,
    env: &PowerEnv,
    rng: &mut R,
) -> crate::beamforming::PowerAllocation {
    env.allocation(&baseline_actions(scheme, env, rng))
}

/// A policy under evaluation.
pub enum Policy<'a> {
    /// Frozen actors, no exploration noise.
    Trained(&'a AgentEnsemble),
    Baseline(UplinkScheme),
}

/// Per-episode evaluation outcome.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    /// Mean total reward per evaluated episode.
    pub episode_rewards: Vec<f64>,
    /// Mean weighted objective (rates only, no penalty shaping) per episode.
    pub episode_objectives: Vec<f64>,
    /// Channel digest per episode, to verify scheme-to-scheme alignment.
    pub channel_digests: Vec<u64>,
}

impl EvalResult {
    pub fn mean_reward(&self) -> f64 {
        self.episode_rewards.iter().sum::<f64>() / self.episode_rewards.len().max(1) as f64
    }

    pub fn mean_objective(&self) -> f64 {
        self.episode_objectives.iter().sum::<f64>() / self.episode_objectives.len().max(1) as f64
    }
}

/// Evaluate a policy on the exact channels of episodes
/// `[first_episode, first_episode + episodes)` of seed `master_seed`.
pub fn evaluate_policy(
    sys: &SystemConfig,
    tcfg: &TrainConfig,
    master_seed: u64,
    first_episode: usize,
    episodes: usize,
    policy: &Policy,
) -> Result<EvalResult> {
    let mut episode_rewards = Vec::with_capacity(episodes);
    let mut episode_objectives = Vec::with_capacity(episodes);
    let mut channel_digests = Vec::with_capacity(episodes);
    for e in first_episode..first_episode + episodes {
        let (env, mut rng) = episode_env(sys, tcfg, master_seed, e)?;
        let mut obs = env.refresh_observations(&mut rng)?;
        let mut reward_sum = 0.0;
        let mut objective_sum = 0.0;
        for _ in 0..tcfg.t_max {
            let actions = match policy {
                Policy::Trained(ensemble) => (0..env.n_agents())
                    .map(|a| ensemble.act(a, &obs[a]))
                    .collect::<Vec<f64>>(),
                Policy::Baseline(scheme) => baseline_actions(*scheme, &env, &mut rng),
            };
            let alloc = env.allocation(&actions);
            let report = crate::rates::rate_report(&env.chain, &alloc, env.omega_d, env.omega_u)?;
            objective_sum += report.objective;
            let (next_obs, rewards) = env.step(&actions, &mut rng)?;
            reward_sum += rewards.iter().sum::<f64>();
            obs = next_obs;
        }
        episode_rewards.push(reward_sum / tcfg.t_max as f64);
        episode_objectives.push(objective_sum / tcfg.t_max as f64);
        channel_digests.push(env.chain.channel_digest);
    }
    Ok(EvalResult {
        episode_rewards,
        episode_objectives,
        channel_digests,
    })
}
