//! Training loop, logging, and checkpointing.
//!
//! Per episode: draw a fresh channel realisation (angles persist within the
//! episode), build the environment, roll `t_max` steps with exploration noise
//! on the actor outputs, store joint transitions, and update every agent's
//! critics each step with actors and targets every `policy_delay` steps
//! (every step under MADDPG, which also uses a single critic and no target
//! smoothing). Episodes are a continuing task: no terminal bootstrap masking.
//!
//! Determinism: every stochastic stage draws from a stream derived from
//! (master seed, stage, episode), so a run can be checkpointed and resumed
//! bit-exactly, and evaluation can replay the exact channels of any episode.

use crate::beamforming::CombinerMode;
use crate::channel::draw_channel_set;
use crate::linalg::rng_for;
use crate::madrl::agent::{AgentEnsemble, Algorithm, Batch};
use crate::madrl::env::PowerEnv;
use crate::madrl::replay::{ReplayBuffer, Transition};
use crate::pipeline::PilotSetup;
use crate::scenario::{generate_topology, Scenario, SystemConfig};
use crate::{Error, Result};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Hyperparameters of the learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Episodes N_e.
    pub episodes: usize,
    /// Steps per episode.
    pub t_max: usize,
    /// Mini-batch size D.
    pub batch_size: usize,
    /// Learning rate lambda (shared by actors and critics).
    pub lr: f64,
    /// Discount factor gamma.
    pub gamma: f64,
    /// Actor/target update period d.
    pub policy_delay: usize,
    /// Std of the clipped target-policy smoothing noise.
    pub target_noise_std: f64,
    /// Std of the exploration noise on raw actions.
    pub explore_noise_std: f64,
    /// Soft-update rate epsilon.
    pub soft_update_rate: f64,
    /// Power-constraint shaping coefficient.
    pub penalty_coefficient: f64,
    /// Replay capacity.
    pub replay_capacity: usize,
    /// Hidden width of all networks (two hidden layers).
    pub hidden_units: usize,
    /// Downlink action ceiling; `None` derives it per episode from the
    /// equal-power coefficient.
    pub eta_ceiling: Option<f64>,
    /// Re-draw user positions every this many episodes (dynamic scenario).
    pub dynamic_period: Option<usize>,
    pub combiner_mode: CombinerMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 500,
            t_max: 50,
            batch_size: 1024,
            lr: 5e-4,
            gamma: 0.95,
            policy_delay: 2,
            target_noise_std: 0.2,
            explore_noise_std: 0.5,
            soft_update_rate: 0.01,
            penalty_coefficient: 1.0,
            replay_capacity: 100_000,
            hidden_units: 64,
            eta_ceiling: None,
            dynamic_period: None,
            combiner_mode: CombinerMode::Joint,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must be in (0, 1)".into()));
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return Err(Error::Config("soft update rate must be in (0, 1]".into()));
        }
        if self.policy_delay == 0 {
            return Err(Error::Config("policy delay must be >= 1".into()));
        }
        if self.episodes == 0 || self.t_max == 0 || self.batch_size == 0 {
            return Err(Error::Config("episodes, t_max, batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// One episode's logged outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Mean over steps of the total (all-agent) immediate reward.
    pub mean_total_reward: f64,
    /// Mean over steps of each agent's immediate reward.
    pub per_agent: Vec<f64>,
    pub channel_digest: u64,
}

/// Reward history of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainLog {
    /// Mean total reward over the trailing `window` episodes.
    pub fn tail_mean(&self, window: usize) -> f64 {
        let n = self.episodes.len();
        let take = window.min(n);
        if take == 0 {
            return f64::NAN;
        }
        self.episodes[n - take..]
            .iter()
            .map(|e| e.mean_total_reward)
            .sum::<f64>()
            / take as f64
    }

    pub fn to_csv(&self) -> String {
        let agents = self.episodes.first().map_or(0, |e| e.per_agent.len());
        let mut out = String::from("schema_version,episode,mean_reward");
        for a in 0..agents {
            out.push_str(&format!(",agent_{a}"));
        }
        out.push('\n');
        for e in &self.episodes {
            out.push_str(&format!("1,{},{}", e.episode, e.mean_total_reward));
            for r in &e.per_agent {
                out.push_str(&format!(",{r}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Complete training state; serialisable, so runs resume bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub master_seed: u64,
    /// Episode index the next training step would execute.
    pub next_episode: usize,
    pub ensemble: AgentEnsemble,
    pub replay: ReplayBuffer,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        if ckpt.schema_version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint schema {}",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }
}

// Seed-stream identifiers.
const STREAM_SCENARIO: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_EPISODE_BASE: u64 = 1 << 20;
const STREAM_DYNAMIC_BASE: u64 = 1 << 40;

/// Per-agent observation lengths from the system shape (uplink agents first).
pub fn observation_dims(sys: &SystemConfig) -> Vec<usize> {
    let iui = sys.n_dl_users * sys.n_ul_users;
    let ul = 2 * sys.n_ul_users * sys.n_rap * sys.n_rf + iui;
    let dl = 2 * sys.n_dl_users * sys.n_tap * sys.n_rf + iui;
    let mut dims = vec![ul; sys.n_ul_users];
    dims.extend(std::iter::repeat(dl).take(sys.n_dl_users));
    dims
}

/// The deployment used for episode `e`: static scenarios reuse the drop,
/// dynamic ones re-sample user positions every `dynamic_period` episodes.
pub fn scenario_for_episode(
    sys: &SystemConfig,
    tcfg: &TrainConfig,
    master_seed: u64,
    episode: usize,
) -> Result<Scenario> {
    let base = generate_topology(sys, &mut rng_for(master_seed, STREAM_SCENARIO))?;
    match tcfg.dynamic_period {
        None => Ok(base),
        Some(period) => {
            let epoch = episode / period.max(1);
            if epoch == 0 {
                Ok(base)
            } else {
                // Keep AP positions, re-draw users (and their gains).
                let mut rng = rng_for(master_seed, STREAM_DYNAMIC_BASE + epoch as u64);
                let mut cfg2 = sys.clone();
                cfg2.master_seed = master_seed;
                let fresh = generate_topology(&cfg2, &mut rng)?;
                Ok(Scenario {
                    tap_pos: base.tap_pos,
                    rap_pos: base.rap_pos,
                    ul_pos: fresh.ul_pos,
                    dl_pos: fresh.dl_pos,
                    beta_dl: fresh.beta_dl,
                    beta_ul: fresh.beta_ul,
                    beta_ap: base.beta_ap,
                    beta_iui: fresh.beta_iui,
                })
            }
        }
    }
}

/// Build the environment of one episode; shared by training and evaluation so
/// both see byte-identical channels for a given (seed, episode).
pub fn episode_env(
    sys: &SystemConfig,
    tcfg: &TrainConfig,
    master_seed: u64,
    episode: usize,
) -> Result<(PowerEnv, rand_chacha::ChaCha12Rng)> {
    let scenario = scenario_for_episode(sys, tcfg, master_seed, episode)?;
    let mut rng = rng_for(master_seed, STREAM_EPISODE_BASE + episode as u64);
    let channels = draw_channel_set(&scenario, sys, &mut rng);
    let pilots = PilotSetup::from_system(sys)?;
    let env = PowerEnv::new(
        &scenario,
        sys,
        channels,
        pilots,
        tcfg.combiner_mode,
        tcfg.penalty_coefficient,
        tcfg.eta_ceiling,
        &mut rng,
    )?;
    Ok((env, rng))
}

fn run_training_episode(
    sys: &SystemConfig,
    tcfg: &TrainConfig,
    algorithm: Algorithm,
    master_seed: u64,
    episode: usize,
    ensemble: &mut AgentEnsemble,
    replay: &mut ReplayBuffer,
) -> Result<EpisodeLog> {
    let (env, mut rng) = episode_env(sys, tcfg, master_seed, episode)?;
    let n_agents = env.n_agents();
    let explore = Normal::new(0.0, tcfg.explore_noise_std.max(1e-300)).expect("valid std");

    let mut obs = env.refresh_observations(&mut rng)?;
    let mut agent_sums = vec![0.0; n_agents];
    let mut total_sum = 0.0;

    for t in 1..=tcfg.t_max {
        let mut actions = Vec::with_capacity(n_agents);
        for a in 0..n_agents {
            let det = ensemble.act(a, &obs[a]);
            let noisy = if tcfg.explore_noise_std > 0.0 {
                (det + explore.sample(&mut rng)).clamp(-1.0, 1.0)
            } else {
                det
            };
            actions.push(noisy);
        }
        let (next_obs, rewards) = env
            .step(&actions, &mut rng)
            .map_err(|e| Error::Divergence(format!("episode {episode} step {t}: {e}")))?;
        for (s, r) in agent_sums.iter_mut().zip(&rewards) {
            *s += r;
        }
        total_sum += rewards.iter().sum::<f64>();

        replay.push(Transition {
            obs: obs.concat(),
            next_obs: next_obs.concat(),
            actions: actions.clone(),
            rewards,
        });

        let update_actor = match algorithm {
            Algorithm::Matd3 => t % tcfg.policy_delay == 0,
            Algorithm::Maddpg => true,
        };
        for a in 0..n_agents {
            let idx = replay.sample_indices(tcfg.batch_size, &mut rng);
            let batch = Batch::from_indices(replay, &idx);
            let noise = match algorithm {
                Algorithm::Matd3 => tcfg.target_noise_std,
                Algorithm::Maddpg => 0.0,
            };
            let y = ensemble.target_values(a, &batch, tcfg.gamma, noise, &mut rng);
            ensemble
                .critic_update(a, &batch, &y, tcfg.lr)
                .map_err(|e| Error::Divergence(format!("episode {episode} step {t}: {e}")))?;
            if update_actor {
                ensemble
                    .actor_update(a, &batch, tcfg.lr)
                    .map_err(|e| Error::Divergence(format!("episode {episode} step {t}: {e}")))?;
            }
        }
        if update_actor {
            ensemble.soft_update(tcfg.soft_update_rate);
        }
        obs = next_obs;
    }

    let steps = tcfg.t_max as f64;
    Ok(EpisodeLog {
        episode,
        mean_total_reward: total_sum / steps,
        per_agent: agent_sums.into_iter().map(|s| s / steps).collect(),
        channel_digest: env.chain.channel_digest,
    })
}

/// Train from scratch. Returns the final state (log included).
pub fn train(
    sys: &SystemConfig,
    tcfg: &TrainConfig,
    algorithm: Algorithm,
    master_seed: u64,
) -> Result<Checkpoint> {
    sys.validate()?;
    tcfg.validate()?;
    let dims = observation_dims(sys);
    let ensemble = AgentEnsemble::new(
        algorithm,
        &dims,
        tcfg.hidden_units,
        &mut rng_for(master_seed, STREAM_INIT),
    );
    let start = Checkpoint {
        schema_version: 1,
        algorithm,
        master_seed,
        next_episode: 0,
        ensemble,
        replay: ReplayBuffer::new(tcfg.replay_capacity),
        log: TrainLog::default(),
    };
    resume(sys, tcfg, start)
}

/// Continue a checkpointed run until `tcfg.episodes` episodes exist in total.
/// Resuming reproduces the uninterrupted run exactly.
pub fn resume(sys: &SystemConfig, tcfg: &TrainConfig, state: Checkpoint) -> Result<Checkpoint> {
    sys.validate()?;
    tcfg.validate()?;
    let Checkpoint {
        algorithm,
        master_seed,
        next_episode,
        mut ensemble,
        mut replay,
        mut log,
        ..
    } = state;
    for episode in next_episode..tcfg.episodes {
        let entry = run_training_episode(
            sys,
            tcfg,
            algorithm,
            master_seed,
            episode,
            &mut ensemble,
            &mut replay,
        )?;
        log.episodes.push(entry);
    }
    Ok(Checkpoint {
        schema_version: 1,
        algorithm,
        master_seed,
        next_episode: tcfg.episodes,
        ensemble,
        replay,
        log,
    })
}
