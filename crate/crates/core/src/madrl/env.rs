//! Power-allocation environment over one channel realisation.
//!
//! Agents are ordered uplink-first: agent `a < J` is UL user `a`, agent
//! `a >= J` is DL user `a - J`. Each agent's observation concatenates the
//! real/imaginary parts of the relevant estimated equivalent channels, every
//! entry scaled by `1 / sqrt(beta)` of its link, followed by `log10 |t_kj|^2`
//! for every (k, j) pair. Actions in (-1, 1) map affinely onto `[0, P_U]`
//! (uplink) or `[0, eta_max]` (downlink). Rewards are the weighted
//! closed-form rate bounds, with the downlink agents additionally earning
//! `penalty * clip(min_m(P_D - P_Dm), -1, 1)` for the power constraint.

use crate::beamforming::{tap_power, CombinerMode, PowerAllocation};
use crate::channel::ChannelSet;
use crate::linalg::C64;
use crate::pipeline::{PilotSetup, ProcessingChain, UserEstimates};
use crate::rates::{downlink_rate_lb, uplink_rate_lb};
use crate::scenario::{Scenario, SystemConfig};
use crate::Result;
use rand::Rng;

/// Fixed per-episode environment; stepping only redraws observation noise.
pub struct PowerEnv {
    pub chain: ProcessingChain,
    channels: ChannelSet,
    pilots: PilotSetup,
    beta_dl: Vec<Vec<f64>>,
    beta_ul: Vec<Vec<f64>>,
    pub eta_max: f64,
    pub p_u_max: f64,
    pub p_d: f64,
    pub omega_d: f64,
    pub omega_u: f64,
    pub penalty: f64,
}

/// Headroom factor of the automatic downlink action ceiling: the equal-power
/// coefficient of the episode sits at mid-range (raw action 0).
pub const ETA_CEILING_HEADROOM: f64 = 2.0;

impl PowerEnv {
    /// Build the environment for one realisation. `eta_ceiling = None`
    /// derives the downlink action ceiling from the episode's equal-power
    /// coefficient times [`ETA_CEILING_HEADROOM`].
    pub fn new<R: Rng>(
        scenario: &Scenario,
        cfg: &SystemConfig,
        channels: ChannelSet,
        pilots: PilotSetup,
        combiner_mode: CombinerMode,
        penalty: f64,
        eta_ceiling: Option<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        let chain = ProcessingChain::build(scenario, cfg, &channels, &pilots, combiner_mode, rng)?;
        let eta_max = match eta_ceiling {
            Some(v) => v,
            None => {
                let eta_eq = crate::beamforming::equal_downlink_eta(
                    cfg.p_d_w(),
                    &chain.w_rf,
                    &chain.precoder.per_tap,
                )?;
                ETA_CEILING_HEADROOM * eta_eq
            }
        };
        Ok(PowerEnv {
            chain,
            channels,
            pilots,
            beta_dl: scenario.beta_dl.clone(),
            beta_ul: scenario.beta_ul.clone(),
            eta_max,
            p_u_max: cfg.p_u_w(),
            p_d: cfg.p_d_w(),
            omega_d: cfg.omega_d,
            omega_u: cfg.omega_u,
            penalty,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.chain.n_ul + self.chain.n_dl
    }

    /// Observation lengths per agent, uplink agents first.
    pub fn observation_dims(&self) -> Vec<usize> {
        let c = &self.chain;
        let iui = c.n_dl * c.n_ul;
        let ul = 2 * c.n_ul * c.n_rap * c.n_rf + iui;
        let dl = 2 * c.n_dl * c.n_tap * c.n_rf + iui;
        let mut dims = vec![ul; c.n_ul];
        dims.extend(std::iter::repeat(dl).take(c.n_dl));
        dims
    }

    /// Map one agent's raw action in (-1, 1) to its power variable.
    pub fn action_to_power(&self, agent: usize, raw: f64) -> f64 {
        let half = (raw.clamp(-1.0, 1.0) + 1.0) / 2.0;
        if agent < self.chain.n_ul {
            self.p_u_max * half
        } else {
            self.eta_max * half
        }
    }

    /// Full allocation from the joint raw action vector.
    pub fn allocation(&self, actions: &[f64]) -> PowerAllocation {
        let j = self.chain.n_ul;
        let p_ul = (0..j).map(|a| self.action_to_power(a, actions[a])).collect();
        let eta = (j..self.n_agents())
            .map(|a| self.action_to_power(a, actions[a]))
            .collect();
        PowerAllocation { eta, p_ul }
    }

    /// Per-agent observations for a given set of user-link estimates.
    pub fn observations(&self, estimates: &UserEstimates) -> Vec<Vec<f64>> {
        let c = &self.chain;
        let mut iui_block = Vec::with_capacity(c.n_dl * c.n_ul);
        for k in 0..c.n_dl {
            for j in 0..c.n_ul {
                let gain = self.chain.t_iui[k][j].norm_sqr().max(1e-300);
                iui_block.push(gain.log10());
            }
        }
        let mut out = Vec::with_capacity(self.n_agents());
        for _ in 0..c.n_ul {
            // Every UL agent sees all estimated UL equivalent channels.
            let mut v = Vec::with_capacity(2 * c.n_ul * c.n_rap * c.n_rf + iui_block.len());
            for (jp, row) in estimates.g_hat_eq.iter().enumerate() {
                for (z, est) in row.iter().enumerate() {
                    let scale = 1.0 / self.beta_ul[jp][z].sqrt();
                    for e in est.iter() {
                        v.push(e.re * scale);
                        v.push(e.im * scale);
                    }
                }
            }
            v.extend_from_slice(&iui_block);
            out.push(v);
        }
        for _ in 0..c.n_dl {
            let mut v = Vec::with_capacity(2 * c.n_dl * c.n_tap * c.n_rf + iui_block.len());
            for (kp, row) in estimates.h_hat_eq.iter().enumerate() {
                for (m, est) in row.iter().enumerate() {
                    let scale = 1.0 / self.beta_dl[kp][m].sqrt();
                    for e in est.iter() {
                        v.push(e.re * scale);
                        v.push(e.im * scale);
                    }
                }
            }
            v.extend_from_slice(&iui_block);
            out.push(v);
        }
        out
    }

    /// Fresh observations from a new pilot-noise realisation on the same
    /// channels.
    pub fn refresh_observations<R: Rng>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let estimates = self
            .chain
            .refresh_user_estimates(&self.channels, &self.pilots, rng)?;
        Ok(self.observations(&estimates))
    }

    /// Worst-case downlink power margin `min_m (P_D - P_Dm)` in watts.
    pub fn downlink_power_margin(&self, eta: &[f64]) -> f64 {
        (0..self.chain.n_tap)
            .map(|m| self.p_d - tap_power(&self.chain.w_rf[m], &self.chain.precoder.per_tap[m], eta))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-agent rewards for a joint raw action vector.
    pub fn rewards(&self, actions: &[f64]) -> Result<Vec<f64>> {
        let alloc = self.allocation(actions);
        let dl = downlink_rate_lb(&self.chain, &alloc.eta, &alloc.p_ul)?;
        let ul = uplink_rate_lb(&self.chain, &alloc.eta, &alloc.p_ul)?;
        let margin = self.downlink_power_margin(&alloc.eta).clamp(-1.0, 1.0);
        let mut rewards = Vec::with_capacity(self.n_agents());
        for t in &ul {
            rewards.push(self.omega_u * t.rate);
        }
        for t in &dl {
            rewards.push(self.omega_d * t.rate + self.penalty * margin);
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(crate::Error::Divergence(
                "non-finite reward from rate evaluation".into(),
            ));
        }
        Ok(rewards)
    }

    /// Environment step: rewards for the joint action plus next observations
    /// built from a fresh pilot-noise realisation on the same channels.
    pub fn step<R: Rng>(&self, actions: &[f64], rng: &mut R) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let rewards = self.rewards(actions)?;
        let next_obs = self.refresh_observations(rng)?;
        Ok((next_obs, rewards))
    }

    /// Total immediate reward (all agents).
    pub fn total_reward(rewards: &[f64]) -> f64 {
        rewards.iter().sum()
    }

    /// Test hook: overwrite the IUI coefficients.
    pub fn set_iui(&mut self, t: Vec<Vec<C64>>) {
        self.chain.t_iui = t;
    }
}
