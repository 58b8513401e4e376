//! One channel realisation run through the full processing chain.
//!
//! Builds, in order: angle-conditioned covariances, analog beamformers from
//! user-averaged covariances, equivalent-channel MMSE estimates from user
//! pilots, inter-AP MMSE estimates with water-filled coupling and Kronecker
//! RF factors, and the digital ZF stages. The result carries every quantity
//! the closed-form rate bounds and the learning environment consume.

use crate::beamforming::{
    analog_from_covariance, zf_combiner, zf_precoder, CombinerMode, DigitalCombiner,
    DigitalPrecoder,
};
use crate::channel::{covariance_set, ChannelSet, CovarianceSet};
use crate::estimation::{
    equivalent_covariance, kron_factorize, mmse_equivalent, mmse_interap, optimal_coupling,
    simulate_interap_pilot, simulate_user_pilot, PilotBlock,
};
use crate::linalg::{digest_cmat, C64, CMat, CVec};
use crate::scenario::{Scenario, SystemConfig};
use crate::Result;
use rand::Rng;

/// Pilot powers and noise of the three training phases.
#[derive(Debug, Clone)]
pub struct PilotSetup {
    /// Downlink-user pilots received at T-APs (tau = K).
    pub dl: PilotBlock,
    /// Uplink-user pilots received at R-APs (tau = J).
    pub ul: PilotBlock,
    /// Inter-AP pilot power.
    pub ap_power: f64,
    /// Inter-AP pilot noise standard deviation.
    pub ap_noise_std: f64,
}

impl PilotSetup {
    /// Defaults tied to the system's power budget: user pilots at the UL
    /// power cap, inter-AP pilots at the DL power cap, pilot noise at the
    /// thermal noise level.
    pub fn from_system(cfg: &SystemConfig) -> Result<Self> {
        let noise_std = cfg.noise_w().sqrt();
        Ok(PilotSetup {
            dl: PilotBlock::orthonormal(cfg.n_dl_users, cfg.n_dl_users, cfg.p_u_w(), noise_std)?,
            ul: PilotBlock::orthonormal(cfg.n_ul_users, cfg.n_ul_users, cfg.p_u_w(), noise_std)?,
            ap_power: cfg.p_d_w(),
            ap_noise_std: noise_std,
        })
    }
}

/// Fresh user-link estimates for one pilot-noise realisation.
#[derive(Debug, Clone)]
pub struct UserEstimates {
    /// `h_hat_eq[k][m]`: downlink equivalent estimates (n_rf).
    pub h_hat_eq: Vec<Vec<CVec>>,
    /// `g_hat_eq[j][z]`: uplink equivalent estimates (n_rf).
    pub g_hat_eq: Vec<Vec<CVec>>,
}

/// Everything the rate expressions need about one realisation.
#[derive(Debug, Clone)]
pub struct ProcessingChain {
    pub n_tap: usize,
    pub n_rap: usize,
    pub n_dl: usize,
    pub n_ul: usize,
    pub n_ant: usize,
    pub n_rf: usize,
    /// Data-stage analog beamformers per T-AP (n_ant x n_rf, unit modulus).
    pub w_rf: Vec<CMat>,
    /// Data-stage analog combiners per R-AP.
    pub u_rf: Vec<CMat>,
    /// Estimated downlink equivalent channels used by the ZF precoder.
    pub h_hat_eq: Vec<Vec<CVec>>,
    /// Estimated uplink equivalent channels used by the ZF combiner.
    pub g_hat_eq: Vec<Vec<CVec>>,
    /// Downlink error covariances `R_tilde[k][m]` (n_rf x n_rf).
    pub r_tilde_dl: Vec<Vec<CMat>>,
    /// Uplink error covariances `R_tilde[j][z]`.
    pub r_tilde_ul: Vec<Vec<CMat>>,
    /// Equivalent-channel prior covariances (for observation scaling).
    pub r_eq_dl: Vec<Vec<CMat>>,
    pub r_eq_ul: Vec<Vec<CMat>>,
    /// Inter-AP estimation error covariances `C[m][z]` (n^2 x n^2).
    pub interap_err_cov: Vec<Vec<CMat>>,
    pub precoder: DigitalPrecoder,
    pub combiner: DigitalCombiner,
    /// Scalar UL-to-DL interference coefficients of this realisation.
    pub t_iui: Vec<Vec<C64>>,
    /// Serving R-AP per UL user (largest large-scale gain); only consulted in
    /// per-R-AP combining mode.
    pub serving_rap: Vec<usize>,
    /// Data-stage noise power (sigma_k^2 = sigma_z^2).
    pub sigma2: f64,
    /// FNV digest of the channel realisation, for run bookkeeping.
    pub channel_digest: u64,
}

fn estimate_user_links<R: Rng>(
    channels: &ChannelSet,
    w_rf: &[CMat],
    u_rf: &[CMat],
    r_eq_dl: &[Vec<CMat>],
    r_eq_ul: &[Vec<CMat>],
    pilots: &PilotSetup,
    rng: &mut R,
) -> Result<(UserEstimates, Vec<Vec<CMat>>, Vec<Vec<CMat>>)> {
    let n_dl = channels.h.len();
    let n_tap = w_rf.len();
    let n_ul = channels.g.len();
    let n_rap = u_rf.len();

    let mut h_hat_eq = vec![Vec::with_capacity(n_tap); n_dl];
    let mut r_tilde_dl = vec![Vec::with_capacity(n_tap); n_dl];
    for m in 0..n_tap {
        let links: Vec<CVec> = (0..n_dl).map(|k| channels.h[k][m].clone()).collect();
        let y = simulate_user_pilot(&links, &w_rf[m], &pilots.dl, rng)?;
        let priors: Vec<CMat> = (0..n_dl).map(|k| r_eq_dl[k][m].clone()).collect();
        for (k, row) in h_hat_eq.iter_mut().enumerate() {
            let est = mmse_equivalent(&y, k, &pilots.dl, &priors)?;
            row.push(est.est);
            r_tilde_dl[k].push(est.r_tilde);
        }
    }

    let mut g_hat_eq = vec![Vec::with_capacity(n_rap); n_ul];
    let mut r_tilde_ul = vec![Vec::with_capacity(n_rap); n_ul];
    for z in 0..n_rap {
        let links: Vec<CVec> = (0..n_ul).map(|j| channels.g[j][z].clone()).collect();
        let y = simulate_user_pilot(&links, &u_rf[z], &pilots.ul, rng)?;
        let priors: Vec<CMat> = (0..n_ul).map(|j| r_eq_ul[j][z].clone()).collect();
        for (j, row) in g_hat_eq.iter_mut().enumerate() {
            let est = mmse_equivalent(&y, j, &pilots.ul, &priors)?;
            row.push(est.est);
            r_tilde_ul[j].push(est.r_tilde);
        }
    }

    Ok((
        UserEstimates { h_hat_eq, g_hat_eq },
        r_tilde_dl,
        r_tilde_ul,
    ))
}

impl ProcessingChain {
    /// Run estimation and beamformer design for one realisation.
    pub fn build<R: Rng>(
        scenario: &Scenario,
        cfg: &SystemConfig,
        channels: &ChannelSet,
        pilots: &PilotSetup,
        combiner_mode: CombinerMode,
        rng: &mut R,
    ) -> Result<Self> {
        let covs: CovarianceSet = covariance_set(&channels.angles, scenario, cfg);
        let (n_tap, n_rap) = (cfg.n_tap, cfg.n_rap);
        let (n_dl, n_ul) = (cfg.n_dl_users, cfg.n_ul_users);

        // Analog stages from user-averaged covariances.
        let w_rf: Vec<CMat> = (0..n_tap)
            .map(|m| {
                let mut bar = CMat::zeros(cfg.n_ant, cfg.n_ant);
                for k in 0..n_dl {
                    bar += &covs.r_h[k][m];
                }
                bar /= C64::new(n_dl as f64, 0.0);
                analog_from_covariance(&bar, cfg.n_rf)
            })
            .collect();
        let u_rf: Vec<CMat> = (0..n_rap)
            .map(|z| {
                let mut bar = CMat::zeros(cfg.n_ant, cfg.n_ant);
                for j in 0..n_ul {
                    bar += &covs.r_g[j][z];
                }
                bar /= C64::new(n_ul as f64, 0.0);
                analog_from_covariance(&bar, cfg.n_rf)
            })
            .collect();

        // Equivalent-channel priors.
        let r_eq_dl: Vec<Vec<CMat>> = (0..n_dl)
            .map(|k| {
                (0..n_tap)
                    .map(|m| equivalent_covariance(&w_rf[m], &covs.r_h[k][m]))
                    .collect()
            })
            .collect();
        let r_eq_ul: Vec<Vec<CMat>> = (0..n_ul)
            .map(|j| {
                (0..n_rap)
                    .map(|z| equivalent_covariance(&u_rf[z], &covs.r_g[j][z]))
                    .collect()
            })
            .collect();

        let (estimates, r_tilde_dl, r_tilde_ul) =
            estimate_user_links(channels, &w_rf, &u_rf, &r_eq_dl, &r_eq_ul, pilots, rng)?;

        // Inter-AP estimation: coupling design, RF factorisation, pilot,
        // MMSE. Quasi-static, so it runs once per realisation.
        let sigma_ap2 = pilots.ap_noise_std * pilots.ap_noise_std;
        let mut interap_err_cov = vec![Vec::with_capacity(n_rap); n_tap];
        for m in 0..n_tap {
            for z in 0..n_rap {
                let r_ap = covs.r_ap_dense(m, z);
                let design = optimal_coupling(&r_ap, pilots.ap_power, sigma_ap2, cfg.n_rf)?;
                let (w_est, u_est) = kron_factorize(&design.coupling, cfg.n_ant, cfg.n_rf)?;
                let y = simulate_interap_pilot(
                    &channels.h_ap[m][z],
                    &w_est,
                    &u_est,
                    pilots.ap_power,
                    pilots.ap_noise_std,
                    rng,
                );
                let coupling_actual = w_est.transpose().kronecker(&u_est.adjoint());
                let est = mmse_interap(&y, &r_ap, &coupling_actual, pilots.ap_power, sigma_ap2)?;
                interap_err_cov[m].push(est.error_cov);
            }
        }

        let precoder = zf_precoder(&estimates.h_hat_eq)?;
        let combiner = zf_combiner(&estimates.g_hat_eq, combiner_mode)?;

        let serving_rap = (0..n_ul)
            .map(|j| {
                (0..n_rap)
                    .max_by(|&a, &b| {
                        scenario.beta_ul[j][a]
                            .partial_cmp(&scenario.beta_ul[j][b])
                            .unwrap()
                    })
                    .unwrap()
            })
            .collect();

        let mut digest = 0xcbf2_9ce4_8422_2325u64;
        for row in &channels.h_ap {
            for m in row {
                digest = digest_cmat(digest, m);
            }
        }
        for row in &channels.h {
            for v in row {
                digest = digest_cmat(digest, &CMat::from_column_slice(v.len(), 1, v.as_slice()));
            }
        }
        for row in &channels.g {
            for v in row {
                digest = digest_cmat(digest, &CMat::from_column_slice(v.len(), 1, v.as_slice()));
            }
        }

        Ok(ProcessingChain {
            n_tap,
            n_rap,
            n_dl,
            n_ul,
            n_ant: cfg.n_ant,
            n_rf: cfg.n_rf,
            w_rf,
            u_rf,
            h_hat_eq: estimates.h_hat_eq,
            g_hat_eq: estimates.g_hat_eq,
            r_tilde_dl,
            r_tilde_ul,
            r_eq_dl,
            r_eq_ul,
            interap_err_cov,
            precoder,
            combiner,
            t_iui: channels.t_iui.clone(),
            serving_rap,
            sigma2: cfg.noise_w(),
            channel_digest: digest,
        })
    }

    /// Re-estimate the user links with a fresh pilot-noise realisation on the
    /// same channels. Covariances, beamformers, and the inter-AP stage are
    /// unchanged; this is what makes consecutive environment states differ.
    pub fn refresh_user_estimates<R: Rng>(
        &self,
        channels: &ChannelSet,
        pilots: &PilotSetup,
        rng: &mut R,
    ) -> Result<UserEstimates> {
        let (estimates, _, _) = estimate_user_links(
            channels,
            &self.w_rf,
            &self.u_rf,
            &self.r_eq_dl,
            &self.r_eq_ul,
            pilots,
            rng,
        )?;
        Ok(estimates)
    }
}
