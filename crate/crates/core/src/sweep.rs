//! NMSE-vs-SNR measurement harness for the inter-AP estimator.
//!
//! Each cell of the sweep draws fresh path angles and gains, designs the
//! water-filled coupling for the current SNR, extracts the Kronecker RF
//! factors, runs one pilot block, estimates, and records the per-trial NMSE
//! ratio. Rows with `n_rf = n_ant` use the full-digital observation (analog
//! identity, no coupling design). Trials fan out over a deterministic
//! seed-per-trial split and reduce in index order, so results are
//! reproducible regardless of thread count.

use crate::channel::{interap_channel_from_paths, interap_covariance_factor, InterApAngles};
use crate::estimation::{
    kron_factorize, mmse_interap_estimate_lowrank, optimal_coupling_from_factor,
    simulate_interap_pilot,
};
use crate::linalg::{rng_for, sample_cn, C64, CMat};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Configuration of one NMSE sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NmseSweepConfig {
    /// Antennas per AP.
    pub n_ant: usize,
    /// Hybrid RF-chain counts to sweep.
    pub rf_chains: Vec<usize>,
    /// Append the full-digital row (n_rf = n_ant, analog identity).
    pub include_full_digital: bool,
    /// Pilot SNR grid in dB (rho / sigma^2).
    pub snr_db: Vec<f64>,
    /// Monte Carlo trials per cell.
    pub trials: usize,
    /// Paths per link.
    pub n_paths: usize,
    /// Per-path gain variance of the synthetic link; `None` applies the
    /// classical Saleh-Valenzuela normalisation `E||H||_F^2 = N_AP^2`, i.e.
    /// `beta = n_ant^2 / n_paths`.
    pub beta: Option<f64>,
    pub seed: u64,
}

impl NmseSweepConfig {
    pub fn effective_beta(&self) -> f64 {
        self.beta
            .unwrap_or((self.n_ant * self.n_ant) as f64 / self.n_paths as f64)
    }
}

impl Default for NmseSweepConfig {
    fn default() -> Self {
        NmseSweepConfig {
            n_ant: 32,
            rf_chains: vec![4, 10],
            include_full_digital: true,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 500,
            n_paths: 3,
            beta: None,
            seed: 1,
        }
    }
}

/// One measured sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmseCell {
    pub snr_db: f64,
    pub n_rf: usize,
    pub n_ant: usize,
    pub trials: usize,
    pub nmse_db: f64,
}

fn draw_angles(l: usize, rng: &mut impl Rng) -> InterApAngles {
    let pi = std::f64::consts::PI;
    InterApAngles {
        arrival: (0..l).map(|_| rng.gen_range(-pi..pi)).collect(),
        departure: (0..l).map(|_| rng.gen_range(-pi..pi)).collect(),
    }
}

/// One estimation trial; returns the NMSE ratio.
fn run_trial(
    cfg: &NmseSweepConfig,
    n_rf: usize,
    full_digital: bool,
    rho: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng_for(seed, 0);
    let n = cfg.n_ant;
    let sigma2: f64 = 1.0;
    let beta = cfg.effective_beta();
    let angles = draw_angles(cfg.n_paths, &mut rng);
    let factor = interap_covariance_factor(&angles, beta, n);
    let gains: Vec<C64> = (0..cfg.n_paths)
        .map(|_| sample_cn(beta, &mut rng))
        .collect();
    let h = interap_channel_from_paths(&gains, &angles, n);

    let h_hat = if full_digital {
        let eye = CMat::identity(n, n);
        let y = simulate_interap_pilot(&h, &eye, &eye, rho, sigma2.sqrt(), &mut rng);
        mmse_interap_estimate_lowrank(&y, &factor, None, rho, sigma2)?
    } else {
        let design = optimal_coupling_from_factor(&factor, rho, sigma2, n_rf)?;
        let (w, u) = kron_factorize(&design.coupling, n, n_rf)?;
        let y = simulate_interap_pilot(&h, &w, &u, rho, sigma2.sqrt(), &mut rng);
        mmse_interap_estimate_lowrank(&y, &factor, Some((&w, &u)), rho, sigma2)?
    };
    crate::estimation::nmse(&h_hat, &h)
}

/// Run the sweep and return one cell per (rf-chain count, SNR) pair, the
/// full-digital rows last for each SNR.
pub fn nmse_sweep(cfg: &NmseSweepConfig) -> Result<Vec<NmseCell>> {
    if cfg.snr_db.is_empty() || (cfg.rf_chains.is_empty() && !cfg.include_full_digital) {
        return Err(Error::Config("empty sweep grid".into()));
    }
    if cfg.n_ant > crate::channel::MAX_DENSE_COV_ANTENNAS {
        return Err(Error::Capacity(format!(
            "sweep capped at {} antennas",
            crate::channel::MAX_DENSE_COV_ANTENNAS
        )));
    }
    for &n_rf in &cfg.rf_chains {
        if n_rf == 0 || n_rf > cfg.n_ant {
            return Err(Error::Config(format!("invalid RF chain count {n_rf}")));
        }
    }
    let mut rows: Vec<(usize, bool)> = cfg.rf_chains.iter().map(|&r| (r, false)).collect();
    if cfg.include_full_digital {
        rows.push((cfg.n_ant, true));
    }

    let mut cells = Vec::new();
    let mut cell_idx: u64 = 0;
    for &(n_rf, full) in &rows {
        for &snr in &cfg.snr_db {
            let rho = 10f64.powf(snr / 10.0);
            // Seed stream per (cell, trial): trial counts can grow without
            // perturbing earlier trials.
            let base = cell_idx << 32;
            let ratios: Vec<f64> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    run_trial(
                        cfg,
                        n_rf,
                        full,
                        rho,
                        crate::linalg::derive_seed(cfg.seed, base | t as u64),
                    )
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            cells.push(NmseCell {
                snr_db: snr,
                n_rf,
                n_ant: cfg.n_ant,
                trials: cfg.trials,
                nmse_db: 10.0 * mean.log10(),
            });
            cell_idx += 1;
        }
    }
    Ok(cells)
}

/// Stable CSV rendering of sweep results.
pub fn sweep_to_csv(cells: &[NmseCell]) -> String {
    let mut out = String::from("schema_version,snr_db,n_rf,n_ant,trials,nmse_db\n");
    for c in cells {
        out.push_str(&format!(
            "1,{},{},{},{},{}\n",
            c.snr_db, c.n_rf, c.n_ant, c.trials, c.nmse_db
        ));
    }
    out
}
