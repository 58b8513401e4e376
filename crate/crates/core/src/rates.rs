//! Closed-form bidirectional rate lower bounds and a Monte Carlo oracle.
//!
//! Downlink: `R_k = log2(1 + eta_k / (I_DEE + I_IUI + sigma^2))` where the
//! estimation-error term contracts the precoders against the downlink error
//! covariances and the IUI term sums `|t_kj|^2 P_Uj`.
//!
//! Uplink: `R_j = log2(1 + P_Uj / (I_TEE + I_Noise))` where the total
//! estimation error combines the uplink error covariances with the inter-AP
//! residual quadratic form `((W f)^T kron v U^H) C ((W f)^T kron v U^H)^H`,
//! and the noise term is `sigma^2 v U^H U v^H`. In joint-combining mode these
//! contributions sum over R-APs (per-AP errors and noise are independent).
//!
//! The Monte Carlo oracle realises the same conditional expectation by
//! sampling estimation errors from their covariances, symbols, and uplink
//! noise, so the closed forms must lower-bound it (Jensen).

use crate::beamforming::{CombinerMode, PowerAllocation};
use crate::linalg::{psd_sqrt_factor, sample_cn, C64, CMat, CVec};
use crate::pipeline::ProcessingChain;
use crate::{Error, Result};
use rand::Rng;

/// Finite cap for interference-free configurations: log2(1 + 1e12).
pub const SINR_CAP: f64 = 1e12;

fn capped_rate(signal: f64, interference: f64) -> f64 {
    let sinr = if interference > 0.0 {
        (signal / interference).min(SINR_CAP)
    } else {
        SINR_CAP
    };
    (1.0 + sinr).log2()
}

/// Downlink per-user rate decomposition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DownlinkTerms {
    pub rate: f64,
    /// Downlink estimation error power.
    pub dee: f64,
    /// Inter-user interference power.
    pub iui: f64,
    pub noise: f64,
}

/// Uplink per-user rate decomposition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct UplinkTerms {
    pub rate: f64,
    /// Total estimation error power (user links + inter-AP residual).
    pub tee: f64,
    pub noise: f64,
}

/// Closed-form rates with the weighted objective.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateReport {
    pub downlink: Vec<DownlinkTerms>,
    pub uplink: Vec<UplinkTerms>,
    pub objective: f64,
}

/// Closed-form downlink lower bounds for every DL user.
pub fn downlink_rate_lb(
    chain: &ProcessingChain,
    eta: &[f64],
    p_ul: &[f64],
) -> Result<Vec<DownlinkTerms>> {
    if eta.iter().any(|&e| e < 0.0) || p_ul.iter().any(|&p| p < 0.0) {
        return Err(Error::Domain("powers must be non-negative".into()));
    }
    if chain.sigma2 <= 0.0 {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    let mut out = Vec::with_capacity(chain.n_dl);
    for k in 0..chain.n_dl {
        let mut dee = 0.0;
        for m in 0..chain.n_tap {
            let r_tilde = &chain.r_tilde_dl[k][m];
            for (i, &eta_i) in eta.iter().enumerate() {
                if eta_i > 0.0 {
                    let f = chain.precoder.f(m, i);
                    dee += eta_i * (f.adjoint() * r_tilde * &f)[(0, 0)].re;
                }
            }
        }
        let iui: f64 = (0..chain.n_ul)
            .map(|j| chain.t_iui[k][j].norm_sqr() * p_ul[j])
            .sum();
        let denom = dee + iui + chain.sigma2;
        out.push(DownlinkTerms {
            rate: capped_rate(eta[k], denom),
            dee,
            iui,
            noise: chain.sigma2,
        });
    }
    Ok(out)
}

/// Kronecker probe row `(a^T kron b)` for a column a (n) and row b (1 x n):
/// `q[col*n + row] = a[col] * b[row]` under column-major vec.
fn kron_probe(a: &CVec, b: &CMat) -> CMat {
    let n = a.len();
    debug_assert_eq!(b.ncols(), n);
    let mut q = CMat::zeros(1, n * n);
    for col in 0..n {
        for row in 0..n {
            q[(0, col * n + row)] = a[col] * b[(0, row)];
        }
    }
    q
}

/// Closed-form uplink lower bounds for every UL user.
pub fn uplink_rate_lb(
    chain: &ProcessingChain,
    eta: &[f64],
    p_ul: &[f64],
) -> Result<Vec<UplinkTerms>> {
    if eta.iter().any(|&e| e < 0.0) || p_ul.iter().any(|&p| p < 0.0) {
        return Err(Error::Domain("powers must be non-negative".into()));
    }
    let raps: Vec<usize> = (0..chain.n_rap).collect();
    let mut out = Vec::with_capacity(chain.n_ul);
    for j in 0..chain.n_ul {
        // In per-R-AP mode only the serving AP contributes; joint mode sums
        // independent per-AP contributions.
        let zs: &[usize] = match chain.combiner.mode {
            CombinerMode::Joint => &raps,
            CombinerMode::PerRap => std::slice::from_ref(&chain.serving_rap[j]),
        };
        let mut tee = 0.0;
        let mut noise = 0.0;
        for &z in zs {
            let v = chain.combiner.block(j, z); // 1 x n_rf
            if v.norm() == 0.0 && chain.combiner.mode == CombinerMode::PerRap {
                return Err(Error::Domain("degenerate combiner row".into()));
            }
            let b = &v * chain.u_rf[z].adjoint(); // 1 x n_ant
            // Uplink estimation errors of every user at this AP.
            for (jp, &p) in p_ul.iter().enumerate() {
                if p > 0.0 {
                    let r_tilde = &chain.r_tilde_ul[jp][z];
                    tee += p * (&v * r_tilde * v.adjoint())[(0, 0)].re;
                }
            }
            // Inter-AP residual through the estimation error covariance.
            for m in 0..chain.n_tap {
                let c = &chain.interap_err_cov[m][z];
                for (i, &eta_i) in eta.iter().enumerate() {
                    if eta_i > 0.0 {
                        let a = &chain.w_rf[m] * chain.precoder.f(m, i); // n_ant
                        let q = kron_probe(&a, &b);
                        tee += eta_i * crate::linalg::quadratic_form(&q, c);
                    }
                }
            }
            // sigma^2 v U^H U v^H.
            let u = &chain.u_rf[z];
            noise += chain.sigma2 * (&v * (u.adjoint() * u) * v.adjoint())[(0, 0)].re;
        }
        let denom = tee + noise;
        out.push(UplinkTerms {
            rate: capped_rate(p_ul[j], denom),
            tee,
            noise,
        });
    }
    Ok(out)
}

/// Weighted bidirectional sum rate `omega_D sum R_Dk + omega_U sum R_Uj`.
pub fn weighted_objective(
    downlink: &[DownlinkTerms],
    uplink: &[UplinkTerms],
    omega_d: f64,
    omega_u: f64,
) -> Result<f64> {
    if (omega_d + omega_u - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("rate weights must sum to 1".into()));
    }
    let dl: f64 = downlink.iter().map(|t| t.rate).sum();
    let ul: f64 = uplink.iter().map(|t| t.rate).sum();
    Ok(omega_d * dl + omega_u * ul)
}

/// Full closed-form report for one allocation.
pub fn rate_report(
    chain: &ProcessingChain,
    alloc: &PowerAllocation,
    omega_d: f64,
    omega_u: f64,
) -> Result<RateReport> {
    let downlink = downlink_rate_lb(chain, &alloc.eta, &alloc.p_ul)?;
    let uplink = uplink_rate_lb(chain, &alloc.eta, &alloc.p_ul)?;
    let objective = weighted_objective(&downlink, &uplink, omega_d, omega_u)?;
    Ok(RateReport {
        downlink,
        uplink,
        objective,
    })
}

/// Monte Carlo ergodic-rate estimates with standard errors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OracleReport {
    pub dl_mean: Vec<f64>,
    pub dl_stderr: Vec<f64>,
    pub ul_mean: Vec<f64>,
    pub ul_stderr: Vec<f64>,
    pub trials: usize,
}

/// Monte Carlo ergodic rates under the same conditioning as the closed-form
/// bounds: estimation errors drawn from their covariances, i.i.d. unit-power
/// symbols, fresh uplink receive noise; beamformers and estimates fixed.
///
/// Returns per-user means of `log2(1 + SINR)` with standard errors.
pub fn mc_ergodic_rate<R: Rng>(
    chain: &ProcessingChain,
    alloc: &PowerAllocation,
    trials: usize,
    rng: &mut R,
) -> Result<OracleReport> {
    if trials < 100 {
        return Err(Error::Domain("need at least 100 trials".into()));
    }
    let n = chain.n_ant;

    // Pre-factor every covariance we sample from.
    let dl_err_fac: Vec<Vec<CMat>> = chain
        .r_tilde_dl
        .iter()
        .map(|row| row.iter().map(|r| psd_sqrt_factor(r, 1e-12)).collect())
        .collect();
    let ul_err_fac: Vec<Vec<CMat>> = chain
        .r_tilde_ul
        .iter()
        .map(|row| row.iter().map(|r| psd_sqrt_factor(r, 1e-12)).collect())
        .collect();
    let ap_err_fac: Vec<Vec<CMat>> = chain
        .interap_err_cov
        .iter()
        .map(|row| row.iter().map(|c| psd_sqrt_factor(c, 1e-12)).collect())
        .collect();
    // Combiner rows folded through the analog stage: b[j][z] = v U^H (1 x n).
    let probes: Vec<Vec<CMat>> = (0..chain.n_ul)
        .map(|j| {
            (0..chain.n_rap)
                .map(|z| chain.combiner.block(j, z) * chain.u_rf[z].adjoint())
                .collect()
        })
        .collect();
    let raps: Vec<usize> = (0..chain.n_rap).collect();

    let draw = |fac: &CMat, rng: &mut R| -> CVec {
        let r = fac.ncols();
        let w = CVec::from_fn(r, |_, _| sample_cn(1.0, rng));
        fac * w
    };

    let mut dl_sum = vec![0.0; chain.n_dl];
    let mut dl_sumsq = vec![0.0; chain.n_dl];
    let mut ul_sum = vec![0.0; chain.n_ul];
    let mut ul_sumsq = vec![0.0; chain.n_ul];

    for _ in 0..trials {
        // Symbols.
        let s_dl: Vec<C64> = (0..chain.n_dl).map(|_| sample_cn(1.0, rng)).collect();
        let s_ul: Vec<C64> = (0..chain.n_ul).map(|_| sample_cn(1.0, rng)).collect();
        // Per-AP weighted symbol vectors q_m = F_m (sqrt(eta) .* s).
        let weighted: CVec = CVec::from_iterator(
            chain.n_dl,
            (0..chain.n_dl).map(|i| s_dl[i] * C64::new(alloc.eta[i].sqrt(), 0.0)),
        );
        let q_m: Vec<CVec> = (0..chain.n_tap)
            .map(|m| &chain.precoder.per_tap[m] * &weighted)
            .collect();

        // Downlink users.
        for k in 0..chain.n_dl {
            let mut dee = C64::new(0.0, 0.0);
            for m in 0..chain.n_tap {
                let err = draw(&dl_err_fac[k][m], rng);
                dee += (err.adjoint() * &q_m[m])[(0, 0)];
            }
            let mut iui = C64::new(0.0, 0.0);
            for j in 0..chain.n_ul {
                iui += chain.t_iui[k][j] * C64::new(alloc.p_ul[j].sqrt(), 0.0) * s_ul[j];
            }
            let denom = dee.norm_sqr() + iui.norm_sqr() + chain.sigma2;
            let rate = capped_rate(alloc.eta[k], denom);
            dl_sum[k] += rate;
            dl_sumsq[k] += rate * rate;
        }

        // Shared draws across uplink users of this trial: inter-AP errors and
        // receive noise are physical quantities, not per-user ones.
        let x_m: Vec<CVec> = (0..chain.n_tap)
            .map(|m| &chain.w_rf[m] * &q_m[m])
            .collect();
        let ap_err: Vec<Vec<CMat>> = (0..chain.n_tap)
            .map(|m| {
                (0..chain.n_rap)
                    .map(|z| {
                        let e = draw(&ap_err_fac[m][z], rng);
                        crate::linalg::unvec(&e, n, n)
                    })
                    .collect()
            })
            .collect();
        let noise_z: Vec<CVec> = (0..chain.n_rap)
            .map(|_| CVec::from_fn(n, |_, _| sample_cn(chain.sigma2, rng)))
            .collect();
        let ul_err: Vec<Vec<CVec>> = (0..chain.n_ul)
            .map(|j| {
                (0..chain.n_rap)
                    .map(|z| draw(&ul_err_fac[j][z], rng))
                    .collect()
            })
            .collect();

        for j in 0..chain.n_ul {
            let zs: &[usize] = match chain.combiner.mode {
                CombinerMode::Joint => &raps,
                CombinerMode::PerRap => std::slice::from_ref(&chain.serving_rap[j]),
            };
            let mut err_term = C64::new(0.0, 0.0);
            let mut ap_term = C64::new(0.0, 0.0);
            let mut noise_term = C64::new(0.0, 0.0);
            for &z in zs {
                let v = chain.combiner.block(j, z);
                for jp in 0..chain.n_ul {
                    err_term += (&v * &ul_err[jp][z])[(0, 0)]
                        * C64::new(alloc.p_ul[jp].sqrt(), 0.0)
                        * s_ul[jp];
                }
                let b = &probes[j][z];
                for m in 0..chain.n_tap {
                    ap_term += (b * (&ap_err[m][z] * &x_m[m]))[(0, 0)];
                }
                noise_term += (b * &noise_z[z])[(0, 0)];
            }
            let denom = err_term.norm_sqr() + ap_term.norm_sqr() + noise_term.norm_sqr();
            let rate = capped_rate(alloc.p_ul[j], denom);
            ul_sum[j] += rate;
            ul_sumsq[j] += rate * rate;
        }
    }

    let finish = |sum: Vec<f64>, sumsq: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let t = trials as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
        let stderr = sumsq
            .iter()
            .zip(&mean)
            .map(|(&sq, &m)| {
                let var = (sq / t - m * m).max(0.0) * t / (t - 1.0);
                (var / t).sqrt()
            })
            .collect();
        (mean, stderr)
    };
    let (dl_mean, dl_stderr) = finish(dl_sum, dl_sumsq);
    let (ul_mean, ul_stderr) = finish(ul_sum, ul_sumsq);
    Ok(OracleReport {
        dl_mean,
        dl_stderr,
        ul_mean,
        ul_stderr,
        trials,
    })
}
