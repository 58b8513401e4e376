//! Analog and digital beamformer construction plus power accounting.
//!
//! Analog matrices take the entrywise phase of the dominant eigenvectors of
//! the user-averaged spatial covariance, so every entry has unit modulus and
//! columns carry norm sqrt(n_ant). Digital stages are zero-forcing on the
//! estimated equivalent channels: the minimum-norm right inverse for the
//! downlink precoder and either a CPU-joint left inverse or per-R-AP
//! least-squares rows for the uplink combiner.

use crate::linalg::{condition_number, pinv, C64, CMat, CVec};
use crate::{Error, Result};

/// Unit-modulus analog beamformer from a spatial covariance average.
///
/// Column l is the entrywise phase projection `exp(i angle(w_l))` of the
/// eigenvector with the l-th largest eigenvalue. Zero entries map to phase 0.
pub fn analog_from_covariance(r_bar: &CMat, n_rf: usize) -> CMat {
    let n = r_bar.nrows();
    let (_, vecs) = crate::linalg::hermitian_eigen_desc(r_bar);
    CMat::from_fn(n, n_rf, |i, l| {
        let w = vecs[(i, l)];
        if w.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            let phase = w.arg();
            C64::new(phase.cos(), phase.sin())
        }
    })
}

/// Zero-forcing digital precoders of all T-APs.
#[derive(Debug, Clone)]
pub struct DigitalPrecoder {
    /// `per_tap[m]` is the n_rf x K block F_m; column i serves DL user i.
    pub per_tap: Vec<CMat>,
    /// Stacked (N_T n_rf) x K form.
    pub stacked: CMat,
}

impl DigitalPrecoder {
    /// Precoding vector f_{m,i}.
    pub fn f(&self, m: usize, i: usize) -> CVec {
        self.per_tap[m].column(i).into_owned()
    }
}

/// Minimum-norm zero-forcing precoder on estimated equivalent channels.
///
/// `h_hat_eq[k][m]` is the estimated equivalent channel of DL user k at T-AP
/// m. With the stacked estimate matrix H (N_T n_rf x K), the precoder is
/// `F = H (H^H H)^{-1}`, which satisfies `H^H F = I_K`.
pub fn zf_precoder(h_hat_eq: &[Vec<CVec>]) -> Result<DigitalPrecoder> {
    let k_users = h_hat_eq.len();
    if k_users == 0 {
        return Err(Error::Dimension("no downlink users".into()));
    }
    let n_tap = h_hat_eq[0].len();
    let n_rf = h_hat_eq[0][0].len();
    let mut stacked_h = CMat::zeros(n_tap * n_rf, k_users);
    for (k, row) in h_hat_eq.iter().enumerate() {
        for (m, h) in row.iter().enumerate() {
            for r in 0..n_rf {
                stacked_h[(m * n_rf + r, k)] = h[r];
            }
        }
    }
    if condition_number(&stacked_h) > 1e12 {
        return Err(Error::SingularChannel(
            "stacked downlink estimate is rank deficient".into(),
        ));
    }
    let gram = stacked_h.adjoint() * &stacked_h;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::SingularChannel("downlink Gram not invertible".into()))?;
    let stacked = &stacked_h * gram_inv;
    let per_tap = (0..n_tap)
        .map(|m| stacked.rows(m * n_rf, n_rf).into_owned())
        .collect();
    Ok(DigitalPrecoder { per_tap, stacked })
}

/// Uplink combining strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CombinerMode {
    /// All R-AP observations stacked at the CPU; exact ZF across users.
    Joint,
    /// Independent least-squares rows per R-AP (exact ZF only if n_rf >= J).
    PerRap,
}

/// Digital receive combiner.
#[derive(Debug, Clone)]
pub struct DigitalCombiner {
    pub mode: CombinerMode,
    /// `rows[j]` is the 1 x (N_R n_rf) combiner of UL user j; in per-R-AP
    /// mode it is assembled from the per-AP pseudoinverse rows, so per-AP
    /// blocks can still be read off.
    pub rows: Vec<CMat>,
    pub n_rf: usize,
}

impl DigitalCombiner {
    /// The 1 x n_rf block of user j's combiner at R-AP z.
    pub fn block(&self, j: usize, z: usize) -> CMat {
        self.rows[j].columns(z * self.n_rf, self.n_rf).into_owned()
    }
}

/// Zero-forcing / least-squares combiner on estimated equivalent channels.
///
/// `g_hat_eq[j][z]` is the estimated equivalent channel of UL user j at R-AP
/// z. Joint mode computes `V = (G^H G)^{-1} G^H` of the stacked matrix so
/// `V G = I_J`; per-R-AP mode takes rows of the Moore-Penrose pseudoinverse
/// of each per-AP block.
pub fn zf_combiner(g_hat_eq: &[Vec<CVec>], mode: CombinerMode) -> Result<DigitalCombiner> {
    let j_users = g_hat_eq.len();
    if j_users == 0 {
        return Err(Error::Dimension("no uplink users".into()));
    }
    let n_rap = g_hat_eq[0].len();
    let n_rf = g_hat_eq[0][0].len();
    match mode {
        CombinerMode::Joint => {
            let mut stacked_g = CMat::zeros(n_rap * n_rf, j_users);
            for (j, row) in g_hat_eq.iter().enumerate() {
                for (z, g) in row.iter().enumerate() {
                    for r in 0..n_rf {
                        stacked_g[(z * n_rf + r, j)] = g[r];
                    }
                }
            }
            if n_rap * n_rf < j_users {
                return Err(Error::SingularChannel(
                    "joint combining needs N_R * n_rf >= J".into(),
                ));
            }
            if condition_number(&stacked_g) > 1e12 {
                return Err(Error::SingularChannel(
                    "stacked uplink estimate is rank deficient".into(),
                ));
            }
            let gram = stacked_g.adjoint() * &stacked_g;
            let gram_inv = gram
                .try_inverse()
                .ok_or_else(|| Error::SingularChannel("uplink Gram not invertible".into()))?;
            let v = gram_inv * stacked_g.adjoint(); // J x (N_R n_rf)
            let rows = (0..j_users)
                .map(|j| CMat::from_row_slice(1, n_rap * n_rf, v.row(j).transpose().as_slice()))
                .collect();
            Ok(DigitalCombiner { mode, rows, n_rf })
        }
        CombinerMode::PerRap => {
            // Per-AP blocks G_z (n_rf x J); user j's row at AP z is row j of
            // pinv(G_z), the least-squares solution of v G_z = e_j^T.
            let mut rows = vec![CMat::zeros(1, n_rap * n_rf); j_users];
            for z in 0..n_rap {
                let mut g_z = CMat::zeros(n_rf, j_users);
                for (j, row) in g_hat_eq.iter().enumerate() {
                    g_z.set_column(j, &row[z]);
                }
                let p = pinv(&g_z, 1e-12); // J x n_rf
                for (j, out) in rows.iter_mut().enumerate() {
                    for r in 0..n_rf {
                        out[(0, z * n_rf + r)] = p[(j, r)];
                    }
                }
            }
            Ok(DigitalCombiner { mode, rows, n_rf })
        }
    }
}

/// Transmit power of one T-AP: `Tr(W F diag(eta) F^H W^H)`.
pub fn tap_power(w_rf: &CMat, f_m: &CMat, eta: &[f64]) -> f64 {
    debug_assert_eq!(f_m.ncols(), eta.len());
    let mut total = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        if e > 0.0 {
            total += e * (w_rf * f_m.column(i)).norm_squared();
        }
    }
    total
}

/// Shared downlink power coefficient for equal-power operation:
/// `eta = P_D / max_m Tr(W_m F_m F_m^H W_m^H)`, so every AP respects the cap
/// and the loaded one meets it with equality.
pub fn equal_downlink_eta(p_d: f64, w_rf_all: &[CMat], f_all: &[CMat]) -> Result<f64> {
    let mut max_trace: f64 = 0.0;
    for (w, f) in w_rf_all.iter().zip(f_all) {
        max_trace = max_trace.max((w * f).norm_squared());
    }
    if max_trace <= 0.0 {
        return Err(Error::Domain("all precoders are zero".into()));
    }
    Ok(p_d / max_trace)
}

/// Bidirectional power allocation under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Downlink power coefficients eta_k (linear).
    pub eta: Vec<f64>,
    /// Uplink transmit powers in watts.
    pub p_ul: Vec<f64>,
}
