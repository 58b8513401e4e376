//! Multipath channel synthesis and angle-conditioned covariance matrices.
//!
//! Every link is a sum of `L` isotropic paths with i.i.d. CN(0, beta) gains
//! and uniform angles, half-wavelength ULA steering vectors on the AP side.
//! Conditioned on the drawn angles, the spatial covariance of a vector link
//! is `beta * sum_l v(theta_l) v(theta_l)^H` and the covariance of the
//! vectorised inter-AP matrix is the corresponding sum of vectorised rank-one
//! outer products. Both are rank-limited by `L`, which the estimation stage
//! exploits.

use crate::linalg::{sample_cn, vec_of, C64, CMat, CVec};
use crate::scenario::{Scenario, SystemConfig};
use crate::{Error, Result};
use rand::Rng;

/// Maximum antenna count for which dense n^2 x n^2 covariance matrices may be
/// materialised (16 MiB of complex doubles at 32).
pub const MAX_DENSE_COV_ANTENNAS: usize = 32;

/// Half-wavelength ULA steering vector, unit norm:
/// `v[p] = exp(i pi p sin(theta)) / sqrt(n)`.
pub fn steering_vector(theta: f64, n: usize) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    let phase = std::f64::consts::PI * theta.sin();
    CVec::from_fn(n, |p, _| {
        let arg = phase * p as f64;
        C64::new(arg.cos() * scale, arg.sin() * scale)
    })
}

fn uniform_angle(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
}

/// Vector link from forced per-path gains and angles (test hook and shared
/// implementation for [`sample_vector_channel`]).
pub fn vector_channel_from_paths(gains: &[C64], angles: &[f64], n: usize) -> CVec {
    assert_eq!(gains.len(), angles.len());
    let mut h = CVec::zeros(n);
    for (alpha, &theta) in gains.iter().zip(angles) {
        h += steering_vector(theta, n) * *alpha;
    }
    h
}

/// Draw one user-AP vector channel: `h = sum_l alpha_l v(theta_l)` with
/// `alpha_l ~ CN(0, beta)`, `theta_l ~ U[-pi, pi)`. Returns the drawn angles.
pub fn sample_vector_channel(
    beta: f64,
    l_paths: usize,
    n: usize,
    rng: &mut impl Rng,
) -> (CVec, Vec<f64>) {
    let angles: Vec<f64> = (0..l_paths).map(|_| uniform_angle(rng)).collect();
    let gains: Vec<C64> = (0..l_paths).map(|_| sample_cn(beta, rng)).collect();
    (vector_channel_from_paths(&gains, &angles, n), angles)
}

/// Paired arrival/departure angles of an inter-AP link.
#[derive(Debug, Clone, PartialEq)]
pub struct InterApAngles {
    pub arrival: Vec<f64>,
    pub departure: Vec<f64>,
}

/// Inter-AP matrix from forced gains and angles.
pub fn interap_channel_from_paths(gains: &[C64], angles: &InterApAngles, n: usize) -> CMat {
    let mut h = CMat::zeros(n, n);
    for (l, alpha) in gains.iter().enumerate() {
        let vr = steering_vector(angles.arrival[l], n);
        let vt = steering_vector(angles.departure[l], n);
        h += (&vr * vt.adjoint()) * *alpha;
    }
    h
}

/// Draw one inter-AP channel `H = sum_l alpha_l v(theta_l^r) v(theta_l^t)^H`.
pub fn sample_interap_channel(
    beta: f64,
    l_paths: usize,
    n: usize,
    rng: &mut impl Rng,
) -> (CMat, InterApAngles) {
    let angles = InterApAngles {
        arrival: (0..l_paths).map(|_| uniform_angle(rng)).collect(),
        departure: (0..l_paths).map(|_| uniform_angle(rng)).collect(),
    };
    let gains: Vec<C64> = (0..l_paths).map(|_| sample_cn(beta, rng)).collect();
    (interap_channel_from_paths(&gains, &angles, n), angles)
}

/// Angle-conditioned covariance of a vector link:
/// `R = beta * sum_l v(theta_l) v(theta_l)^H`.
pub fn vector_covariance(angles: &[f64], beta: f64, n: usize) -> CMat {
    let mut r = CMat::zeros(n, n);
    for &theta in angles {
        let v = steering_vector(theta, n);
        r += (&v * v.adjoint()) * C64::new(beta, 0.0);
    }
    r
}

/// Low-rank factor `F` (n^2 x L) of the inter-AP covariance, `R = F F^H`.
///
/// Column l is `sqrt(beta) * vec(v(theta_l^r) v(theta_l^t)^H)`.
pub fn interap_covariance_factor(angles: &InterApAngles, beta: f64, n: usize) -> CMat {
    let l_paths = angles.arrival.len();
    let mut f = CMat::zeros(n * n, l_paths);
    let scale = C64::new(beta.sqrt(), 0.0);
    for l in 0..l_paths {
        let vr = steering_vector(angles.arrival[l], n);
        let vt = steering_vector(angles.departure[l], n);
        let col = vec_of(&(&vr * vt.adjoint())) * scale;
        f.set_column(l, &col);
    }
    f
}

/// Dense covariance of `vec(H)` for an inter-AP link (n^2 x n^2).
///
/// Errors if `n` exceeds [`MAX_DENSE_COV_ANTENNAS`].
pub fn interap_covariance(angles: &InterApAngles, beta: f64, n: usize) -> Result<CMat> {
    if n > MAX_DENSE_COV_ANTENNAS {
        return Err(Error::Capacity(format!(
            "dense inter-AP covariance needs n <= {MAX_DENSE_COV_ANTENNAS}, got {n}"
        )));
    }
    let f = interap_covariance_factor(angles, beta, n);
    Ok(&f * f.adjoint())
}

/// Scalar inter-user interference coefficient, `t ~ CN(0, beta)`.
pub fn sample_iui(beta: f64, rng: &mut impl Rng) -> C64 {
    sample_cn(beta, rng)
}

/// All drawn path angles of one realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    /// `dl[k][m]`: departure angles, T-AP m to DL user k.
    pub dl: Vec<Vec<Vec<f64>>>,
    /// `ul[j][z]`: arrival angles, UL user j to R-AP z.
    pub ul: Vec<Vec<Vec<f64>>>,
    /// `ap[m][z]`: paired angles of the inter-AP links.
    pub ap: Vec<Vec<InterApAngles>>,
}

/// One small-scale realisation of every link in the network.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `h[k][m]`: downlink vector channel (column), T-AP m to DL user k.
    pub h: Vec<Vec<CVec>>,
    /// `g[j][z]`: uplink vector channel, UL user j to R-AP z.
    pub g: Vec<Vec<CVec>>,
    /// `h_ap[m][z]`: inter-AP interference matrix.
    pub h_ap: Vec<Vec<CMat>>,
    /// `t_iui[k][j]`: scalar UL-to-DL interference coefficients.
    pub t_iui: Vec<Vec<C64>>,
    pub angles: AngleSet,
}

/// Draw a full [`ChannelSet`] for a scenario.
pub fn draw_channel_set(scenario: &Scenario, cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelSet {
    let (k_n, m_n, j_n, z_n) = (cfg.n_dl_users, cfg.n_tap, cfg.n_ul_users, cfg.n_rap);
    let l = cfg.n_paths;
    let n = cfg.n_ant;

    let mut h = Vec::with_capacity(k_n);
    let mut dl_angles = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let mut row = Vec::with_capacity(m_n);
        let mut arow = Vec::with_capacity(m_n);
        for m in 0..m_n {
            let (ch, ang) = sample_vector_channel(scenario.beta_dl[k][m], l, n, rng);
            row.push(ch);
            arow.push(ang);
        }
        h.push(row);
        dl_angles.push(arow);
    }

    let mut g = Vec::with_capacity(j_n);
    let mut ul_angles = Vec::with_capacity(j_n);
    for j in 0..j_n {
        let mut row = Vec::with_capacity(z_n);
        let mut arow = Vec::with_capacity(z_n);
        for z in 0..z_n {
            let (ch, ang) = sample_vector_channel(scenario.beta_ul[j][z], l, n, rng);
            row.push(ch);
            arow.push(ang);
        }
        g.push(row);
        ul_angles.push(arow);
    }

    let mut h_ap = Vec::with_capacity(m_n);
    let mut ap_angles = Vec::with_capacity(m_n);
    for m in 0..m_n {
        let mut row = Vec::with_capacity(z_n);
        let mut arow = Vec::with_capacity(z_n);
        for z in 0..z_n {
            let (ch, ang) = sample_interap_channel(scenario.beta_ap[m][z], l, n, rng);
            row.push(ch);
            arow.push(ang);
        }
        h_ap.push(row);
        ap_angles.push(arow);
    }

    let t_iui = (0..k_n)
        .map(|k| {
            (0..j_n)
                .map(|j| sample_iui(scenario.beta_iui[k][j], rng))
                .collect()
        })
        .collect();

    ChannelSet {
        h,
        g,
        h_ap,
        t_iui,
        angles: AngleSet {
            dl: dl_angles,
            ul: ul_angles,
            ap: ap_angles,
        },
    }
}

/// Angle-conditioned covariances of every link of a realisation.
///
/// Inter-AP covariances are kept in factored form (`R = F F^H`); call
/// [`CovarianceSet::r_ap_dense`] when the dense matrix is needed.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    /// `r_h[k][m]`: n x n downlink covariance.
    pub r_h: Vec<Vec<CMat>>,
    /// `r_g[j][z]`: n x n uplink covariance.
    pub r_g: Vec<Vec<CMat>>,
    /// `r_ap_factor[m][z]`: n^2 x L factor of the inter-AP covariance.
    pub r_ap_factor: Vec<Vec<CMat>>,
}

impl CovarianceSet {
    pub fn r_ap_dense(&self, m: usize, z: usize) -> CMat {
        let f = &self.r_ap_factor[m][z];
        f * f.adjoint()
    }
}

/// Build the [`CovarianceSet`] matching a [`ChannelSet`]'s angles.
pub fn covariance_set(
    angles: &AngleSet,
    scenario: &Scenario,
    cfg: &SystemConfig,
) -> CovarianceSet {
    let n = cfg.n_ant;
    let r_h = angles
        .dl
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(m, a)| vector_covariance(a, scenario.beta_dl[k][m], n))
                .collect()
        })
        .collect();
    let r_g = angles
        .ul
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(z, a)| vector_covariance(a, scenario.beta_ul[j][z], n))
                .collect()
        })
        .collect();
    let r_ap_factor = angles
        .ap
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(|(z, a)| interap_covariance_factor(a, scenario.beta_ap[m][z], n))
                .collect()
        })
        .collect();
    CovarianceSet {
        r_h,
        r_g,
        r_ap_factor,
    }
}
