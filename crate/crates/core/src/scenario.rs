//! Network geometry and large-scale fading.
//!
//! Nodes are dropped uniformly in a disc; users are re-sampled until they
//! respect the protection distance against every AP. Large-scale gains follow
//! the mmWave path-loss model `PL(d) = PL(d0) + 10 xi log10(d/d0) + X` with
//! log-normal shadowing X, evaluated for all four link classes of the NAFD
//! topology (T-AP to DL user, UL user to R-AP, T-AP to R-AP, UL to DL user).

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const MAX_PLACEMENT_RETRIES: usize = 10_000;

/// Physical and dimensional configuration of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Number of transmitting APs.
    pub n_tap: usize,
    /// Number of receiving APs.
    pub n_rap: usize,
    /// Number of uplink users.
    pub n_ul_users: usize,
    /// Number of downlink users.
    pub n_dl_users: usize,
    /// Antennas per AP (ULA).
    pub n_ant: usize,
    /// RF chains per AP.
    pub n_rf: usize,
    /// Propagation paths per link.
    pub n_paths: usize,
    /// Deployment disc radius in meters.
    pub radius_m: f64,
    /// Minimum user-AP distance in meters.
    pub protect_m: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Total noise power in dBm.
    pub noise_dbm: f64,
    /// Per-T-AP maximum transmit power in dBm.
    pub p_d_dbm: f64,
    /// Per-UL-user maximum transmit power in dBm.
    pub p_u_dbm: f64,
    /// Path loss exponent xi.
    pub pathloss_exp: f64,
    /// Shadowing standard deviation in dB.
    pub shadow_std_db: f64,
    /// Downlink sum-rate weight.
    pub omega_d: f64,
    /// Uplink sum-rate weight.
    pub omega_u: f64,
    /// Master RNG seed; every stochastic stage derives its stream from it.
    pub master_seed: u64,
}

impl Default for SystemConfig {
    /// The dense reference network: 6 T-APs, 6 R-APs, 4+4 users, 6 antennas,
    /// 3 RF chains, 60 m disc, 5 m protection distance, 28 GHz, -85 dBm noise,
    /// 30/27 dBm power caps, exponent 2.92, 8.7 dB shadowing.
    fn default() -> Self {
        SystemConfig {
            n_tap: 6,
            n_rap: 6,
            n_ul_users: 4,
            n_dl_users: 4,
            n_ant: 6,
            n_rf: 3,
            n_paths: 3,
            radius_m: 60.0,
            protect_m: 5.0,
            carrier_hz: 28.0e9,
            noise_dbm: -85.0,
            p_d_dbm: 30.0,
            p_u_dbm: 27.0,
            pathloss_exp: 2.92,
            shadow_std_db: 8.7,
            omega_d: 0.5,
            omega_u: 0.5,
            master_seed: 1,
        }
    }
}

impl SystemConfig {
    /// Reduced instance used for fast learning experiments: 3 T-APs, 3 R-APs,
    /// 2+2 users, 4 antennas, 2 RF chains. Physical parameters unchanged.
    pub fn small() -> Self {
        SystemConfig {
            n_tap: 3,
            n_rap: 3,
            n_ul_users: 2,
            n_dl_users: 2,
            n_ant: 4,
            n_rf: 2,
            ..SystemConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_tap,
            self.n_rap,
            self.n_ul_users,
            self.n_dl_users,
            self.n_ant,
            self.n_rf,
            self.n_paths,
        ];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("all counts must be >= 1".into()));
        }
        if self.n_rf > self.n_ant {
            return Err(Error::Config(format!(
                "n_rf ({}) must not exceed n_ant ({})",
                self.n_rf, self.n_ant
            )));
        }
        if (self.omega_d + self.omega_u - 1.0).abs() > 1e-9 {
            return Err(Error::Config("omega_d + omega_u must equal 1".into()));
        }
        if !(self.radius_m > self.protect_m && self.protect_m >= 0.0) {
            return Err(Error::Config(
                "need radius_m > protect_m >= 0".into(),
            ));
        }
        if self.carrier_hz <= 0.0 {
            return Err(Error::Config("carrier_hz must be positive".into()));
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Total noise power in watts.
    pub fn noise_w(&self) -> f64 {
        dbm_to_watt(self.noise_dbm)
    }

    /// Downlink power cap in watts.
    pub fn p_d_w(&self) -> f64 {
        dbm_to_watt(self.p_d_dbm)
    }

    /// Uplink power cap in watts.
    pub fn p_u_w(&self) -> f64 {
        dbm_to_watt(self.p_u_dbm)
    }

    pub fn n_agents(&self) -> usize {
        self.n_ul_users + self.n_dl_users
    }
}

/// dBm to watts.
pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Distance-dependent path loss in dB, excluding shadowing.
///
/// `PL(d) = 20 log10(4 pi d0 / lambda) + 10 xi log10(d/d0)` with d0 = 1 m.
pub fn path_loss_db(d_m: f64, cfg: &SystemConfig) -> Result<f64> {
    if d_m <= 0.0 {
        return Err(Error::Domain(format!("distance must be positive, got {d_m}")));
    }
    let d0 = 1.0;
    let pl0 = 20.0 * (4.0 * std::f64::consts::PI * d0 / cfg.wavelength_m()).log10();
    Ok(pl0 + 10.0 * cfg.pathloss_exp * (d_m / d0).log10())
}

/// Linear large-scale gain: beta = 10^(-(PL(d) + X)/10) with shadowing
/// X ~ N(0, shadow_std_db^2).
pub fn large_scale_gain(d_m: f64, cfg: &SystemConfig, rng: &mut impl Rng) -> Result<f64> {
    let pl = path_loss_db(d_m, cfg)?;
    let shadow = if cfg.shadow_std_db > 0.0 {
        Normal::new(0.0, cfg.shadow_std_db)
            .expect("valid std")
            .sample(rng)
    } else {
        0.0
    };
    Ok(10f64.powf(-(pl + shadow) / 10.0))
}

/// One realisation of network geometry and large-scale fading.
///
/// Gains are stored linear; the JSON form converts them to dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tap_pos: Vec<[f64; 2]>,
    pub rap_pos: Vec<[f64; 2]>,
    pub ul_pos: Vec<[f64; 2]>,
    pub dl_pos: Vec<[f64; 2]>,
    /// beta_dl[k][m]: T-AP m to DL user k.
    pub beta_dl: Vec<Vec<f64>>,
    /// beta_ul[j][z]: UL user j to R-AP z.
    pub beta_ul: Vec<Vec<f64>>,
    /// beta_ap[m][z]: T-AP m to R-AP z.
    pub beta_ap: Vec<Vec<f64>>,
    /// beta_iui[k][j]: UL user j to DL user k.
    pub beta_iui: Vec<Vec<f64>>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn uniform_in_disc(radius: f64, rng: &mut impl Rng) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    [r * theta.cos(), r * theta.sin()]
}

/// Generate positions and all large-scale gains for one network drop.
///
/// APs are placed first, unconstrained; each user is re-sampled until its
/// distance to every AP is at least `protect_m`. Fails after 10^4 rejected
/// samples for a single node.
pub fn generate_topology<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;

    let tap_pos: Vec<[f64; 2]> = (0..cfg.n_tap).map(|_| uniform_in_disc(cfg.radius_m, rng)).collect();
    let rap_pos: Vec<[f64; 2]> = (0..cfg.n_rap).map(|_| uniform_in_disc(cfg.radius_m, rng)).collect();

    let place_user = |rng: &mut R| -> Result<[f64; 2]> {
        for _ in 0..MAX_PLACEMENT_RETRIES {
            let p = uniform_in_disc(cfg.radius_m, rng);
            let ok = tap_pos
                .iter()
                .chain(rap_pos.iter())
                .all(|ap| distance(p, *ap) >= cfg.protect_m);
            if ok {
                return Ok(p);
            }
        }
        Err(Error::GeometryInfeasible(format!(
            "could not place a user at protection distance {} m within {} attempts",
            cfg.protect_m, MAX_PLACEMENT_RETRIES
        )))
    };

    let mut ul_pos = Vec::with_capacity(cfg.n_ul_users);
    for _ in 0..cfg.n_ul_users {
        ul_pos.push(place_user(rng)?);
    }
    let mut dl_pos = Vec::with_capacity(cfg.n_dl_users);
    for _ in 0..cfg.n_dl_users {
        dl_pos.push(place_user(rng)?);
    }

    let gain = |a: [f64; 2], b: [f64; 2], rng: &mut R| -> Result<f64> {
        // Coincident nodes cannot occur for user-AP links (protection
        // distance); clamp AP-AP / user-user distances away from zero.
        let d = distance(a, b).max(1e-3);
        large_scale_gain(d, cfg, rng)
    };

    let mut beta_dl = vec![vec![0.0; cfg.n_tap]; cfg.n_dl_users];
    for k in 0..cfg.n_dl_users {
        for m in 0..cfg.n_tap {
            beta_dl[k][m] = gain(dl_pos[k], tap_pos[m], rng)?;
        }
    }
    let mut beta_ul = vec![vec![0.0; cfg.n_rap]; cfg.n_ul_users];
    for j in 0..cfg.n_ul_users {
        for z in 0..cfg.n_rap {
            beta_ul[j][z] = gain(ul_pos[j], rap_pos[z], rng)?;
        }
    }
    let mut beta_ap = vec![vec![0.0; cfg.n_rap]; cfg.n_tap];
    for m in 0..cfg.n_tap {
        for z in 0..cfg.n_rap {
            beta_ap[m][z] = gain(tap_pos[m], rap_pos[z], rng)?;
        }
    }
    let mut beta_iui = vec![vec![0.0; cfg.n_ul_users]; cfg.n_dl_users];
    for k in 0..cfg.n_dl_users {
        for j in 0..cfg.n_ul_users {
            beta_iui[k][j] = gain(dl_pos[k], ul_pos[j], rng)?;
        }
    }

    Ok(Scenario {
        tap_pos,
        rap_pos,
        ul_pos,
        dl_pos,
        beta_dl,
        beta_ul,
        beta_ap,
        beta_iui,
    })
}

/// JSON shape of a [`Scenario`] with gains in dB for readability.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioJson {
    tap_pos: Vec<[f64; 2]>,
    rap_pos: Vec<[f64; 2]>,
    ul_pos: Vec<[f64; 2]>,
    dl_pos: Vec<[f64; 2]>,
    beta_dl_db: Vec<Vec<f64>>,
    beta_ul_db: Vec<Vec<f64>>,
    beta_ap_db: Vec<Vec<f64>>,
    beta_iui_db: Vec<Vec<f64>>,
}

fn to_db(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| row.iter().map(|&b| 10.0 * b.log10()).collect())
        .collect()
}

fn from_db(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| row.iter().map(|&db| 10f64.powf(db / 10.0)).collect())
        .collect()
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        let j = ScenarioJson {
            tap_pos: self.tap_pos.clone(),
            rap_pos: self.rap_pos.clone(),
            ul_pos: self.ul_pos.clone(),
            dl_pos: self.dl_pos.clone(),
            beta_dl_db: to_db(&self.beta_dl),
            beta_ul_db: to_db(&self.beta_ul),
            beta_ap_db: to_db(&self.beta_ap),
            beta_iui_db: to_db(&self.beta_iui),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ScenarioJson = serde_json::from_str(s)?;
        Ok(Scenario {
            tap_pos: j.tap_pos,
            rap_pos: j.rap_pos,
            ul_pos: j.ul_pos,
            dl_pos: j.dl_pos,
            beta_dl: from_db(&j.beta_dl_db),
            beta_ul: from_db(&j.beta_ul_db),
            beta_ap: from_db(&j.beta_ap_db),
            beta_iui: from_db(&j.beta_iui_db),
        })
    }
}
