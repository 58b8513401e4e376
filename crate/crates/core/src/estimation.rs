//! MMSE channel estimation with coupling design and RF factorisation.
//!
//! Inter-AP links: the pilot observation after decorrelation is
//! `vec(Y) = sqrt(rho) A vec(H) + vec(N)` with coupling `A = W^T kron U^H`.
//! The MMSE-optimal coupling diagonalises the channel covariance and pours
//! the trace budget `N_RF^2` over its eigendirections by water-filling
//! (`A = Sigma_A U_R^H`). The physically realisable RF matrices are then the
//! nearest Kronecker factors of `A`, found by the rearrangement trick and a
//! rank-one SVD.
//!
//! User-AP links: equivalent channels seen through the analog front-end are
//! estimated per user from orthogonal pilots, with the estimate/error
//! covariance split `R_eq = R_hat + R_tilde` consumed by the rate bounds.

use crate::linalg::{sample_cn, unvec, vec_of, C64, CMat, CVec};
use crate::{Error, Result};
use rand::Rng;

/// Eigenvalues at or below `RANK_TOL * lambda_max` count as null directions.
pub const RANK_TOL: f64 = 1e-10;

/// Water-filling allocation for the estimation-MSE objective.
///
/// Minimises `sum_i 1/(y_i + rho/sigma2 * x_i)` with `y_i = 1/lambda_i` over
/// `x_i >= 0`, `sum_i x_i = budget`, at most `max_active` positive entries.
/// Eigenvalues must be sorted descending; null directions (relative to
/// [`RANK_TOL`]) never receive power. The common KKT level on the active set
/// is `c = (rho/sigma2 * budget + sum_active y_i) / |active|` and
/// `x_i = (c - y_i) * sigma2 / rho`; the active set is shrunk from its
/// smallest eigenvalue until all allocations are non-negative.
pub fn waterfill(
    eigvals: &[f64],
    rho: f64,
    sigma2: f64,
    budget: f64,
    max_active: usize,
) -> Result<Vec<f64>> {
    if rho <= 0.0 || sigma2 <= 0.0 || budget <= 0.0 {
        return Err(Error::Domain(
            "waterfill needs rho, sigma2, budget > 0".into(),
        ));
    }
    for w in eigvals.windows(2) {
        if w[1] > w[0] + 1e-12 * w[0].abs().max(1.0) {
            return Err(Error::Domain("eigenvalues must be sorted descending".into()));
        }
    }
    let lmax = eigvals.first().cloned().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::NoSignalDirection);
    }
    let admissible = eigvals
        .iter()
        .take_while(|&&l| l > RANK_TOL * lmax)
        .count();
    if admissible == 0 {
        return Err(Error::NoSignalDirection);
    }

    let gain = rho / sigma2;
    let mut active = admissible.min(max_active).max(1);
    let mut x = vec![0.0; eigvals.len()];
    loop {
        let y: Vec<f64> = eigvals[..active].iter().map(|&l| 1.0 / l).collect();
        let level = (gain * budget + y.iter().sum::<f64>()) / active as f64;
        let alloc: Vec<f64> = y.iter().map(|&yi| (level - yi) / gain).collect();
        if alloc.iter().all(|&a| a >= 0.0) || active == 1 {
            for (i, a) in alloc.into_iter().enumerate() {
                x[i] = a.max(0.0);
            }
            return Ok(x);
        }
        // Drop the smallest-eigenvalue active direction and re-level.
        active -= 1;
    }
}

/// Result of the optimal coupling design for one inter-AP link.
#[derive(Debug, Clone)]
pub struct CouplingDesign {
    /// Covariance eigenvalues, descending (only the computed ones; the dense
    /// path yields all n^2, the factored path only the nonzero ones).
    pub eigvals: Vec<f64>,
    /// Water-filling allocation aligned with `eigvals`.
    pub allocation: Vec<f64>,
    /// The coupling matrix `A = Sigma_A U_R^H`, shape n_rf^2 x n^2.
    pub coupling: CMat,
}

fn coupling_from_eigen(
    eigvals: &[f64],
    eigvecs: &CMat,
    rho: f64,
    sigma2: f64,
    n_rf: usize,
    n_sq: usize,
) -> Result<CouplingDesign> {
    let budget = (n_rf * n_rf) as f64;
    let x = waterfill(eigvals, rho, sigma2, budget, n_rf * n_rf)?;
    let mut a = CMat::zeros(n_rf * n_rf, n_sq);
    for (i, &xi) in x.iter().enumerate().take(n_rf * n_rf) {
        if xi > 0.0 {
            let row = eigvecs.column(i).adjoint() * C64::new(xi.sqrt(), 0.0);
            a.row_mut(i).copy_from(&row);
        }
    }
    Ok(CouplingDesign {
        eigvals: eigvals.to_vec(),
        allocation: x,
        coupling: a,
    })
}

/// Optimal coupling from a dense Hermitian PSD covariance (n^2 x n^2).
pub fn optimal_coupling(r_ap: &CMat, rho: f64, sigma2: f64, n_rf: usize) -> Result<CouplingDesign> {
    let (vals, vecs) = crate::linalg::hermitian_eigen_desc(r_ap);
    coupling_from_eigen(&vals, &vecs, rho, sigma2, n_rf, r_ap.ncols())
}

/// Optimal coupling from the low-rank covariance factor (`R = F F^H`).
///
/// The nonzero eigenpairs come from the L x L Gram matrix `F^H F`, so no
/// n^2 x n^2 matrix is ever formed; this is what makes large-array sweeps
/// affordable.
pub fn optimal_coupling_from_factor(
    factor: &CMat,
    rho: f64,
    sigma2: f64,
    n_rf: usize,
) -> Result<CouplingDesign> {
    let gram = factor.adjoint() * factor;
    let (gvals, gvecs) = crate::linalg::hermitian_eigen_desc(&gram);
    let lmax = gvals.first().cloned().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::NoSignalDirection);
    }
    let kept = gvals.iter().take_while(|&&l| l > RANK_TOL * lmax).count();
    let mut vecs = CMat::zeros(factor.nrows(), kept);
    for i in 0..kept {
        let u = factor * gvecs.column(i) / C64::new(gvals[i].sqrt(), 0.0);
        vecs.set_column(i, &u);
    }
    coupling_from_eigen(&gvals[..kept], &vecs, rho, sigma2, n_rf, factor.nrows())
}

/// Estimation MSE of a coupling candidate on a full-rank covariance:
/// `Tr[(R^{-1} + rho/sigma2 A^H A)^{-1}]`.
pub fn coupling_mse(r_ap: &CMat, a: &CMat, rho: f64, sigma2: f64) -> f64 {
    let r_inv = r_ap
        .clone()
        .try_inverse()
        .expect("coupling_mse requires full-rank covariance");
    let m = r_inv + a.adjoint() * a * C64::new(rho / sigma2, 0.0);
    let m_inv = m.try_inverse().expect("regularised matrix is invertible");
    (0..m_inv.nrows()).map(|i| m_inv[(i, i)].re).sum()
}

/// Rearrange `A` (pr x qs) so that `||A - B kron C||_F` equals
/// `||A_tilde - vec(B) vec(C)^T||_F` for every B (p x q), C (r x s).
///
/// The output has shape pq x rs with
/// `A_tilde[(j*p + i, l*r + k)] = A[(i*r + k, j*s + l)]`.
pub fn vanloan_rearrange(a: &CMat, p: usize, q: usize, r: usize, s: usize) -> Result<CMat> {
    if a.nrows() != p * r || a.ncols() != q * s {
        return Err(Error::Dimension(format!(
            "rearrange expects {}x{}, got {}x{}",
            p * r,
            q * s,
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = CMat::zeros(p * q, r * s);
    for i in 0..p {
        for j in 0..q {
            for k in 0..r {
                for l in 0..s {
                    out[(j * p + i, l * r + k)] = a[(i * r + k, j * s + l)];
                }
            }
        }
    }
    Ok(out)
}

/// Matrices whose short side stays at or below this go through the full SVD;
/// larger ones use power iteration for the single triplet that is needed.
const FULL_SVD_LIMIT: usize = 64;

/// Dominant singular triplet `(sigma1, u1, v1)` of a matrix.
///
/// Tries a deterministic range sketch first: the rearranged coupling
/// matrices this is built for have rank at most L^2, so a 16-column sketch
/// captures them exactly and the triplet comes from a 16-row SVD. Matrices
/// the sketch cannot capture fall back to power iteration on `A^H A`, and
/// to the full SVD if that stalls on near-tied leading singular values.
/// Deterministic on every path.
fn top_singular_triplet(a: &CMat) -> (f64, CVec, CVec) {
    let cols = a.ncols();
    let sketch = 16usize.min(cols).min(a.nrows());
    if sketch < a.nrows().min(cols) {
        let mut rng = crate::linalg::rng_for(0x5eed_cafe, 0);
        let omega = crate::linalg::sample_cn_matrix(cols, sketch, 1.0, &mut rng);
        let q = (a * omega).qr().q();
        let b = q.adjoint() * a; // sketch x cols
        if b.norm_squared() >= (1.0 - 1e-9) * a.norm_squared() {
            let svd = b.svd(true, true);
            let u = &q * svd.u.as_ref().expect("svd u").column(0);
            let v = svd
                .v_t
                .as_ref()
                .expect("svd v_t")
                .row(0)
                .adjoint()
                .column(0)
                .into_owned();
            return (svd.singular_values[0], u, v);
        }
    }
    let mut v = CVec::from_fn(cols, |i, _| {
        C64::new(1.0 / (i + 1) as f64, 0.3 / (0.7 * i as f64 + 1.0))
    });
    v /= C64::new(v.norm(), 0.0);
    let mut sigma = 0.0;
    for it in 0..1000 {
        let u_raw = a * &v;
        let gain = u_raw.norm();
        if gain == 0.0 {
            return (0.0, CVec::zeros(a.nrows()), v);
        }
        let w = a.adjoint() * (u_raw / C64::new(gain, 0.0));
        let s = w.norm();
        let v_new = w / C64::new(s, 0.0);
        // Residual quality depends only on the captured energy sigma, so a
        // stabilised sigma is the stopping signal; with near-tied leading
        // singular values the iterate may keep rotating inside the top
        // subspace, where every direction is an equally good rank-one factor.
        let settled = it >= 4 && (s - sigma).abs() <= 1e-11 * s.max(1e-300);
        sigma = s;
        v = v_new;
        if settled {
            let u = a * &v / C64::new(sigma, 0.0);
            return (sigma, u, v);
        }
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u").column(0).into_owned();
    let v = svd
        .v_t
        .as_ref()
        .expect("svd v_t")
        .row(0)
        .adjoint()
        .column(0)
        .into_owned();
    (svd.singular_values[0], u, v)
}

/// Nearest Kronecker factorisation: find W, U (both n x n_rf) minimising
/// `||A - W^T kron U^H||_F` via the rank-one SVD of the rearranged matrix.
///
/// Returns `(W, U)`; the attained residual equals the tail singular energy
/// `sqrt(sum_{r>=2} sigma_r^2)` of the rearrangement.
pub fn kron_factorize(a: &CMat, n_ant: usize, n_rf: usize) -> Result<(CMat, CMat)> {
    let tilde = vanloan_rearrange(a, n_rf, n_ant, n_rf, n_ant)?;
    let (s1, u1, v1) = if tilde.nrows().min(tilde.ncols()) <= FULL_SVD_LIMIT {
        let svd = tilde.svd(true, true);
        let u = svd.u.as_ref().expect("svd u").column(0).into_owned();
        let v = svd
            .v_t
            .as_ref()
            .expect("svd v_t")
            .row(0)
            .adjoint()
            .column(0)
            .into_owned();
        (svd.singular_values[0], u, v)
    } else {
        top_singular_triplet(&tilde)
    };
    // tilde ~= sigma1 u1 v1^H; the second factor enters the rearrangement
    // identity through a plain transpose, hence the conjugate of v1.
    let s = s1.sqrt();
    let w_t_vec = u1 * C64::new(s, 0.0);
    let u_h_vec = v1.conjugate() * C64::new(s, 0.0);
    let w_t = unvec(&w_t_vec, n_rf, n_ant);
    let u_h = unvec(&u_h_vec, n_rf, n_ant);
    Ok((w_t.transpose(), u_h.adjoint()))
}

/// Received inter-AP pilot block after decorrelation:
/// `Y = sqrt(rho) U^H H W + N`, N i.i.d. CN(0, sigma_tau^2).
pub fn simulate_interap_pilot(
    h: &CMat,
    w: &CMat,
    u: &CMat,
    rho: f64,
    sigma_tau: f64,
    rng: &mut impl Rng,
) -> CMat {
    let mut y = u.adjoint() * h * w * C64::new(rho.sqrt(), 0.0);
    let var = sigma_tau * sigma_tau;
    for e in y.iter_mut() {
        *e += sample_cn(var, rng);
    }
    y
}

/// MMSE estimate of an inter-AP channel and its error covariance.
#[derive(Debug, Clone)]
pub struct InterApEstimate {
    /// Estimated channel matrix (n x n).
    pub h_hat: CMat,
    /// Error covariance of `vec(H - H_hat)`, shape n^2 x n^2.
    pub error_cov: CMat,
}

/// MMSE estimation of `vec(H)` from `vec(Y) = sqrt(rho) A vec(H) + n`:
///
/// `vec(H_hat) = sqrt(rho) R A^H (rho A R A^H + sigma2 I)^{-1} vec(Y)` and
/// `C = R - rho R A^H (rho A R A^H + sigma2 I)^{-1} A R`, the non-inverse
/// form that stays valid for rank-deficient R.
pub fn mmse_interap(
    y_tilde: &CMat,
    r_ap: &CMat,
    a: &CMat,
    rho: f64,
    sigma2: f64,
) -> Result<InterApEstimate> {
    if sigma2 <= 0.0 {
        return Err(Error::Domain("pilot noise variance must be positive".into()));
    }
    let n_sq = r_ap.nrows();
    let n = (n_sq as f64).sqrt().round() as usize;
    if n * n != n_sq || a.ncols() != n_sq {
        return Err(Error::Dimension("covariance must be n^2 x n^2 and match A".into()));
    }
    let m = a.nrows();
    if y_tilde.len() != m {
        return Err(Error::Dimension("observation length must equal A rows".into()));
    }
    let g = r_ap * a.adjoint(); // n^2 x m
    let mut inner = a * &g * C64::new(rho, 0.0);
    for i in 0..m {
        inner[(i, i)] += C64::new(sigma2, 0.0);
    }
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::SingularChannel("pilot Gram matrix not positive definite".into()))?;
    let y = vec_of(y_tilde);
    let h_vec = &g * chol.solve(&y) * C64::new(rho.sqrt(), 0.0);
    let error_cov = r_ap - &g * chol.solve(&g.adjoint()) * C64::new(rho, 0.0);
    Ok(InterApEstimate {
        h_hat: unvec(&h_vec, n, n),
        error_cov,
    })
}

/// Estimate-only fast path using the covariance factor (`R = F F^H`).
///
/// `analog = Some((W, U))` applies the coupling `W^T kron U^H` implicitly;
/// `None` means full-digital observation (`A = I`). Produces exactly the
/// [`mmse_interap`] estimate (checked in tests) at O(n^2 L) cost via the
/// matrix-inversion lemma, without materialising any n^2 x n^2 matrix.
pub fn mmse_interap_estimate_lowrank(
    y_tilde: &CMat,
    factor: &CMat,
    analog: Option<(&CMat, &CMat)>,
    rho: f64,
    sigma2: f64,
) -> Result<CMat> {
    if sigma2 <= 0.0 {
        return Err(Error::Domain("pilot noise variance must be positive".into()));
    }
    let n_sq = factor.nrows();
    let n = (n_sq as f64).sqrt().round() as usize;
    let l = factor.ncols();
    // P = A F, built column-wise as vec(U^H X_l W).
    let p = match analog {
        Some((w, u)) => {
            let m = w.ncols() * u.ncols();
            let mut p = CMat::zeros(m, l);
            for c in 0..l {
                let x = unvec(&factor.column(c).into_owned(), n, n);
                p.set_column(c, &vec_of(&(u.adjoint() * x * w)));
            }
            p
        }
        None => factor.clone(),
    };
    let y = vec_of(y_tilde);
    if y.len() != p.nrows() {
        return Err(Error::Dimension("observation does not match coupling shape".into()));
    }
    // (rho P P^H + sigma2 I)^{-1} y by the inversion lemma.
    let mut core = p.adjoint() * &p;
    for i in 0..l {
        core[(i, i)] += C64::new(sigma2 / rho, 0.0);
    }
    let chol = core
        .cholesky()
        .ok_or_else(|| Error::SingularChannel("low-rank core not positive definite".into()))?;
    let pty = p.adjoint() * &y;
    let m_inv_y = (&y - &p * chol.solve(&pty)) / C64::new(sigma2, 0.0);
    let h_vec = factor * (p.adjoint() * m_inv_y) * C64::new(rho.sqrt(), 0.0);
    Ok(unvec(&h_vec, n, n))
}

/// Equivalent-channel covariance seen through an analog front-end:
/// `R_eq = analog^H R analog`.
pub fn equivalent_covariance(analog: &CMat, r_link: &CMat) -> CMat {
    analog.adjoint() * r_link * analog
}

/// Orthonormal pilot assignment plus the power/noise bookkeeping of one
/// training phase.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    /// Column u is the pilot sequence of user u (tau x users).
    pub matrix: CMat,
    /// Pilot symbol power rho.
    pub power: f64,
    /// Noise standard deviation (total complex variance = noise_std^2).
    pub noise_std: f64,
}

impl PilotBlock {
    /// Identity-embedded orthonormal pilots of length `tau` for `users` users.
    pub fn orthonormal(tau: usize, users: usize, power: f64, noise_std: f64) -> Result<Self> {
        if tau < users {
            return Err(Error::ContaminationUnsupported { pilots: tau, users });
        }
        let mut matrix = CMat::zeros(tau, users);
        for u in 0..users {
            matrix[(u, u)] = C64::new(1.0, 0.0);
        }
        Ok(PilotBlock {
            matrix,
            power,
            noise_std,
        })
    }

    /// Checks the Gram matrix of the pilot columns is the identity.
    pub fn verify_gram(&self) -> Result<()> {
        let gram = self.matrix.adjoint() * &self.matrix;
        let users = self.matrix.ncols();
        let eye = CMat::identity(users, users);
        if (gram - eye).norm() > 1e-10 {
            return Err(Error::Config("pilot Gram matrix is not the identity".into()));
        }
        Ok(())
    }
}

/// Received user pilot block at one AP:
/// `Y = sum_u sqrt(rho) (analog^H h_u) phi_u^T + N` (n_rf x tau).
pub fn simulate_user_pilot(
    links: &[CVec],
    analog: &CMat,
    pilots: &PilotBlock,
    rng: &mut impl Rng,
) -> Result<CMat> {
    let tau = pilots.matrix.nrows();
    if tau < links.len() {
        return Err(Error::ContaminationUnsupported {
            pilots: tau,
            users: links.len(),
        });
    }
    pilots.verify_gram()?;
    let n_rf = analog.ncols();
    let mut y = CMat::zeros(n_rf, tau);
    let amp = C64::new(pilots.power.sqrt(), 0.0);
    for (u, link) in links.iter().enumerate() {
        let eq = analog.adjoint() * link;
        y += (&eq * pilots.matrix.column(u).transpose()) * amp;
    }
    let var = pilots.noise_std * pilots.noise_std;
    if var > 0.0 {
        for e in y.iter_mut() {
            *e += sample_cn(var, rng);
        }
    }
    Ok(y)
}

/// MMSE estimate of one user's equivalent channel with its covariance split.
#[derive(Debug, Clone)]
pub struct EquivalentEstimate {
    /// Estimated equivalent channel (n_rf).
    pub est: CVec,
    /// Prior covariance `R_eq` of the equivalent channel.
    pub r_eq: CMat,
    /// Covariance of the estimate.
    pub r_hat: CMat,
    /// Covariance of the estimation error; `r_hat + r_tilde = r_eq`.
    pub r_tilde: CMat,
}

/// Per-user equivalent-channel MMSE:
/// `est = sqrt(rho) R_u Q^{-1} Y phi_u^*` with
/// `Q = sum_u' rho R_u' |phi_u'^T phi_u^*|^2 + sigma2 I`,
/// `R_hat = rho R Q^{-1} R^H`, `R_tilde = R - R_hat`.
pub fn mmse_equivalent(
    y: &CMat,
    user: usize,
    pilots: &PilotBlock,
    r_eq_all: &[CMat],
) -> Result<EquivalentEstimate> {
    let rho = pilots.power;
    let sigma2 = pilots.noise_std * pilots.noise_std;
    if sigma2 <= 0.0 {
        return Err(Error::Domain("pilot noise variance must be positive".into()));
    }
    let n_rf = y.nrows();
    let phi_u = pilots.matrix.column(user).conjugate();
    let mut q = CMat::zeros(n_rf, n_rf);
    for (u, r) in r_eq_all.iter().enumerate() {
        let overlap = (pilots.matrix.column(u).transpose() * &phi_u)[(0, 0)].norm_sqr();
        if overlap > 0.0 {
            q += r * C64::new(rho * overlap, 0.0);
        }
    }
    for i in 0..n_rf {
        q[(i, i)] += C64::new(sigma2, 0.0);
    }
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::SingularChannel("equivalent pilot Gram not PD".into()))?;
    let r_u = &r_eq_all[user];
    let projected = y * phi_u;
    let est = r_u * chol.solve(&projected) * C64::new(rho.sqrt(), 0.0);
    let r_hat = r_u * chol.solve(&r_u.adjoint()) * C64::new(rho, 0.0);
    let r_tilde = r_u - &r_hat;
    Ok(EquivalentEstimate {
        est,
        r_eq: r_u.clone(),
        r_hat,
        r_tilde,
    })
}

/// Normalised mean square error `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(est: &CMat, truth: &CMat) -> Result<f64> {
    let denom = truth.norm_squared();
    if denom <= 0.0 {
        return Err(Error::Domain("nmse undefined for zero truth".into()));
    }
    Ok((est - truth).norm_squared() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        interap_channel_from_paths, interap_covariance, sample_interap_channel, steering_vector,
        vector_channel_from_paths, vector_covariance, InterApAngles,
    };
    use crate::linalg::{hermitian_eigen_desc, rng_for, sample_cn_matrix};

    fn waterfill_objective(eigvals: &[f64], x: &[f64], gain: f64) -> f64 {
        eigvals
            .iter()
            .zip(x)
            .map(|(&l, &xi)| 1.0 / (1.0 / l + gain * xi))
            .sum()
    }

    #[test]
    fn waterfill_symmetric_case() {
        let x = waterfill(&[1.0, 1.0], 1.0, 1.0, 1.0, 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn waterfill_hand_solved_level() {
        // y = [0.5, 1], level = (1 + 1.5)/2 = 1.25, x = [0.75, 0.25].
        let x = waterfill(&[2.0, 1.0], 1.0, 1.0, 1.0, 2).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-12);
        assert!((x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn waterfill_excludes_null_direction() {
        let x = waterfill(&[1.0, 1e-15], 1.0, 1.0, 1.0, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn waterfill_budget_exact_and_kkt_level_uniform() {
        let eig = [5.0, 2.0, 0.9, 0.4];
        let (rho, sigma2, budget) = (2.0, 0.5, 3.0);
        let x = waterfill(&eig, rho, sigma2, budget, 4).unwrap();
        assert!((x.iter().sum::<f64>() - budget).abs() < 1e-9);
        let gain = rho / sigma2;
        let levels: Vec<f64> = eig
            .iter()
            .zip(&x)
            .filter(|(_, &xi)| xi > 0.0)
            .map(|(&l, &xi)| 1.0 / l + gain * xi)
            .collect();
        for w in levels.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9, "KKT level must be uniform");
        }
    }

    #[test]
    fn waterfill_drops_weak_directions_when_budget_small() {
        // Tiny budget: the weakest eigenvalue would get negative allocation.
        let eig = [10.0, 1.0, 0.01];
        let x = waterfill(&eig, 1.0, 1.0, 0.05, 3).unwrap();
        assert!((x.iter().sum::<f64>() - 0.05).abs() < 1e-12);
        assert_eq!(x[2], 0.0, "weak direction must be shut off");
        assert!(x[0] > 0.0);
    }

    #[test]
    fn waterfill_beats_simplex_grid_oracle() {
        // Brute-force oracle: enumerate the simplex {x >= 0, sum x = budget}
        // on a grid of ~10^3 points for 4 eigenvalues and compare objectives.
        let eig = [3.0, 1.5, 0.7, 0.2];
        let (rho, sigma2, budget) = (1.0, 1.0, 1.0);
        let gain = rho / sigma2;
        let x = waterfill(&eig, rho, sigma2, budget, 4).unwrap();
        let obj = waterfill_objective(&eig, &x, gain);

        let steps = 16usize; // C(19,3) = 969 grid points
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                for k in 0..=(steps - i - j) {
                    let l = steps - i - j - k;
                    let cand = [
                        budget * i as f64 / steps as f64,
                        budget * j as f64 / steps as f64,
                        budget * k as f64 / steps as f64,
                        budget * l as f64 / steps as f64,
                    ];
                    best = best.min(waterfill_objective(&eig, &cand, gain));
                }
            }
        }
        assert!(obj <= best + 1e-12, "waterfill must beat every grid point");
        assert!(best - obj <= 1e-3, "grid gap {}", best - obj);
    }

    #[test]
    fn waterfill_rejects_degenerate_input() {
        assert!(matches!(
            waterfill(&[0.0, 0.0], 1.0, 1.0, 1.0, 2),
            Err(Error::NoSignalDirection)
        ));
        assert!(waterfill(&[1.0], 0.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn coupling_identity_covariance_uniform_allocation() {
        let n_ant = 3;
        let n_rf = 2;
        let r = CMat::identity(n_ant * n_ant, n_ant * n_ant);
        let d = optimal_coupling(&r, 1.0, 1.0, n_rf).unwrap();
        let slots = n_rf * n_rf;
        for i in 0..slots {
            assert!((d.allocation[i] - 1.0).abs() < 1e-9, "uniform over slots");
        }
        for &xi in &d.allocation[slots..] {
            assert_eq!(xi, 0.0);
        }
        let budget: f64 = (d.coupling.clone() * d.coupling.adjoint())
            .diagonal()
            .iter()
            .map(|z| z.re)
            .sum();
        assert!((budget - slots as f64).abs() < 1e-9);
    }

    #[test]
    fn coupling_trace_budget_met_on_random_covariance() {
        let mut rng = rng_for(31, 0);
        let (_, angles) = sample_interap_channel(1.0, 3, 4, &mut rng);
        let r = interap_covariance(&angles, 1.0, 4).unwrap();
        let d = optimal_coupling(&r, 2.0, 1.0, 2).unwrap();
        let tr: f64 = (d.coupling.clone() * d.coupling.adjoint())
            .diagonal()
            .iter()
            .map(|z| z.re)
            .sum();
        assert!((tr - 4.0).abs() < 1e-9);
    }

    #[test]
    fn coupling_factor_path_matches_dense_path() {
        let mut rng = rng_for(32, 0);
        let (_, angles) = sample_interap_channel(1.0, 3, 5, &mut rng);
        let beta = 0.7;
        let fac = crate::channel::interap_covariance_factor(&angles, beta, 5);
        let dense = interap_covariance(&angles, beta, 5).unwrap();
        let a = optimal_coupling(&dense, 1.5, 0.8, 3).unwrap();
        let b = optimal_coupling_from_factor(&fac, 1.5, 0.8, 3).unwrap();
        // Eigenvectors are phase-ambiguous, so compare A^H A, which is what
        // the estimator consumes.
        let lhs = a.coupling.adjoint() * &a.coupling;
        let rhs = b.coupling.adjoint() * &b.coupling;
        assert!((lhs - rhs).norm() < 1e-8);
        for (x, y) in a.allocation.iter().zip(&b.allocation) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn coupling_beats_random_candidates_in_mse() {
        let mut rng = rng_for(33, 0);
        let n_ant = 2;
        let n_rf = 2;
        let n_sq = n_ant * n_ant;
        // Full-rank PSD covariance.
        let base = sample_cn_matrix(n_sq, n_sq, 1.0, &mut rng);
        let mut r = &base * base.adjoint();
        for i in 0..n_sq {
            r[(i, i)] += C64::new(0.5, 0.0);
        }
        let (rho, sigma2) = (1.0, 1.0);
        let d = optimal_coupling(&r, rho, sigma2, n_rf).unwrap();
        let opt_mse = coupling_mse(&r, &d.coupling, rho, sigma2);
        let budget = (n_rf * n_rf) as f64;
        for _ in 0..100 {
            let cand = sample_cn_matrix(n_rf * n_rf, n_sq, 1.0, &mut rng);
            let scale = (budget / cand.norm_squared()).sqrt();
            let cand = cand * C64::new(scale, 0.0);
            let mse = coupling_mse(&r, &cand, rho, sigma2);
            assert!(
                opt_mse <= mse + 1e-9,
                "optimal {opt_mse} must not lose to random {mse}"
            );
        }
    }

    #[test]
    fn rearrange_is_norm_preserving_permutation() {
        let mut rng = rng_for(34, 0);
        let (p, q, r, s) = (2, 3, 2, 3);
        let a = sample_cn_matrix(p * r, q * s, 1.0, &mut rng);
        let t = vanloan_rearrange(&a, p, q, r, s).unwrap();
        assert!((a.norm() - t.norm()).abs() < 1e-12);
    }

    #[test]
    fn rearrange_of_kronecker_product_is_rank_one() {
        let mut rng = rng_for(35, 0);
        let b = sample_cn_matrix(2, 4, 1.0, &mut rng);
        let c = sample_cn_matrix(3, 5, 1.0, &mut rng);
        let a = b.kronecker(&c);
        let t = vanloan_rearrange(&a, 2, 4, 3, 5).unwrap();
        let svd = t.clone().svd(false, false);
        for i in 1..svd.singular_values.len() {
            assert!(svd.singular_values[i] < 1e-10 * svd.singular_values[0]);
        }
        // And the rank-one factors are the vecs of B and C.
        let expect = vec_of(&b) * vec_of(&c).transpose();
        assert!((t - expect).norm() < 1e-12);
    }

    #[test]
    fn rearrange_identity_holds_for_random_pairs() {
        let mut rng = rng_for(36, 0);
        let (p, q, r, s) = (2, 2, 3, 3);
        let a = sample_cn_matrix(p * r, q * s, 1.0, &mut rng);
        let t = vanloan_rearrange(&a, p, q, r, s).unwrap();
        for _ in 0..20 {
            let b = sample_cn_matrix(p, q, 1.0, &mut rng);
            let c = sample_cn_matrix(r, s, 1.0, &mut rng);
            let lhs = (&a - b.kronecker(&c)).norm();
            let rhs = (&t - vec_of(&b) * vec_of(&c).transpose()).norm();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn rearrange_rejects_bad_shape() {
        let a = CMat::zeros(4, 4);
        assert!(vanloan_rearrange(&a, 2, 2, 3, 2).is_err());
    }

    #[test]
    fn kron_factorize_exact_input_reconstructs() {
        let mut rng = rng_for(37, 0);
        let (n_ant, n_rf) = (4, 2);
        let w0 = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
        let u0 = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
        let a = w0.transpose().kronecker(&u0.adjoint());
        let (w, u) = kron_factorize(&a, n_ant, n_rf).unwrap();
        let rec = w.transpose().kronecker(&u.adjoint());
        assert!((rec - &a).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn kron_factorize_residual_equals_tail_energy() {
        let mut rng = rng_for(38, 0);
        let (n_ant, n_rf) = (3, 2);
        let a = sample_cn_matrix(n_rf * n_rf, n_ant * n_ant, 1.0, &mut rng);
        let (w, u) = kron_factorize(&a, n_ant, n_rf).unwrap();
        let residual = (&a - w.transpose().kronecker(&u.adjoint())).norm();
        let tilde = vanloan_rearrange(&a, n_rf, n_ant, n_rf, n_ant).unwrap();
        let svd = tilde.svd(false, false);
        let tail: f64 = svd.singular_values.iter().skip(1).map(|s| s * s).sum();
        assert!((residual - tail.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn kron_factorize_power_iteration_matches_full_svd() {
        // n_rf * n_ant = 72 > FULL_SVD_LIMIT exercises the iterative path;
        // its residual must match the dense-SVD optimum.
        let mut rng = rng_for(139, 0);
        let (n_ant, n_rf) = (24, 3);
        let a = sample_cn_matrix(n_rf * n_rf, n_ant * n_ant, 1.0, &mut rng);
        let (w, u) = kron_factorize(&a, n_ant, n_rf).unwrap();
        let residual = (&a - w.transpose().kronecker(&u.adjoint())).norm();
        let tilde = vanloan_rearrange(&a, n_rf, n_ant, n_rf, n_ant).unwrap();
        let svd = tilde.clone().svd(false, false);
        let tail: f64 = svd.singular_values.iter().skip(1).map(|s| s * s).sum();
        let optimum = tail.sqrt();
        assert!(
            (residual - optimum).abs() < 1e-8 * optimum.max(1.0),
            "iterative residual {residual} vs SVD optimum {optimum}"
        );
    }

    #[test]
    fn kron_factorize_beats_random_kronecker_candidates() {
        let mut rng = rng_for(39, 0);
        let (n_ant, n_rf) = (3, 2);
        let a = sample_cn_matrix(n_rf * n_rf, n_ant * n_ant, 1.0, &mut rng);
        let (w, u) = kron_factorize(&a, n_ant, n_rf).unwrap();
        let best = (&a - w.transpose().kronecker(&u.adjoint())).norm();
        for _ in 0..100 {
            let bw = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
            let bu = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
            let dir = bw.transpose().kronecker(&bu.adjoint());
            // Optimal scaling of the candidate direction: even with the best
            // complex scale, a random Kronecker direction must lose.
            let inner: C64 = dir.iter().zip(a.iter()).map(|(d, x)| d.conj() * x).sum();
            let scale = inner / C64::new(dir.norm_squared(), 0.0);
            let resid = (&a - dir * scale).norm();
            assert!(best <= resid + 1e-9);
        }
    }

    #[test]
    fn interap_pilot_noiseless_and_vectorised_forms() {
        let mut rng = rng_for(40, 0);
        let (n_ant, n_rf, l) = (4, 2, 3);
        let (h, _) = sample_interap_channel(1.0, l, n_ant, &mut rng);
        let w = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
        let u = sample_cn_matrix(n_ant, n_rf, 1.0, &mut rng);
        let rho = 2.0;
        let y = simulate_interap_pilot(&h, &w, &u, rho, 0.0, &mut rng);
        let direct = u.adjoint() * &h * &w * C64::new(rho.sqrt(), 0.0);
        assert!((&y - direct).norm() < 1e-12);
        // vec(Y) = sqrt(rho) (W^T kron U^H) vec(H).
        let a = w.transpose().kronecker(&u.adjoint());
        let lhs = vec_of(&y);
        let rhs = a * vec_of(&h) * C64::new(rho.sqrt(), 0.0);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn interap_pilot_pure_noise_variance() {
        let mut rng = rng_for(41, 0);
        let h = CMat::zeros(4, 4);
        let w = CMat::identity(4, 2);
        let u = CMat::identity(4, 2);
        let sigma = 0.8;
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..25_000 {
            let y = simulate_interap_pilot(&h, &w, &u, 0.0, sigma, &mut rng);
            acc += y.norm_squared();
            count += y.len();
        }
        let var = acc / count as f64;
        assert!((var - sigma * sigma).abs() < 0.03 * sigma * sigma);
    }

    /// Small helper: one complete coupling + pilot + estimate round.
    fn estimate_once(
        angles: &InterApAngles,
        beta: f64,
        n_ant: usize,
        n_rf: usize,
        rho: f64,
        sigma2: f64,
        rng: &mut impl Rng,
    ) -> (CMat, InterApEstimate, CMat) {
        let r = interap_covariance(angles, beta, n_ant).unwrap();
        let design = optimal_coupling(&r, rho, sigma2, n_rf).unwrap();
        let (w, u) = kron_factorize(&design.coupling, n_ant, n_rf).unwrap();
        let gains: Vec<C64> = (0..angles.arrival.len())
            .map(|_| sample_cn(beta, rng))
            .collect();
        let h = interap_channel_from_paths(&gains, angles, n_ant);
        let y = simulate_interap_pilot(&h, &w, &u, rho, sigma2.sqrt(), rng);
        let a = w.transpose().kronecker(&u.adjoint());
        let est = mmse_interap(&y, &r, &a, rho, sigma2).unwrap();
        (h, est, r)
    }

    #[test]
    fn mmse_interap_no_information_limit() {
        let mut rng = rng_for(42, 0);
        let (n_ant, n_rf) = (3, 2);
        let (_, angles) = sample_interap_channel(1.0, 3, n_ant, &mut rng);
        let r = interap_covariance(&angles, 1.0, n_ant).unwrap();
        let a = CMat::identity(n_rf * n_rf, n_ant * n_ant);
        let y = CMat::from_element(n_rf, n_rf, C64::new(1.0, 0.0));
        let est = mmse_interap(&y, &r, &a, 1e-12, 1.0).unwrap();
        assert!(est.h_hat.norm() < 1e-5);
        assert!((est.error_cov.clone() - &r).norm() < 1e-5 * r.norm());
    }

    #[test]
    fn mmse_interap_reduces_to_textbook_when_a_identity() {
        let mut rng = rng_for(43, 0);
        let n_ant = 3;
        let (_, angles) = sample_interap_channel(1.0, 2, n_ant, &mut rng);
        let beta = 1.3;
        let r = interap_covariance(&angles, beta, n_ant).unwrap();
        let gains: Vec<C64> = (0..2).map(|_| sample_cn(beta, &mut rng)).collect();
        let h = interap_channel_from_paths(&gains, &angles, n_ant);
        let (rho, sigma2): (f64, f64) = (2.0, 0.5);
        let eye_n = CMat::identity(n_ant, n_ant);
        let y = simulate_interap_pilot(&h, &eye_n, &eye_n, rho, sigma2.sqrt(), &mut rng);
        let a = CMat::identity(n_ant * n_ant, n_ant * n_ant);
        let est = mmse_interap(&y, &r, &a, rho, sigma2).unwrap();
        // Textbook full-observation MMSE: sqrt(rho) R (rho R + sigma2 I)^{-1} y.
        let mut m = &r * C64::new(rho, 0.0);
        for i in 0..n_ant * n_ant {
            m[(i, i)] += C64::new(sigma2, 0.0);
        }
        let h_ref = &r
            * m.cholesky().unwrap().solve(&vec_of(&y))
            * C64::new(rho.sqrt(), 0.0);
        assert!((vec_of(&est.h_hat) - h_ref).norm() < 1e-10);
    }

    #[test]
    fn mmse_interap_error_covariance_properties() {
        let mut rng = rng_for(44, 0);
        let (n_ant, n_rf) = (4, 2);
        let (_, angles) = sample_interap_channel(1.0, 3, n_ant, &mut rng);
        let (_, est, r) = estimate_once(&angles, 1.0, n_ant, n_rf, 2.0, 1.0, &mut rng);
        let c = &est.error_cov;
        assert!((c - c.adjoint()).norm() < 1e-10, "C must be Hermitian");
        let (vals, _) = hermitian_eigen_desc(c);
        assert!(vals.iter().all(|&v| v > -1e-10), "C must be PSD");
        let tr_c: f64 = c.diagonal().iter().map(|z| z.re).sum();
        let tr_r: f64 = r.diagonal().iter().map(|z| z.re).sum();
        assert!(tr_c <= tr_r + 1e-10);
    }

    #[test]
    fn mmse_interap_trace_monotone_in_pilot_power() {
        let mut rng = rng_for(45, 0);
        let (n_ant, n_rf) = (3, 2);
        let (_, angles) = sample_interap_channel(1.0, 3, n_ant, &mut rng);
        let r = interap_covariance(&angles, 1.0, n_ant).unwrap();
        let mut prev = f64::INFINITY;
        for &rho in &[0.1, 0.3, 1.0, 3.0, 10.0, 30.0] {
            let design = optimal_coupling(&r, rho, 1.0, n_rf).unwrap();
            let (w, u) = kron_factorize(&design.coupling, n_ant, n_rf).unwrap();
            let a = w.transpose().kronecker(&u.adjoint());
            let y = CMat::zeros(n_rf, n_rf);
            let est = mmse_interap(&y, &r, &a, rho, 1.0).unwrap();
            let tr: f64 = est.error_cov.diagonal().iter().map(|z| z.re).sum();
            assert!(tr <= prev + 1e-12, "trace(C) must not increase with rho");
            prev = tr;
        }
    }

    #[test]
    fn mmse_interap_empirical_mse_matches_trace() {
        let mut rng = rng_for(46, 0);
        let (n_ant, n_rf, l) = (4, 2, 3);
        let beta = 1.0;
        let (_, angles) = sample_interap_channel(beta, l, n_ant, &mut rng);
        let (rho, sigma2) = (3.0, 1.0);
        let r = interap_covariance(&angles, beta, n_ant).unwrap();
        let design = optimal_coupling(&r, rho, sigma2, n_rf).unwrap();
        let (w, u) = kron_factorize(&design.coupling, n_ant, n_rf).unwrap();
        let a = w.transpose().kronecker(&u.adjoint());
        let trials = 2000;
        let mut acc = 0.0;
        let mut c_ref = None;
        for _ in 0..trials {
            let gains: Vec<C64> = (0..l).map(|_| sample_cn(beta, &mut rng)).collect();
            let h = interap_channel_from_paths(&gains, &angles, n_ant);
            let y = simulate_interap_pilot(&h, &w, &u, rho, sigma2.sqrt(), &mut rng);
            let est = mmse_interap(&y, &r, &a, rho, sigma2).unwrap();
            acc += (&est.h_hat - &h).norm_squared();
            c_ref.get_or_insert(est.error_cov);
        }
        let empirical = acc / trials as f64;
        let analytic: f64 = c_ref.unwrap().diagonal().iter().map(|z| z.re).sum();
        let rel = (empirical - analytic).abs() / analytic;
        assert!(rel < 0.03, "MSE {empirical} vs trace(C) {analytic}, rel {rel}");
    }

    #[test]
    fn mmse_interap_orthogonality_principle() {
        let mut rng = rng_for(47, 0);
        let (n_ant, n_rf, l) = (3, 2, 2);
        let beta = 1.0;
        let (_, angles) = sample_interap_channel(beta, l, n_ant, &mut rng);
        let (rho, sigma2) = (2.0, 1.0);
        let r = interap_covariance(&angles, beta, n_ant).unwrap();
        let design = optimal_coupling(&r, rho, sigma2, n_rf).unwrap();
        let (w, u) = kron_factorize(&design.coupling, n_ant, n_rf).unwrap();
        let a = w.transpose().kronecker(&u.adjoint());
        let trials = 2000;
        let nsq = n_ant * n_ant;
        let mut cross = CMat::zeros(nsq, nsq);
        let mut est_power = 0.0;
        let mut err_power = 0.0;
        for _ in 0..trials {
            let gains: Vec<C64> = (0..l).map(|_| sample_cn(beta, &mut rng)).collect();
            let h = interap_channel_from_paths(&gains, &angles, n_ant);
            let y = simulate_interap_pilot(&h, &w, &u, rho, sigma2.sqrt(), &mut rng);
            let est = mmse_interap(&y, &r, &a, rho, sigma2).unwrap();
            let e = vec_of(&est.h_hat);
            let d = vec_of(&h) - &e;
            cross += &e * d.adjoint();
            est_power += e.norm_squared();
            err_power += d.norm_squared();
        }
        cross /= C64::new(trials as f64, 0.0);
        // 5-sigma Monte Carlo band on each entry: the product of two
        // independent zero-mean terms has std ~ sqrt(E|e|^2 E|d|^2 / N)
        // entrywise.
        let scale = ((est_power / trials as f64 / nsq as f64)
            * (err_power / trials as f64 / nsq as f64)
            / trials as f64)
            .sqrt();
        let band = 5.0 * scale;
        for z in cross.iter() {
            assert!(
                z.norm() < band.max(1e-12),
                "orthogonality violated: |{}| > {band}",
                z.norm()
            );
        }
    }

    #[test]
    fn lowrank_estimate_matches_dense_path() {
        let mut rng = rng_for(48, 0);
        let (n_ant, n_rf, l) = (4, 2, 3);
        let beta = 0.9;
        let (_, angles) = sample_interap_channel(beta, l, n_ant, &mut rng);
        let (rho, sigma2) = (2.5, 0.7);
        let r = interap_covariance(&angles, beta, n_ant).unwrap();
        let fac = crate::channel::interap_covariance_factor(&angles, beta, n_ant);
        let design = optimal_coupling(&r, rho, sigma2, n_rf).unwrap();
        let (w, u) = kron_factorize(&design.coupling, n_ant, n_rf).unwrap();
        let gains: Vec<C64> = (0..l).map(|_| sample_cn(beta, &mut rng)).collect();
        let h = interap_channel_from_paths(&gains, &angles, n_ant);
        let y = simulate_interap_pilot(&h, &w, &u, rho, sigma2.sqrt(), &mut rng);
        let a = w.transpose().kronecker(&u.adjoint());
        let dense = mmse_interap(&y, &r, &a, rho, sigma2).unwrap();
        let fast = mmse_interap_estimate_lowrank(&y, &fac, Some((&w, &u)), rho, sigma2).unwrap();
        assert!((fast.clone() - &dense.h_hat).norm() < 1e-9 * dense.h_hat.norm().max(1e-9));

        // Full-digital variant against the dense identity-coupling path.
        let eye_n = CMat::identity(n_ant, n_ant);
        let y_fd = simulate_interap_pilot(&h, &eye_n, &eye_n, rho, sigma2.sqrt(), &mut rng);
        let a_fd = CMat::identity(n_ant * n_ant, n_ant * n_ant);
        let dense_fd = mmse_interap(&y_fd, &r, &a_fd, rho, sigma2).unwrap();
        let fast_fd = mmse_interap_estimate_lowrank(&y_fd, &fac, None, rho, sigma2).unwrap();
        assert!((fast_fd - dense_fd.h_hat.clone()).norm() < 1e-9 * dense_fd.h_hat.norm());
    }

    #[test]
    fn equivalent_covariance_identity_columns_select_submatrix() {
        let mut rng = rng_for(49, 0);
        let base = sample_cn_matrix(4, 4, 1.0, &mut rng);
        let r = &base * base.adjoint();
        let analog = CMat::identity(4, 2);
        let r_eq = equivalent_covariance(&analog, &r);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r_eq[(i, j)], r[(i, j)]);
            }
        }
    }

    #[test]
    fn equivalent_covariance_preserves_psd_and_trace_bound() {
        let mut rng = rng_for(50, 0);
        let n = 5;
        let n_rf = 3;
        for _ in 0..100 {
            let base = sample_cn_matrix(n, n, 1.0, &mut rng);
            let r = &base * base.adjoint();
            // Unit-modulus analog matrix: column norm^2 = n.
            let analog = CMat::from_fn(n, n_rf, |_, _| {
                let phase: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                C64::new(phase.cos(), phase.sin())
            });
            let r_eq = equivalent_covariance(&analog, &r);
            let (vals, _) = hermitian_eigen_desc(&r_eq);
            assert!(vals.iter().all(|&v| v > -1e-9));
            let tr_eq: f64 = r_eq.diagonal().iter().map(|z| z.re).sum();
            let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
            assert!(tr_eq <= n as f64 * tr + 1e-9);
        }
    }

    #[test]
    fn user_pilot_single_user_noiseless() {
        let mut rng = rng_for(51, 0);
        let n = 4;
        let link = steering_vector(0.3, n) * C64::new(2.0, 0.5);
        let analog = CMat::identity(n, 2);
        let pilots = PilotBlock::orthonormal(3, 1, 4.0, 0.0).unwrap();
        let y = simulate_user_pilot(&[link.clone()], &analog, &pilots, &mut rng).unwrap();
        let expect = analog.adjoint() * &link * C64::new(2.0, 0.0);
        for i in 0..2 {
            assert!((y[(i, 0)] - expect[i]).norm() < 1e-12);
            assert!(y[(i, 1)].norm() < 1e-15);
            assert!(y[(i, 2)].norm() < 1e-15);
        }
    }

    #[test]
    fn user_pilot_orthogonality_separates_users() {
        let mut rng = rng_for(52, 0);
        let n = 4;
        let h1 = steering_vector(0.4, n);
        let h2 = steering_vector(-1.0, n);
        let analog = CMat::identity(n, 3);
        let pilots = PilotBlock::orthonormal(2, 2, 1.0, 0.0).unwrap();
        let y = simulate_user_pilot(&[h1.clone(), h2], &analog, &pilots, &mut rng).unwrap();
        let recovered = &y * pilots.matrix.column(0).conjugate();
        let expect = analog.adjoint() * &h1;
        assert!((recovered - expect).norm() < 1e-12);
    }

    #[test]
    fn user_pilot_rejects_short_pilots() {
        let mut rng = rng_for(53, 0);
        let links = vec![CVec::zeros(4), CVec::zeros(4), CVec::zeros(4)];
        let analog = CMat::identity(4, 2);
        let pilots = PilotBlock::orthonormal(2, 2, 1.0, 0.1).unwrap();
        match simulate_user_pilot(&links, &analog, &pilots, &mut rng) {
            Err(Error::ContaminationUnsupported { pilots: 2, users: 3 }) => {}
            other => panic!("expected contamination error, got {other:?}"),
        }
        assert!(PilotBlock::orthonormal(2, 3, 1.0, 0.1).is_err());
    }

    #[test]
    fn mmse_equivalent_decomposition_and_noiseless_limit() {
        let mut rng = rng_for(54, 0);
        let n = 4;
        let n_rf = 2;
        let l = 3; // L >= n_rf makes R_eq full rank almost surely
        let beta = 1.0;
        let angles: Vec<f64> = (0..l)
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let r = vector_covariance(&angles, beta, n);
        let analog = CMat::from_fn(n, n_rf, |_, _| {
            let phase: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            C64::new(phase.cos(), phase.sin())
        });
        let r_eq = equivalent_covariance(&analog, &r);
        let gains: Vec<C64> = (0..l).map(|_| sample_cn(beta, &mut rng)).collect();
        let h = vector_channel_from_paths(&gains, &angles, n);
        let h_eq = analog.adjoint() * &h;

        // Nearly noiseless pilots: estimate converges to the true equivalent
        // channel when R_eq is invertible.
        let pilots = PilotBlock::orthonormal(1, 1, 1.0, 1e-7).unwrap();
        let y = simulate_user_pilot(&[h.clone()], &analog, &pilots, &mut rng).unwrap();
        let est = mmse_equivalent(&y, 0, &pilots, &[r_eq.clone()]).unwrap();
        assert!((est.est.clone() - &h_eq).norm() < 1e-6 * h_eq.norm().max(1.0));
        assert!((est.r_hat.clone() + &est.r_tilde - &est.r_eq).norm() < 1e-10);
    }

    #[test]
    fn mmse_equivalent_error_covariance_matches_empirical() {
        let mut rng = rng_for(55, 0);
        let n = 4;
        let n_rf = 2;
        let l = 3;
        let beta = 1.0;
        let angles: Vec<f64> = (0..l)
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let r = vector_covariance(&angles, beta, n);
        let analog = CMat::from_fn(n, n_rf, |_, _| {
            let phase: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            C64::new(phase.cos(), phase.sin())
        });
        let r_eq = equivalent_covariance(&analog, &r);
        let pilots = PilotBlock::orthonormal(1, 1, 2.0, 1.0).unwrap();
        let trials = 2000;
        let mut acc = CMat::zeros(n_rf, n_rf);
        let mut r_tilde_ref = None;
        for _ in 0..trials {
            let gains: Vec<C64> = (0..l).map(|_| sample_cn(beta, &mut rng)).collect();
            let h = vector_channel_from_paths(&gains, &angles, n);
            let h_eq = analog.adjoint() * &h;
            let y = simulate_user_pilot(&[h], &analog, &pilots, &mut rng).unwrap();
            let est = mmse_equivalent(&y, 0, &pilots, &[r_eq.clone()]).unwrap();
            let err = &h_eq - &est.est;
            acc += &err * err.adjoint();
            r_tilde_ref.get_or_insert(est.r_tilde);
        }
        acc /= C64::new(trials as f64, 0.0);
        let r_tilde = r_tilde_ref.unwrap();
        let rel = (acc - &r_tilde).norm() / r_tilde.norm();
        assert!(rel < 0.05, "empirical error covariance off by {rel}");
    }

    #[test]
    fn nmse_identities() {
        let t = CMat::from_element(2, 2, C64::new(1.0, -1.0));
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let zero = CMat::zeros(2, 2);
        assert_eq!(nmse(&zero, &t).unwrap(), 1.0);
        let double = &t * C64::new(2.0, 0.0);
        assert!((nmse(&double, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmse(&t, &zero).is_err());
    }
}
