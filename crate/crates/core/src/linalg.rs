//! Complex linear-algebra helpers shared across the crate.
//!
//! Thin wrappers over `nalgebra` that fix the conventions used everywhere
//! else: column-major `vec(·)` stacking, descending Hermitian
//! eigendecompositions, circularly-symmetric Gaussian sampling, and
//! deterministic seed derivation for reproducible parallel work.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Mix a master seed and a stream index into an independent child seed.
///
/// SplitMix64 finalizer over the pair, so adding streams never perturbs
/// existing ones (counter-based splitting).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a (master seed, stream) pair.
pub fn rng_for(master: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, stream))
}

/// One draw from the circularly-symmetric complex Gaussian CN(0, var).
pub fn sample_cn(var: f64, rng: &mut impl Rng) -> C64 {
    if var <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("valid std");
    C64::new(normal.sample(rng), normal.sample(rng))
}

/// Matrix with i.i.d. CN(0, var) entries.
pub fn sample_cn_matrix(rows: usize, cols: usize, var: f64, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| sample_cn(var, rng))
}

/// Column-major stacking vec(M).
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`]: reshape a length rows*cols vector into a matrix.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
///
/// Returns `(eigvals, eigvecs)` where column i of `eigvecs` pairs with
/// `eigvals[i]`. The input is assumed Hermitian; only its lower triangle
/// influences the result.
pub fn hermitian_eigen_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `tol_rel * sigma_max` are treated as zero.
pub fn pinv(m: &CMat, tol_rel: f64) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = tol_rel * smax;
    let mut sinv = CMat::zeros(vt.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            sinv[(i, i)] = C64::new(1.0 / s, 0.0);
        }
    }
    vt.adjoint() * sinv * u.adjoint()
}

/// Condition number sigma_max / sigma_min.
pub fn condition_number(m: &CMat) -> f64 {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Factor S of a Hermitian PSD matrix such that M = S S^H (n x r, r = numeric
/// rank). Eigenvalues below `tol_rel * lambda_max` are dropped.
pub fn psd_sqrt_factor(m: &CMat, tol_rel: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen_desc(m);
    let lmax = vals.first().cloned().unwrap_or(0.0).max(0.0);
    let tol = tol_rel * lmax;
    let kept: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > tol).collect();
    let mut f = CMat::zeros(m.nrows(), kept.len().max(1));
    if kept.is_empty() {
        return CMat::zeros(m.nrows(), 0);
    }
    for (dst, &i) in kept.iter().enumerate() {
        let scaled = vecs.column(i) * C64::new(vals[i].sqrt(), 0.0);
        f.set_column(dst, &scaled);
    }
    f
}

/// Real part of the quadratic form q M q^H for a row vector q.
pub fn quadratic_form(q: &CMat, m: &CMat) -> f64 {
    debug_assert_eq!(q.nrows(), 1);
    let w = m * q.adjoint();
    (q * w)[(0, 0)].re
}

/// FNV-1a over the raw bits of a f64 slice; used for channel digests.
pub fn digest_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Append a complex matrix's bits to a digest accumulator.
pub fn digest_cmat(acc: u64, m: &CMat) -> u64 {
    let mut h = acc;
    for z in m.as_slice() {
        for v in [z.re, z.im] {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}
