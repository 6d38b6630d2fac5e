//! Dense complex-matrix kernels shared by the whole crate.
//!
//! Provides the Kronecker and Khatri-Rao products, column-major
//! vectorization, the column-repetition selection matrices used by the
//! constrained CP model, thin SVD with sorted singular values, and
//! pseudoinverse-based least squares with an explicit effective-rank report.
//!
//! Matrix storage is dense `nalgebra::DMatrix<Complex64>` throughout; problem
//! sizes in this crate (a few thousand entries per dimension product) never
//! justify sparse structure.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Dense complex matrix, the workhorse type of the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Kronecker product `a ⊗ b`: block `(i, j)` of the result is `a[(i, j)]·b`.
pub fn kronecker(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Khatri-Rao (column-wise Kronecker) product `a ⋄ b`.
///
/// Column `m` of the result is `kronecker` of column `m` of `a` with column
/// `m` of `b`; the row index of `b` runs fastest.
///
/// # Panics
/// If the column counts differ.
pub fn khatri_rao(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(
        a.ncols(),
        b.ncols(),
        "khatri_rao: column counts differ ({} vs {})",
        a.ncols(),
        b.ncols()
    );
    let mut out = CMat::zeros(a.nrows() * b.nrows(), a.ncols());
    for m in 0..a.ncols() {
        for i in 0..a.nrows() {
            let ai = a[(i, m)];
            for k in 0..b.nrows() {
                out[(i * b.nrows() + k, m)] = ai * b[(k, m)];
            }
        }
    }
    out
}

/// Three-factor Khatri-Rao product `a ⋄ b ⋄ c` (associative; the row index
/// of `c` runs fastest).
pub fn khatri_rao3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    khatri_rao(a, &khatri_rao(b, c))
}

/// Column-major vectorization: stacks the columns of `a` into one vector.
pub fn vec_mat(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_mat`]: reshape a length `rows·cols` vector into a matrix,
/// filling column by column.
///
/// # Panics
/// If the length does not match.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(
        v.len(),
        rows * cols,
        "unvec: vector length {} does not fill a {}x{} matrix",
        v.len(),
        rows,
        cols
    );
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Square diagonal matrix with `d` on the diagonal.
pub fn diag(d: &[Complex64]) -> CMat {
    CMat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { C_ZERO })
}

/// Column-repetition selection matrices `(omega_t, omega_r)` for per-side
/// path counts `(l_t, l_r)`.
///
/// `omega_t = I_{l_t} ⊗ 1ᵀ_{l_r}` repeats each column of a matrix `l_r`
/// times consecutively; `omega_r = 1ᵀ_{l_t} ⊗ I_{l_r}` tiles the whole column
/// block `l_t` times; and `khatri_rao(omega_t, omega_r)` is the identity.
/// Together they expand per-side factor matrices onto the combined-path grid
/// with column index `n = ℓ·l_r + k`.
pub fn selection_matrices(l_t: usize, l_r: usize) -> (CMat, CMat) {
    assert!(l_t >= 1 && l_r >= 1, "selection_matrices: path counts must be >= 1");
    let l = l_t * l_r;
    let omega_t = CMat::from_fn(l_t, l, |i, n| if n / l_r == i { C_ONE } else { C_ZERO });
    let omega_r = CMat::from_fn(l_r, l, |i, n| if n % l_r == i { C_ONE } else { C_ZERO });
    (omega_t, omega_r)
}

/// Thin singular value decomposition with descending singular values, so that
/// `a = u · diag(s) · vᴴ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left singular vectors (m×k, orthonormal columns, k = min(m, n)).
    pub u: CMat,
    /// Singular values, sorted descending.
    pub s: Vec<f64>,
    /// Right singular vectors (n×k, orthonormal columns), *not* conjugated.
    pub v: CMat,
}

impl SvdResult {
    /// Effective rank: number of singular values above the
    /// `max(m, n)·ε·σ_max` cutoff.
    pub fn rank(&self) -> usize {
        rank_from_singular_values(&self.s, self.u.nrows(), self.v.nrows())
    }
}

/// Count singular values above the standard `max(m, n)·ε·σ_max` cutoff.
pub fn rank_from_singular_values(s: &[f64], m: usize, n: usize) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    if s_max <= 0.0 {
        return 0;
    }
    let cutoff = m.max(n) as f64 * f64::EPSILON * s_max;
    s.iter().filter(|&&x| x > cutoff).count()
}

/// Thin SVD of `a`, singular values sorted in nonincreasing order.
///
/// Runs sequentially regardless of the caller's thread pool, so results are
/// bit-identical whether the surrounding sweep uses one worker or many.
///
/// # Errors
/// [`Error::SvdNonConvergence`] if the iteration fails to converge.
pub fn svd(a: &CMat) -> Result<SvdResult> {
    static SEQUENTIAL: std::sync::Once = std::sync::Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));

    let (rows, cols) = a.shape();
    let fa = faer::Mat::from_fn(rows, cols, |i, j| a[(i, j)]);
    let dec = faer::linalg::solvers::Svd::new_thin(fa.as_ref())
        .map_err(|_| Error::SvdNonConvergence { rows, cols })?;
    let k = rows.min(cols);
    let s: Vec<f64> = (0..k).map(|i| dec.S()[i].re).collect();
    let u = CMat::from_fn(rows, k, |i, j| dec.U()[(i, j)]);
    let v = CMat::from_fn(cols, k, |i, j| dec.V()[(i, j)]);
    Ok(SvdResult { u, s, v })
}

/// Moore-Penrose pseudoinverse of `a` together with its effective rank.
///
/// Singular values below the `max(m, n)·ε·σ_max` cutoff are treated as zero,
/// so applying the result yields minimum-norm least-squares solutions even
/// for rank-deficient input.
pub fn pinv(a: &CMat) -> Result<(CMat, usize)> {
    let dec = svd(a)?;
    let r = dec.rank();
    // v_r · diag(1/s_r) · u_rᴴ without materializing the diagonal.
    let mut ut = dec.u.columns(0, r).adjoint();
    for i in 0..r {
        let inv = 1.0 / dec.s[i];
        for j in 0..ut.ncols() {
            ut[(i, j)] *= inv;
        }
    }
    Ok((dec.v.columns(0, r) * ut, r))
}

/// Minimum-norm least-squares solution with its effective-rank report.
#[derive(Clone, Debug)]
pub struct LsSolution {
    /// The minimizer of `‖y − a·x‖_F` with smallest Frobenius norm.
    pub x: CMat,
    /// Effective rank of `a` used by the pseudoinverse.
    pub rank: usize,
}

/// Solve `min_x ‖y − a·x‖_F` via the SVD pseudoinverse.
///
/// Rank deficiency is not an error: the minimum-norm solution is returned and
/// the effective rank reported in [`LsSolution::rank`].
///
/// # Panics
/// If the row counts of `a` and `y` differ.
pub fn ls_solve(a: &CMat, y: &CMat) -> Result<LsSolution> {
    assert_eq!(
        a.nrows(),
        y.nrows(),
        "ls_solve: row counts differ ({} vs {})",
        a.nrows(),
        y.nrows()
    );
    let dec = svd(a)?;
    let r = dec.rank();
    // x = v_r · diag(1/s_r) · u_rᴴ · y
    let mut uy = dec.u.columns(0, r).adjoint() * y;
    for i in 0..r {
        let inv = 1.0 / dec.s[i];
        for j in 0..uy.ncols() {
            uy[(i, j)] *= inv;
        }
    }
    Ok(LsSolution { x: dec.v.columns(0, r) * uy, rank: r })
}

/// One standard circular complex Gaussian draw (unit total variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. standard circular complex Gaussian entries, filled in
/// column-major order (deterministic for a given RNG state).
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut out = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = complex_gaussian(rng);
        }
    }
    out
}
