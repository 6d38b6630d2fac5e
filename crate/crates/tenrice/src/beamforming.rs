//! Data-phase design: SVD transceivers with waterfilled power loading,
//! closed-form RIS reflection vectors (FroMax-1 and FroMax-2), a
//! random-reflection baseline, and spectral-efficiency evaluation.
//!
//! For a fixed reflection vector `ω` the RIS link collapses to an ordinary
//! point-to-point MIMO channel `H_e = H_R·diag(ω)·H_T`, whose optimal
//! fully-digital transceiver is the SVD beamformer pair with waterfilled
//! power loading; the spectral efficiency then reduces from the log-det form
//! to a sum over the dominant singular values. Choosing `ω` itself is
//! non-convex because of the RIS constant-modulus constraint, so it is
//! designed in closed form by maximizing a Frobenius norm and projecting:
//!
//! * **FroMax-1** maximizes `‖H_e‖²_F = ‖K·ω‖²` with `K = H_Tᵀ ⋄ H_R`
//!   (columnwise Khatri-Rao), whose relaxed unit-norm optimum is the top
//!   right singular vector of `K`. It concentrates energy in the dominant
//!   singular value, which is ideal for one stream but loses multi-stream
//!   rate.
//! * **FroMax-2** maximizes `‖Σ_s‖²_F = ‖D·ω‖²`, where row `i` of the
//!   stream-coupling matrix `D` maps `ω` to the `i`-th per-stream singular
//!   value; `ω` is read off the dominant `N_s` right singular vectors of
//!   `D`. The required stream bases are initialized from the SVDs of the two
//!   hop channels so that a single pass suffices (no iteration); an optional
//!   refresh re-derives them from the achieved effective channel.
//!
//! Both projections set every entry to modulus `1/√M_S`, so all returned
//! vectors satisfy the RIS constraint exactly.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{diag, khatri_rao, pinv, svd, CMat, CVec};
use crate::{Error, Result};

/// One complete data-phase design: beamformers, RIS reflection vector,
/// power loading, and the spectral efficiency they achieve.
#[derive(Clone, Debug)]
pub struct BeamformingSolution {
    /// RX combiner (`M_R × N_s`), orthonormal columns.
    pub q: CMat,
    /// TX precoder (`M_T × N_s`), right singular vectors scaled by `√pᵢ`.
    pub p: CMat,
    /// RIS reflection vector (`M_S`), every entry of modulus `1/√M_S`.
    pub omega: CVec,
    /// Waterfilled per-stream powers, summing to `P_max`.
    pub power_alloc: Vec<f64>,
    /// Spectral efficiency achieved on the design channel, in bits/s/Hz.
    pub se_bits_per_hz: f64,
}

/// RIS reflection design used by [`run_algorithm2`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReflectVariant {
    /// Effective-channel Frobenius-norm maximization ([`fromax1`]).
    FroMax1,
    /// Stream-coupled Frobenius-norm maximization ([`fromax2`]).
    FroMax2,
    /// Uniform random phases ([`random_reflection`]) from the given seed.
    Random {
        /// Seed for the phase draw.
        seed: u64,
    },
}

/// Effective RIS channel `H_e = H_R·diag(ω)·H_T` seen between TX and RX.
pub fn effective_channel(h_r: &CMat, h_t: &CMat, omega: &CVec) -> CMat {
    h_r * diag(omega.as_slice()) * h_t
}

/// Exact waterfilling power allocation over channel gains `alphas`.
///
/// Maximizes `Σᵢ log₂(1 + αᵢ²·pᵢ/σ²)` subject to `Σᵢ pᵢ = p_max`, `pᵢ ≥ 0`:
/// the optimum is `pᵢ = max(0, μ − σ²/αᵢ²)` with the water level `μ` fixing
/// the power budget. The level is solved exactly by sorting the inverse
/// gains and scanning the breakpoints (no bisection tolerance), so the
/// returned powers saturate the budget to machine precision. Zero gains get
/// zero power; all gains zero is an error.
pub fn waterfill(alphas: &[f64], p_max: f64, sigma2: f64) -> Result<Vec<f64>> {
    // Inverse gains (the "floor heights"), for the usable modes only.
    let mut floors: Vec<(usize, f64)> = alphas
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| (i, sigma2 / (a * a)))
        .collect();
    if floors.is_empty() {
        return Err(Error::AllZeroGains);
    }
    floors.sort_by(|a, b| a.1.total_cmp(&b.1));

    // Largest k for which the level over the k lowest floors stays at or
    // above the k-th floor; modes above the water get nothing.
    let mut level = 0.0;
    let mut active = 0;
    let mut floor_sum = 0.0;
    for k in 1..=floors.len() {
        floor_sum += floors[k - 1].1;
        let candidate = (p_max + floor_sum) / k as f64;
        if candidate >= floors[k - 1].1 {
            level = candidate;
            active = k;
        } else {
            break;
        }
    }

    let mut powers = vec![0.0; alphas.len()];
    for &(i, floor) in &floors[..active] {
        powers[i] = level - floor;
    }
    Ok(powers)
}

/// Spectral efficiency in the per-stream sum form `Σᵢ log₂(1 + αᵢ²·pᵢ/σ²)`.
pub fn se_sum_form(alphas: &[f64], powers: &[f64], sigma2: f64) -> f64 {
    alphas
        .iter()
        .zip(powers)
        .map(|(&a, &p)| (1.0 + a * a * p / sigma2).log2())
        .sum()
}

/// Spectral efficiency in the log-det form
/// `log₂ det(I + R⁻¹·Qᴴ·H_e·P·Pᴴ·H_eᴴ·Q)` with noise covariance
/// `R = σ²·QᴴQ`.
///
/// This is the general expression for arbitrary linear transceivers; for the
/// SVD construction of [`beamformers_for_omega`] it collapses to
/// [`se_sum_form`], and the pair is used as a cross-check oracle.
pub fn se_log_det(h_e: &CMat, q: &CMat, p: &CMat, sigma2: f64) -> Result<f64> {
    let m = q.adjoint() * h_e * p;
    let r = (q.adjoint() * q) * Complex64::from(sigma2);
    let (r_inv, _) = pinv(&r)?;
    let n_s = q.ncols();
    let a = CMat::identity(n_s, n_s) + r_inv * (&m * m.adjoint());
    Ok(a.determinant().re.log2())
}

/// Optimal SVD transceiver and achieved spectral efficiency for a fixed
/// reflection vector.
///
/// Forms `H_e = H_R·diag(ω)·H_T`, takes its SVD, sets `Q` to the `N_s`
/// dominant left singular vectors and `P` to the dominant right singular
/// vectors scaled by the waterfilled per-stream powers, and evaluates the
/// spectral efficiency in the sum form. Requesting more streams than the
/// effective channel's rank is an error.
pub fn beamformers_for_omega(
    h_r: &CMat,
    h_t: &CMat,
    omega: &CVec,
    n_s: usize,
    p_max: f64,
    sigma2: f64,
) -> Result<BeamformingSolution> {
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
    }
    let h_e = effective_channel(h_r, h_t, omega);
    let dec = svd(&h_e)?;
    let rank = dec.rank();
    if n_s == 0 || n_s > rank {
        return Err(Error::StreamCountExceedsRank { n_s, rank });
    }
    let alphas = &dec.s[..n_s];
    let powers = waterfill(alphas, p_max, sigma2)?;

    let q = CMat::from_fn(h_e.nrows(), n_s, |i, j| dec.u[(i, j)]);
    let p = CMat::from_fn(h_e.ncols(), n_s, |i, j| dec.v[(i, j)] * powers[j].sqrt());
    let se = se_sum_form(alphas, &powers, sigma2);
    Ok(BeamformingSolution { q, p, omega: omega.clone(), power_alloc: powers, se_bits_per_hz: se })
}

/// Entrywise projection onto the RIS constant-modulus set: every entry keeps
/// its phase and takes modulus `1/√M_S`. A zero entry (no phase to keep) maps
/// to phase 0.
pub fn project_constant_modulus(v: &CVec) -> CVec {
    let scale = 1.0 / (v.len() as f64).sqrt();
    CVec::from_fn(v.len(), |m, _| {
        let z = v[m];
        let r = z.norm();
        if r == 0.0 {
            Complex64::new(scale, 0.0)
        } else {
            z / r * scale
        }
    })
}

/// FroMax-1 reflection design: maximize the effective channel's Frobenius
/// norm.
///
/// `‖H_R·diag(ω)·H_T‖²_F = ‖K·ω‖²` with `K = H_Tᵀ ⋄ H_R`, so the relaxed
/// unit-norm optimum is the top right singular vector of `K`; the result is
/// projected entrywise onto the constant-modulus set.
pub fn fromax1(h_r: &CMat, h_t: &CMat) -> Result<CVec> {
    let k = khatri_rao(&h_t.transpose(), h_r);
    let dec = svd(&k)?;
    let relaxed = CVec::from_fn(k.ncols(), |m, _| dec.v[(m, 0)]);
    Ok(project_constant_modulus(&relaxed))
}

/// Stream-coupling matrix `D` (`N_s × M_S`): row `i` maps a reflection
/// vector to the `i`-th per-stream channel gain, `D[i,:]·ω =
/// U_s[:,i]ᴴ·H_R·diag(ω)·H_T·V_s[:,i]`.
///
/// Row `i` is the entrywise product of `V_s[:,i]ᵀ·H_Tᵀ` and `U_s[:,i]ᴴ·H_R`
/// (the Khatri-Rao of two rows). An all-zero row means the corresponding
/// stream basis pair is decoupled from the RIS and no reflection vector can
/// serve it, which is reported as an error.
pub fn coupling_matrix(h_r: &CMat, h_t: &CMat, u_s: &CMat, v_s: &CMat) -> Result<CMat> {
    let n_s = u_s.ncols();
    let m_s = h_r.ncols();
    let mut d = CMat::zeros(n_s, m_s);
    for i in 0..n_s {
        let t_row = h_t * v_s.column(i);
        let r_row = u_s.column(i).adjoint() * h_r;
        let mut zero = true;
        for m in 0..m_s {
            let value = t_row[m] * r_row[(0, m)];
            zero &= value == Complex64::ZERO;
            d[(i, m)] = value;
        }
        if zero {
            return Err(Error::DegenerateCoupling { row: i });
        }
    }
    Ok(d)
}

/// FroMax-2 reflection design: maximize the Frobenius norm of the
/// per-stream gain matrix. Single pass; see [`fromax2_refreshed`].
pub fn fromax2(h_r: &CMat, h_t: &CMat, n_s: usize) -> Result<CVec> {
    fromax2_refreshed(h_r, h_t, n_s, 0)
}

/// [`fromax2`] with `refreshes` extra passes that re-derive the stream bases
/// from the achieved effective channel.
///
/// The stream bases `(U_s, V_s)` that define the coupling matrix depend on
/// `ω` itself; they are initialized from the SVDs of the two hop channels
/// (`U_s` from `H_R`'s left singular vectors, `V_s` from `H_T`'s right
/// singular vectors), which makes one pass sufficient in practice. Each
/// refresh recomputes `(U_s, V_s)` from the SVD of `H_e(ω)` and re-solves;
/// the default is zero refreshes (non-iterative).
pub fn fromax2_refreshed(h_r: &CMat, h_t: &CMat, n_s: usize, refreshes: usize) -> Result<CVec> {
    let dec_r = svd(h_r)?;
    let dec_t = svd(h_t)?;
    let available = dec_r.u.ncols().min(dec_t.v.ncols());
    if n_s == 0 || n_s > available {
        return Err(Error::StreamCountExceedsRank { n_s, rank: available });
    }
    let mut u_s = CMat::from_fn(h_r.nrows(), n_s, |i, j| dec_r.u[(i, j)]);
    let mut v_s = CMat::from_fn(h_t.ncols(), n_s, |i, j| dec_t.v[(i, j)]);

    let mut omega = solve_coupled(h_r, h_t, &u_s, &v_s, n_s)?;
    for _ in 0..refreshes {
        let dec_e = svd(&effective_channel(h_r, h_t, &omega))?;
        u_s = CMat::from_fn(h_r.nrows(), n_s, |i, j| dec_e.u[(i, j)]);
        v_s = CMat::from_fn(h_t.ncols(), n_s, |i, j| dec_e.v[(i, j)]);
        omega = solve_coupled(h_r, h_t, &u_s, &v_s, n_s)?;
    }
    Ok(omega)
}

/// One FroMax-2 solve for fixed stream bases: sum the dominant `N_s` right
/// singular vectors of the coupling matrix, normalize, and project.
fn solve_coupled(h_r: &CMat, h_t: &CMat, u_s: &CMat, v_s: &CMat, n_s: usize) -> Result<CVec> {
    let d = coupling_matrix(h_r, h_t, u_s, v_s)?;
    let dec = svd(&d)?;
    let take = n_s.min(dec.v.ncols());
    let mut summed = CVec::zeros(d.ncols());
    for j in 0..take {
        for m in 0..d.ncols() {
            summed[m] += dec.v[(m, j)];
        }
    }
    let norm = summed.norm();
    if norm > 0.0 {
        summed /= Complex64::from(norm);
    }
    Ok(project_constant_modulus(&summed))
}

/// Random-phase reflection baseline: `ω_m = (1/√M_S)·e^{jθ_m}` with
/// `θ_m ~ U[0, 2π)`, deterministic in the seed.
pub fn random_reflection(m_s: usize, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m_s as f64).sqrt();
    CVec::from_fn(m_s, |_, _| Complex64::from_polar(scale, rng.random_range(0.0..TAU)))
}

/// Full data-phase design: pick the reflection vector per `variant`, then
/// compute the SVD transceiver with waterfilled powers for it.
pub fn run_algorithm2(
    h_t_hat: &CMat,
    h_r_hat: &CMat,
    p_max: f64,
    sigma2: f64,
    n_s: usize,
    variant: ReflectVariant,
) -> Result<BeamformingSolution> {
    let omega = match variant {
        ReflectVariant::FroMax1 => fromax1(h_r_hat, h_t_hat)?,
        ReflectVariant::FroMax2 => fromax2(h_r_hat, h_t_hat, n_s)?,
        ReflectVariant::Random { seed } => random_reflection(h_r_hat.ncols(), seed),
    };
    beamformers_for_omega(h_r_hat, h_t_hat, &omega, n_s, p_max, sigma2)
}
