//! Geometric mmWave channel model for a RIS-aided point-to-point link.
//!
//! The link has two hops. The transmitter-to-surface channel is
//! `H_T = B_T · G_T · A_Tᵀ` (surface × TX antennas) with `L_T` paths, and the
//! surface-to-receiver channel is `H_R = A_R · G_R · B_Rᵀ` (RX × surface
//! antennas) with `L_R` paths. `A_T`/`A_R` hold 1-D uniform-linear-array
//! steering vectors at the terminals; `B_T`/`B_R` hold 2-D steering vectors
//! of the uniform planar surface, each the Khatri-Rao product of a vertical
//! and a horizontal 1-D factor (the horizontal index varies fastest across
//! surface elements). Path gains are i.i.d. unit circular Gaussians scaled by
//! `1/√L`, so `E‖H‖²_F` equals the product of the hop's antenna counts.
//!
//! The cascaded channel seen through the surface is
//! `H_c = H_Tᵀ ⋄ H_R = (A_T ⊗ A_R) · diag(g) · (B_v ⋄ B_h)ᵀ`, whose combined
//! path `n = ℓ·L_R + k` carries spatial frequency *sums*
//! `μ_n = μ_{T,ℓ} + μ_{R,k}` per surface axis and gain
//! `g_n = g_{T,ℓ} · g_{R,k}`. Frequencies are drawn with a minimum wrap-around
//! separation (rejection sampling) so that distinct paths stay resolvable.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{complex_gaussian, diag, khatri_rao, kronecker, CMat};
use crate::{Error, Result};

/// Antenna counts for the two terminals and the planar surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrayConfig {
    /// Transmit antennas `M_T`.
    pub m_t: usize,
    /// Receive antennas `M_R`.
    pub m_r: usize,
    /// Surface rows (vertical axis) `M_S^v`.
    pub m_s_v: usize,
    /// Surface columns (horizontal axis) `M_S^h`.
    pub m_s_h: usize,
}

impl ArrayConfig {
    /// Total surface elements `M_S = M_S^v · M_S^h`.
    pub fn m_s(&self) -> usize {
        self.m_s_v * self.m_s_h
    }

    /// Largest 1-D aperture among all arrays (drives angular resolvability).
    pub fn max_dim(&self) -> usize {
        self.m_t.max(self.m_r).max(self.m_s_v).max(self.m_s_h)
    }
}

/// Ground-truth path parameters of one realization.
#[derive(Clone, Debug)]
pub struct PathParams {
    /// TX-side path count `L_T`.
    pub l_t: usize,
    /// RX-side path count `L_R`.
    pub l_r: usize,
    /// TX-hop path gains (length `L_T`, already scaled by `1/√L_T` in `G_T`).
    pub g_t: Vec<Complex64>,
    /// RX-hop path gains (length `L_R`).
    pub g_r: Vec<Complex64>,
    /// TX array spatial frequencies (length `L_T`).
    pub psi_t: Vec<f64>,
    /// RX array spatial frequencies (length `L_R`).
    pub psi_r: Vec<f64>,
    /// Surface vertical frequencies of TX-hop paths (length `L_T`).
    pub mu_v_t: Vec<f64>,
    /// Surface horizontal frequencies of TX-hop paths (length `L_T`).
    pub mu_h_t: Vec<f64>,
    /// Surface vertical frequencies of RX-hop paths (length `L_R`).
    pub mu_v_r: Vec<f64>,
    /// Surface horizontal frequencies of RX-hop paths (length `L_R`).
    pub mu_h_r: Vec<f64>,
}

/// One drawn channel pair with every factor retained for oracle checks.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// Antenna geometry.
    pub cfg: ArrayConfig,
    /// Ground-truth path parameters.
    pub params: PathParams,
    /// TX-to-surface channel `B_T G_T A_Tᵀ` (`M_S × M_T`).
    pub h_t: CMat,
    /// Surface-to-RX channel `A_R G_R B_Rᵀ` (`M_R × M_S`).
    pub h_r: CMat,
    /// TX steering matrix (`M_T × L_T`).
    pub a_t: CMat,
    /// RX steering matrix (`M_R × L_R`).
    pub a_r: CMat,
    /// Surface steering matrix toward the TX (`M_S × L_T`).
    pub b_t: CMat,
    /// Surface steering matrix toward the RX (`M_S × L_R`).
    pub b_r: CMat,
    /// `diag(g_t)/√L_T` (`L_T × L_T`).
    pub g_t: CMat,
    /// `diag(g_r)/√L_R` (`L_R × L_R`).
    pub g_r: CMat,
    /// Combined vertical frequencies `μ_v[ℓ·L_R + k] = μ_v_t[ℓ] + μ_v_r[k]`.
    pub mu_v: Vec<f64>,
    /// Combined horizontal frequencies, same indexing.
    pub mu_h: Vec<f64>,
    /// Combined gains `g[ℓ·L_R + k] = g_t[ℓ]·g_r[k] / √(L_T·L_R)`.
    pub g: Vec<Complex64>,
}

impl ChannelRealization {
    /// Combined path count `L = L_T · L_R`.
    pub fn l(&self) -> usize {
        self.params.l_t * self.params.l_r
    }

    /// Vertical 1-D steering factors of the combined paths (`M_S^v × L`).
    pub fn b_v(&self) -> CMat {
        steering_mat_1d(&self.mu_v, self.cfg.m_s_v)
    }

    /// Horizontal 1-D steering factors of the combined paths (`M_S^h × L`).
    pub fn b_h(&self) -> CMat {
        steering_mat_1d(&self.mu_h, self.cfg.m_s_h)
    }
}

/// 1-D steering vector `[e^{j·0·ν}, e^{j·1·ν}, …, e^{j·(m-1)·ν}]ᵀ`.
pub fn steering_1d(nu: f64, m: usize) -> CMat {
    CMat::from_fn(m, 1, |k, _| Complex64::from_polar(1.0, nu * k as f64))
}

/// Stack 1-D steering vectors for a list of frequencies (`m × len`).
pub fn steering_mat_1d(nus: &[f64], m: usize) -> CMat {
    CMat::from_fn(m, nus.len(), |k, c| Complex64::from_polar(1.0, nus[c] * k as f64))
}

/// 2-D planar steering vector: Khatri-Rao of the vertical and horizontal 1-D
/// factors, horizontal index fastest (element `i = i_v·m_h + i_h`).
pub fn steering_2d(nu_v: f64, nu_h: f64, m_v: usize, m_h: usize) -> CMat {
    khatri_rao(&steering_1d(nu_v, m_v), &steering_1d(nu_h, m_h))
}

/// Stack 2-D steering vectors for paired frequency lists.
///
/// # Panics
/// If the frequency lists differ in length.
pub fn steering_mat_2d(nu_v: &[f64], nu_h: &[f64], m_v: usize, m_h: usize) -> CMat {
    assert_eq!(nu_v.len(), nu_h.len(), "steering_mat_2d: frequency lists differ in length");
    khatri_rao(&steering_mat_1d(nu_v, m_v), &steering_mat_1d(nu_h, m_h))
}

/// Wrap-around distance between two angles, in `[0, π]`.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Minimum pairwise frequency separation enforced when drawing channels:
/// a quarter of the Rayleigh resolution of the largest array.
pub fn min_frequency_separation(cfg: &ArrayConfig) -> f64 {
    TAU / (4.0 * cfg.max_dim() as f64)
}

const MAX_REJECTION_ATTEMPTS: usize = 10_000;

fn separated(values: &[f64], min_sep: f64) -> bool {
    for (i, &a) in values.iter().enumerate() {
        for &b in &values[i + 1..] {
            if wrap_distance(a, b) < min_sep {
                return false;
            }
        }
    }
    true
}

fn combined_sums(t: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len() * r.len());
    for &x in t {
        for &y in r {
            out.push((x + y).rem_euclid(TAU));
        }
    }
    out
}

/// Draw one channel realization with the given path counts.
///
/// Angular frequencies are uniform (`ψ` and `μ_h` on `[0, 2π)`, `μ_v` on
/// `[0, π)`) and redrawn until the TX frequencies, the RX frequencies, and
/// the *combined* vertical and horizontal sums are all pairwise separated by
/// [`min_frequency_separation`]. Gains are drawn after acceptance, so the
/// gain stream is unaffected by how many rejections occurred.
pub fn draw_channels(cfg: &ArrayConfig, l_t: usize, l_r: usize, seed: u64) -> Result<ChannelRealization> {
    assert!(l_t >= 1 && l_r >= 1, "draw_channels: path counts must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = min_frequency_separation(cfg);

    let mut psi_t = vec![0.0; l_t];
    let mut psi_r = vec![0.0; l_r];
    let mut mu_v_t = vec![0.0; l_t];
    let mut mu_h_t = vec![0.0; l_t];
    let mut mu_v_r = vec![0.0; l_r];
    let mut mu_h_r = vec![0.0; l_r];

    let mut accepted = false;
    for attempt in 0..MAX_REJECTION_ATTEMPTS {
        for l in 0..l_t.max(l_r) {
            if l < l_t {
                psi_t[l] = rng.random_range(0.0..TAU);
            }
            if l < l_r {
                psi_r[l] = rng.random_range(0.0..TAU);
            }
            if l < l_t {
                mu_v_t[l] = rng.random_range(0.0..PI);
                mu_h_t[l] = rng.random_range(0.0..TAU);
            }
            if l < l_r {
                mu_v_r[l] = rng.random_range(0.0..PI);
                mu_h_r[l] = rng.random_range(0.0..TAU);
            }
        }
        let ok = separated(&psi_t, min_sep)
            && separated(&psi_r, min_sep)
            && separated(&combined_sums(&mu_v_t, &mu_v_r), min_sep)
            && separated(&combined_sums(&mu_h_t, &mu_h_r), min_sep);
        if ok {
            accepted = true;
            break;
        }
        if attempt + 1 == MAX_REJECTION_ATTEMPTS {
            return Err(Error::SeparationRejection(MAX_REJECTION_ATTEMPTS));
        }
    }
    debug_assert!(accepted);

    let g_t_raw: Vec<Complex64> = (0..l_t).map(|_| complex_gaussian(&mut rng)).collect();
    let g_r_raw: Vec<Complex64> = (0..l_r).map(|_| complex_gaussian(&mut rng)).collect();

    let params = PathParams {
        l_t,
        l_r,
        g_t: g_t_raw.clone(),
        g_r: g_r_raw.clone(),
        psi_t: psi_t.clone(),
        psi_r: psi_r.clone(),
        mu_v_t: mu_v_t.clone(),
        mu_h_t: mu_h_t.clone(),
        mu_v_r: mu_v_r.clone(),
        mu_h_r: mu_h_r.clone(),
    };

    build_realization(cfg, params)
}

/// Assemble every channel factor from explicit path parameters.
///
/// `draw_channels` delegates here after sampling; tests use it directly to
/// construct channels with hand-picked frequencies and gains.
pub fn build_realization(cfg: &ArrayConfig, params: PathParams) -> Result<ChannelRealization> {
    let (l_t, l_r) = (params.l_t, params.l_r);
    let a_t = steering_mat_1d(&params.psi_t, cfg.m_t);
    let a_r = steering_mat_1d(&params.psi_r, cfg.m_r);
    let b_t = steering_mat_2d(&params.mu_v_t, &params.mu_h_t, cfg.m_s_v, cfg.m_s_h);
    let b_r = steering_mat_2d(&params.mu_v_r, &params.mu_h_r, cfg.m_s_v, cfg.m_s_h);

    let scale_t = Complex64::new(1.0 / (l_t as f64).sqrt(), 0.0);
    let scale_r = Complex64::new(1.0 / (l_r as f64).sqrt(), 0.0);
    let g_t_diag: Vec<Complex64> = params.g_t.iter().map(|g| g * scale_t).collect();
    let g_r_diag: Vec<Complex64> = params.g_r.iter().map(|g| g * scale_r).collect();
    let g_t = diag(&g_t_diag);
    let g_r = diag(&g_r_diag);

    let h_t = &b_t * &g_t * a_t.transpose();
    let h_r = &a_r * &g_r * b_r.transpose();

    let mut mu_v = Vec::with_capacity(l_t * l_r);
    let mut mu_h = Vec::with_capacity(l_t * l_r);
    let mut g = Vec::with_capacity(l_t * l_r);
    for l in 0..l_t {
        for k in 0..l_r {
            mu_v.push((params.mu_v_t[l] + params.mu_v_r[k]).rem_euclid(TAU));
            mu_h.push((params.mu_h_t[l] + params.mu_h_r[k]).rem_euclid(TAU));
            g.push(g_t_diag[l] * g_r_diag[k]);
        }
    }

    Ok(ChannelRealization {
        cfg: *cfg,
        params,
        h_t,
        h_r,
        a_t,
        a_r,
        b_t,
        b_r,
        g_t,
        g_r,
        mu_v,
        mu_h,
        g,
    })
}

/// Cascaded TX→surface→RX channel `H_c = H_Tᵀ ⋄ H_R` (`M_T·M_R × M_S`);
/// column `m` couples surface element `m` to every TX/RX antenna pair.
pub fn cascaded_channel(ch: &ChannelRealization) -> CMat {
    khatri_rao(&ch.h_t.transpose(), &ch.h_r)
}

/// Factored form of the cascaded channel,
/// `(A_T ⊗ A_R) · diag(g) · (B_v ⋄ B_h)ᵀ`; equals [`cascaded_channel`].
pub fn cascaded_channel_factored(ch: &ChannelRealization) -> CMat {
    let left = kronecker(&ch.a_t, &ch.a_r);
    let right = khatri_rao(&ch.b_v(), &ch.b_h());
    left * diag(&ch.g) * right.transpose()
}
