//! Training protocol: probing matrices, the 4-way measurement tensor, and
//! receiver noise.
//!
//! One training block uses `K_S = K_S^v · K_S^h` surface subframes; within
//! each subframe the transmitter sends `K_T` precoded pilots and the receiver
//! combines with `K_R` vectors. All probing entries have constant modulus
//! with i.i.d. uniform phases: combiners `W` (`M_R × K_R`, modulus
//! `1/√M_R`), precoders `F` (`M_T × K_T`, modulus `1/√M_T`; unit pilot
//! symbols are absorbed into `F`), and the separable surface patterns
//! `Φ = Φ_v ⊗ Φ_h` with `Φ_v` (`M_S^v × K_S^v`, modulus `1/√M_S^v`) and
//! `Φ_h` (`M_S^h × K_S^h`, modulus `1/√M_S^h`).
//!
//! The noiseless block in matrix form is `Y = (Fᵀ ⊗ Wᴴ) · H_c · (Φ_v ⊗ Φ_h)`.
//! Rearranged as a 4-way tensor over (combiner, pilot, horizontal pattern,
//! vertical pattern) it is exactly the rank-`L` CP model with factors
//! `A1 = Wᴴ A_R Ω_R`, `A2 = Fᵀ A_T Ω_T`, `A3 = Φ_hᵀ B_h`,
//! `A4 = Φ_vᵀ B_v diag(g)`, where the selection matrices tie each combined
//! path to its TX-hop and RX-hop parents. [`measure_matrix_route`] and
//! [`measure_tensor_route`] compute both forms; their agreement is the
//! module's central test.
//!
//! Noise is drawn per receive antenna (circular Gaussian, variance set from
//! the requested SNR) and passes through the combiners, so a measurement
//! block's noise covariance is `σ² WᴴW`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{cascaded_channel, ArrayConfig, ChannelRealization};
use crate::linalg::{complex_gaussian, kronecker, selection_matrices, CMat, CVec};
use crate::tensor::{cp_build, Tensor4};
use crate::{Error, Result};

/// Per-block training budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingBudgets {
    /// Receive combining vectors per pilot `K_R`.
    pub k_r: usize,
    /// Precoded pilots per subframe `K_T`.
    pub k_t: usize,
    /// Horizontal surface patterns `K_S^h`.
    pub k_s_h: usize,
    /// Vertical surface patterns `K_S^v`.
    pub k_s_v: usize,
}

impl TrainingBudgets {
    /// Total surface subframes `K_S = K_S^v · K_S^h`.
    pub fn k_s(&self) -> usize {
        self.k_s_v * self.k_s_h
    }
}

/// One realization of every probing matrix.
#[derive(Clone, Debug)]
pub struct TrainingSetup {
    /// Budgets the matrices were drawn for.
    pub budgets: TrainingBudgets,
    /// Receive combiners (`M_R × K_R`, entries of modulus `1/√M_R`).
    pub w: CMat,
    /// Precoders with pilots absorbed (`M_T × K_T`, modulus `1/√M_T`).
    pub f: CMat,
    /// Horizontal surface patterns (`M_S^h × K_S^h`, modulus `1/√M_S^h`).
    pub phi_h: CMat,
    /// Vertical surface patterns (`M_S^v × K_S^v`, modulus `1/√M_S^v`).
    pub phi_v: CMat,
}

impl TrainingSetup {
    /// Full surface pattern matrix `Φ = Φ_v ⊗ Φ_h` (`M_S × K_S`); column
    /// `s = s_v·K_S^h + s_h` pairs vertical pattern `s_v` with horizontal
    /// pattern `s_h`.
    pub fn phi(&self) -> CMat {
        kronecker(&self.phi_v, &self.phi_h)
    }
}

/// Random constant-modulus matrix with i.i.d. uniform phases.
fn unit_phase_matrix(rows: usize, cols: usize, modulus: f64, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Complex64::from_polar(modulus, rng.random_range(0.0..TAU)))
}

/// Draw all probing matrices for one training block.
///
/// Draw order is `W`, `F`, `Φ_h`, `Φ_v`, column-major within each matrix.
pub fn gen_training(cfg: &ArrayConfig, budgets: TrainingBudgets, seed: u64) -> TrainingSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = unit_phase_matrix(cfg.m_r, budgets.k_r, 1.0 / (cfg.m_r as f64).sqrt(), &mut rng);
    let f = unit_phase_matrix(cfg.m_t, budgets.k_t, 1.0 / (cfg.m_t as f64).sqrt(), &mut rng);
    let phi_h =
        unit_phase_matrix(cfg.m_s_h, budgets.k_s_h, 1.0 / (cfg.m_s_h as f64).sqrt(), &mut rng);
    let phi_v =
        unit_phase_matrix(cfg.m_s_v, budgets.k_s_v, 1.0 / (cfg.m_s_v as f64).sqrt(), &mut rng);
    TrainingSetup { budgets, w, f, phi_h, phi_v }
}

/// Noiseless measurement block in matrix form:
/// `Y = (Fᵀ ⊗ Wᴴ) · H_c · (Φ_v ⊗ Φ_h)` (`K_T·K_R × K_S`).
pub fn measure_matrix_route(ch: &ChannelRealization, tr: &TrainingSetup) -> CMat {
    let h_c = cascaded_channel(ch);
    kronecker(&tr.f.transpose(), &tr.w.adjoint()) * h_c * tr.phi()
}

/// The four CP factors of the measurement tensor:
/// `(Wᴴ A_R Ω_R, Fᵀ A_T Ω_T, Φ_hᵀ B_h, Φ_vᵀ B_v diag(g))`.
pub fn measurement_factors(
    ch: &ChannelRealization,
    tr: &TrainingSetup,
) -> (CMat, CMat, CMat, CMat) {
    let (omega_t, omega_r) = selection_matrices(ch.params.l_t, ch.params.l_r);
    let a1 = tr.w.adjoint() * &ch.a_r * omega_r;
    let a2 = tr.f.transpose() * &ch.a_t * omega_t;
    let a3 = tr.phi_h.transpose() * ch.b_h();
    let mut a4 = tr.phi_v.transpose() * ch.b_v();
    for (n, &g) in ch.g.iter().enumerate() {
        a4.column_mut(n).iter_mut().for_each(|z| *z *= g);
    }
    (a1, a2, a3, a4)
}

/// Noiseless measurement block as the 4-way CP tensor over
/// (combiner, pilot, horizontal pattern, vertical pattern); its
/// [`Tensor4::as_vector`] equals `vec` of [`measure_matrix_route`].
pub fn measure_tensor_route(ch: &ChannelRealization, tr: &TrainingSetup) -> Tensor4 {
    let (a1, a2, a3, a4) = measurement_factors(ch, tr);
    cp_build(&a1, &a2, &a3, &a4)
}

/// Measurement tensor with additive receiver noise.
#[derive(Clone, Debug)]
pub struct MeasurementTensor {
    /// Noisy observation.
    pub y: Tensor4,
    /// Noiseless tensor the noise was added to.
    pub noiseless: Tensor4,
    /// Per-antenna noise variance `σ²` implied by the requested SNR.
    pub noise_var: f64,
    /// Requested SNR in dB.
    pub snr_db: f64,
}

/// Add combiner-filtered receiver noise at the requested SNR.
///
/// SNR is defined as signal energy over expected noise energy in the
/// observation: `σ² = ‖noiseless‖²_F / (ρ · K_T · K_S · ‖W‖²_F)` with
/// `ρ = 10^(snr_db/10)`. `+∞ dB` returns the noiseless tensor; `NaN` and
/// `−∞` are rejected.
pub fn add_noise(
    noiseless: &Tensor4,
    tr: &TrainingSetup,
    snr_db: f64,
    seed: u64,
) -> Result<MeasurementTensor> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidSnr(snr_db));
    }
    if snr_db == f64::INFINITY {
        return Ok(MeasurementTensor {
            y: noiseless.clone(),
            noiseless: noiseless.clone(),
            noise_var: 0.0,
            snr_db,
        });
    }

    let b = tr.budgets;
    let dims = noiseless.dims();
    assert_eq!(
        dims,
        [b.k_r, b.k_t, b.k_s_h, b.k_s_v],
        "add_noise: tensor dimensions do not match the training budgets"
    );

    let rho = 10f64.powf(snr_db / 10.0);
    let signal_energy = noiseless.norm().powi(2);
    let w_energy = tr.w.norm().powi(2);
    let noise_var = signal_energy / (rho * (b.k_t * b.k_s()) as f64 * w_energy);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = noise_var.sqrt();
    let m_r = tr.w.nrows();
    let mut y = noiseless.clone();
    let mut z = CVec::zeros(m_r);
    for s_v in 0..b.k_s_v {
        for s_h in 0..b.k_s_h {
            for t in 0..b.k_t {
                z.iter_mut().for_each(|e| *e = complex_gaussian(&mut rng) * std);
                let filtered = tr.w.adjoint() * &z;
                for i1 in 0..b.k_r {
                    *y.at_mut(i1, t, s_h, s_v) += filtered[i1];
                }
            }
        }
    }

    Ok(MeasurementTensor { y, noiseless: noiseless.clone(), noise_var, snr_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_realization, draw_channels, PathParams};
    use crate::linalg::{rank_from_singular_values, svd, vec_mat, C_ONE};

    fn desk_cfg() -> ArrayConfig {
        ArrayConfig { m_t: 4, m_r: 3, m_s_v: 4, m_s_h: 2 }
    }

    fn desk_budgets() -> TrainingBudgets {
        TrainingBudgets { k_r: 3, k_t: 4, k_s_h: 2, k_s_v: 3 }
    }

    // 1. Probing matrices have the exact prescribed moduli.
    #[test]
    fn probing_moduli_exact() {
        let cfg = desk_cfg();
        let tr = gen_training(&cfg, desk_budgets(), 1);
        let checks = [
            (&tr.w, 1.0 / (cfg.m_r as f64).sqrt()),
            (&tr.f, 1.0 / (cfg.m_t as f64).sqrt()),
            (&tr.phi_h, 1.0 / (cfg.m_s_h as f64).sqrt()),
            (&tr.phi_v, 1.0 / (cfg.m_s_v as f64).sqrt()),
        ];
        for (m, modulus) in checks {
            assert!(m.iter().all(|z| (z.norm() - modulus).abs() < 1e-15));
        }
        // Full surface pattern inherits modulus 1/√M_S.
        let phi = tr.phi();
        let expected = 1.0 / (cfg.m_s() as f64).sqrt();
        assert!(phi.iter().all(|z| (z.norm() - expected).abs() < 1e-15));
    }

    // 2. Precoder columns have unit norm (pilot energy 1 per transmission).
    #[test]
    fn precoder_columns_unit_norm() {
        let tr = gen_training(&desk_cfg(), desk_budgets(), 2);
        for c in tr.f.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert!((tr.w.norm().powi(2) - desk_budgets().k_r as f64).abs() < 1e-12);
    }

    // 3. Same seed reproduces the setup.
    #[test]
    fn training_deterministic() {
        let a = gen_training(&desk_cfg(), desk_budgets(), 3);
        let b = gen_training(&desk_cfg(), desk_budgets(), 3);
        assert_eq!(a.w, b.w);
        assert_eq!(a.f, b.f);
        assert_eq!(a.phi_h, b.phi_h);
        assert_eq!(a.phi_v, b.phi_v);
    }

    // 4. Central dual-route oracle: the stacked tensor equals vec(Y) of the
    //    matrix route.
    #[test]
    fn matrix_and_tensor_routes_agree() {
        let cfg = desk_cfg();
        let ch = draw_channels(&cfg, 2, 2, 4).unwrap();
        let tr = gen_training(&cfg, desk_budgets(), 5);
        let y_mat = measure_matrix_route(&ch, &tr);
        let y_ten = measure_tensor_route(&ch, &tr);
        let diff = (y_ten.as_vector() - vec_mat(&y_mat)).norm() / y_mat.norm();
        assert!(diff < 1e-10, "route mismatch {diff}");
    }

    // 5. Per-subframe loop oracle: entry (i1 + K_R·t, s) of the matrix route
    //    is the i1-th combined sample of Wᴴ H_R diag(φ_s) H_T f_t.
    #[test]
    fn subframe_loop_oracle() {
        let cfg = desk_cfg();
        let b = desk_budgets();
        let ch = draw_channels(&cfg, 2, 2, 6).unwrap();
        let tr = gen_training(&cfg, b, 7);
        let y = measure_matrix_route(&ch, &tr);
        let phi = tr.phi();
        for s in 0..b.k_s() {
            let mut ris = CMat::zeros(cfg.m_s(), cfg.m_s());
            for m in 0..cfg.m_s() {
                ris[(m, m)] = phi[(m, s)];
            }
            let through = tr.w.adjoint() * &ch.h_r * ris * &ch.h_t * &tr.f;
            for t in 0..b.k_t {
                for i1 in 0..b.k_r {
                    assert!((y[(i1 + b.k_r * t, s)] - through[(i1, t)]).norm() < 1e-12);
                }
            }
        }
    }

    // 6. Scalar budgets (1,1,1,1): the single observation is the cascade
    //    wᴴ H_R diag(φ) H_T f, accumulated element by element.
    #[test]
    fn scalar_budget_triple_product() {
        let cfg = desk_cfg();
        let b = TrainingBudgets { k_r: 1, k_t: 1, k_s_h: 1, k_s_v: 1 };
        let ch = draw_channels(&cfg, 2, 2, 8).unwrap();
        let tr = gen_training(&cfg, b, 9);
        let y = measure_tensor_route(&ch, &tr);
        assert_eq!(y.len(), 1);
        let phi = tr.phi();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..cfg.m_s() {
            let rx: Complex64 =
                (0..cfg.m_r).map(|r| tr.w[(r, 0)].conj() * ch.h_r[(r, m)]).sum();
            let tx: Complex64 = (0..cfg.m_t).map(|t| ch.h_t[(m, t)] * tr.f[(t, 0)]).sum();
            acc += rx * phi[(m, 0)] * tx;
        }
        assert!((y.at(0, 0, 0, 0) - acc).norm() < 1e-12);
    }

    // 7. Zero path gains produce the zero tensor.
    #[test]
    fn zero_gains_zero_measurement() {
        let cfg = desk_cfg();
        let params = PathParams {
            l_t: 2,
            l_r: 2,
            g_t: vec![Complex64::new(0.0, 0.0); 2],
            g_r: vec![Complex64::new(0.0, 0.0); 2],
            psi_t: vec![0.3, 2.1],
            psi_r: vec![1.0, 4.2],
            mu_v_t: vec![0.5, 1.9],
            mu_h_t: vec![0.2, 3.3],
            mu_v_r: vec![1.2, 2.8],
            mu_h_r: vec![0.9, 5.1],
        };
        let ch = build_realization(&cfg, params).unwrap();
        let y = measure_tensor_route(&ch, &gen_training(&cfg, desk_budgets(), 10));
        assert!(y.norm() < 1e-14);
    }

    // 8. One path per hop: every unfolding of the noiseless tensor is rank 1.
    #[test]
    fn single_path_unfoldings_rank_one() {
        let cfg = desk_cfg();
        let ch = draw_channels(&cfg, 1, 1, 11).unwrap();
        let y = measure_tensor_route(&ch, &gen_training(&cfg, desk_budgets(), 12));
        for n in 1..=4 {
            let u = y.mode_n_unfold(n);
            let s = svd(&u).unwrap();
            assert_eq!(rank_from_singular_values(&s.s, u.nrows(), u.ncols()), 1);
        }
    }

    // 9. +∞ dB passes the noiseless tensor through; NaN and −∞ error.
    #[test]
    fn snr_edge_cases() {
        let cfg = desk_cfg();
        let ch = draw_channels(&cfg, 2, 2, 13).unwrap();
        let tr = gen_training(&cfg, desk_budgets(), 14);
        let y = measure_tensor_route(&ch, &tr);

        let clean = add_noise(&y, &tr, f64::INFINITY, 15).unwrap();
        assert_eq!(clean.y, y);
        assert_eq!(clean.noise_var, 0.0);

        assert!(matches!(add_noise(&y, &tr, f64::NAN, 15), Err(Error::InvalidSnr(_))));
        assert!(matches!(
            add_noise(&y, &tr, f64::NEG_INFINITY, 15),
            Err(Error::InvalidSnr(_))
        ));
    }

    // 10. Empirical SNR over many noise draws matches the request within
    //     0.2 dB at 20 dB.
    #[test]
    fn empirical_snr_matches_request() {
        let cfg = desk_cfg();
        let ch = draw_channels(&cfg, 2, 2, 16).unwrap();
        let tr = gen_training(&cfg, desk_budgets(), 17);
        let y = measure_tensor_route(&ch, &tr);
        let signal = y.norm().powi(2);
        let n = 500;
        let mut noise_acc = 0.0;
        for trial in 0..n {
            let noisy = add_noise(&y, &tr, 20.0, 100 + trial as u64).unwrap();
            noise_acc += (&noisy.y - &y).norm().powi(2);
        }
        let snr_hat_db = 10.0 * (signal / (noise_acc / n as f64)).log10();
        assert!((snr_hat_db - 20.0).abs() < 0.2, "empirical SNR {snr_hat_db} dB");
    }

    // 11. Noise within one measurement block has covariance σ² WᴴW: the
    //     sample covariance over many draws matches within 5%.
    #[test]
    fn noise_covariance_matches_combined_filter() {
        let cfg = ArrayConfig { m_t: 2, m_r: 3, m_s_v: 2, m_s_h: 2 };
        let b = TrainingBudgets { k_r: 2, k_t: 1, k_s_h: 1, k_s_v: 1 };
        let ch = draw_channels(&cfg, 1, 1, 18).unwrap();
        let tr = gen_training(&cfg, b, 19);
        let y = measure_tensor_route(&ch, &tr);

        let n = 4000;
        let mut cov = CMat::zeros(b.k_r, b.k_r);
        let mut var = 0.0;
        for trial in 0..n {
            let noisy = add_noise(&y, &tr, 10.0, 1_000 + trial as u64).unwrap();
            var = noisy.noise_var;
            let e = &noisy.y - &y;
            let ev = CVec::from_column_slice(&e.data()[..b.k_r]);
            cov += &ev * ev.adjoint();
        }
        cov /= Complex64::new(n as f64, 0.0);
        let expected = tr.w.adjoint() * &tr.w * Complex64::new(var, 0.0);
        let rel = (cov - &expected).norm() / expected.norm();
        assert!(rel < 0.05, "covariance mismatch {rel}");
    }

    // 12. Flat channel sanity: unit gains and zero frequencies survive the
    //     whole measurement chain with a hand-computed value.
    #[test]
    fn flat_channel_hand_value() {
        let cfg = ArrayConfig { m_t: 2, m_r: 2, m_s_v: 2, m_s_h: 2 };
        let params = PathParams {
            l_t: 1,
            l_r: 1,
            g_t: vec![C_ONE],
            g_r: vec![C_ONE],
            psi_t: vec![0.0],
            psi_r: vec![0.0],
            mu_v_t: vec![0.0],
            mu_h_t: vec![0.0],
            mu_v_r: vec![0.0],
            mu_h_r: vec![0.0],
        };
        let ch = build_realization(&cfg, params).unwrap();
        let b = TrainingBudgets { k_r: 1, k_t: 1, k_s_h: 1, k_s_v: 1 };
        let tr = gen_training(&cfg, b, 20);
        let y = measure_tensor_route(&ch, &tr);
        // wᴴ 1 · Σφ · 1ᵀ f over all-ones channels.
        let w_sum: Complex64 = tr.w.iter().map(|z| z.conj()).sum();
        let f_sum: Complex64 = tr.f.iter().sum();
        let phi_sum: Complex64 = tr.phi().iter().sum();
        let expected = w_sum * phi_sum * f_sum;
        assert!((y.at(0, 0, 0, 0) - expected).norm() < 1e-12);
    }
}
