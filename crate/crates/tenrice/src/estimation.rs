//! TenRICE channel estimation: constrained alternating least squares on the
//! measurement tensor, per-column frequency recovery, gain re-fitting, and
//! rank-1 separation of the two hops.
//!
//! The measurement tensor admits a rank-`L` CP model whose mode-1 and mode-2
//! factors carry the column-repetition structure `Ā_R Ω_R` and `Ā_T Ω_T`
//! (each combined path `n = ℓ·L_R + k` reuses TX column `ℓ` and RX column
//! `k`). The ALS sweep therefore solves for the *compressed* factors `Ā_R`
//! (`K_R × L_R`) and `Ā_T` (`K_T × L_T`) with the selection matrices folded
//! into the least-squares operator, plus the unconstrained surface factors
//! `B̄_h` and `B̄_v` (gains absorbed into `B̄_v`).
//!
//! Column-order convention: a CP decomposition is unique only up to a joint
//! column permutation, and the repetition structure restricts that ambiguity
//! to independent permutations of the TX-side and RX-side paths. All factors
//! returned by one run are mutually consistent — column `n` of the surface
//! factors pairs with TX column `n / L_R` and RX column `n % L_R` — so the
//! downstream dictionary, gain fit, and reconstruction never re-associate
//! columns. Alignment with ground-truth path order happens only in error
//! metrics.
//!
//! Frequencies are recovered per factor column by maximizing the normalized
//! correlation with the projected steering vector over a coarse grid
//! followed by zoomed refinement stages (each stage shrinks the sample
//! spacing tenfold). Gains are then re-fit by least squares on the full
//! vectorized measurement, the cascaded channel is rebuilt from the
//! parametric model, and each of its columns is split into its rank-1
//! TX/RX-hop pair by a best rank-1 approximation.

use std::f64::consts::TAU;

use itertools::Itertools;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::channel::{steering_1d, steering_mat_1d, ArrayConfig};
use crate::linalg::{
    diag, khatri_rao, khatri_rao3, kronecker, ls_solve, pinv, selection_matrices, svd, CMat, CVec,
};
use crate::tensor::{cp_build, Tensor4};
use crate::training::TrainingSetup;
use crate::{derive_seed, Error, Result};

/// Random restarts attempted per ALS run; the best final fit wins.
pub const ALS_RESTARTS: usize = 3;

/// Relative residual below which ALS stops immediately.
const FIT_FLOOR: f64 = 1e-13;

/// Factor estimates from one constrained ALS run.
#[derive(Clone, Debug)]
pub struct FactorEstimates {
    /// Compressed RX-side factor (`K_R × L_R`); the full mode-1 factor is
    /// `Ā_R Ω_R`.
    pub a_r_bar: CMat,
    /// Compressed TX-side factor (`K_T × L_T`); the full mode-2 factor is
    /// `Ā_T Ω_T`.
    pub a_t_bar: CMat,
    /// Horizontal surface factor (`K_S^h × L`).
    pub b_h_bar: CMat,
    /// Vertical surface factor with gains absorbed (`K_S^v × L`).
    pub b_v_bar: CMat,
    /// Sweeps executed by the winning restart.
    pub iterations: usize,
    /// Relative residual after each sweep of the winning restart.
    pub fit_history: Vec<f64>,
}

/// Check that training budgets `[K_R, K_T, K_S^h, K_S^v]` meet the
/// least-squares identifiability bounds for `L_T·L_R` combined paths: every
/// ALS factor update must see at least as many equations as unknowns.
pub fn check_identifiability(dims: [usize; 4], l_t: usize, l_r: usize) -> Result<()> {
    let [k_r, k_t, k_s_h, k_s_v] = dims;
    let k_s = k_s_h * k_s_v;
    let l = l_t * l_r;
    let conditions = [
        (k_t * k_s >= l_r, format!("K_T·K_S = {} < L_R = {l_r}", k_t * k_s)),
        (k_r * k_s >= l_t, format!("K_R·K_S = {} < L_T = {l_t}", k_r * k_s)),
        (k_r * k_t * k_s_v >= l, format!("K_R·K_T·K_S^v = {} < L = {l}", k_r * k_t * k_s_v)),
        (k_r * k_t * k_s_h >= l, format!("K_R·K_T·K_S^h = {} < L = {l}", k_r * k_t * k_s_h)),
    ];
    for (ok, msg) in conditions {
        if !ok {
            return Err(Error::Identifiability(msg));
        }
    }
    Ok(())
}

/// One least-squares factor update `X = Y_n · pinv(C)`, failing if the
/// design matrix `C` has collapsed below the rank the factor needs.
fn ls_right(y_n: &CMat, c: &CMat, iteration: usize, need_rank: usize) -> Result<CMat> {
    let (c_pinv, rank) = pinv(c)?;
    if rank < need_rank {
        return Err(Error::RankCollapse {
            iteration,
            detail: format!("design matrix rank {rank} below required {need_rank}"),
        });
    }
    Ok(y_n * c_pinv)
}

struct AlsProblem<'a> {
    y: &'a Tensor4,
    unfolds: [CMat; 4],
    norm_y: f64,
    omega_t: &'a CMat,
    omega_r: &'a CMat,
    l_t: usize,
    l_r: usize,
}

/// Hermitian inner product `⟨a, b⟩ = Σᵢ conj(aᵢ)·bᵢ` over flattened buffers.
fn slice_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Real roots of the polynomial `Σₖ c[k]·sᵏ` via companion-matrix
/// eigenvalues, after trimming negligible leading coefficients.
fn poly_real_roots(c: &[f64]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].abs() <= 1e-12 * scale {
        deg -= 1;
    }
    match deg {
        0 => Vec::new(),
        1 => vec![-c[0] / c[1]],
        n => {
            let companion = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
                if j == n - 1 {
                    -c[i] / c[n]
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            companion
                .complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
                .map(|z| z.re)
                .collect()
        }
    }
}

/// Exact line search along one sweep's displacement.
///
/// The CP model is multilinear in the four factors, so the squared residual
/// along `F_old + s·(F_new − F_old)` is a degree-8 polynomial in a real step
/// `s`; minimizing it analytically (candidates: stationary points plus the
/// plain step `s = 1`) lets the iteration cross the long flat valleys where
/// plain alternating updates crawl — typically when path frequencies nearly
/// coincide under the compressed training apertures or when path gains span
/// orders of magnitude. Returns the jumped factors with their model tensor
/// and fit when some `s ≠ 1` strictly improves on the plain sweep.
fn line_search_jump(
    p: &AlsProblem,
    old: &[CMat; 4],
    old_model: &Tensor4,
    new: [&CMat; 4],
    plain_fit: f64,
) -> Option<([CMat; 4], Tensor4, f64)> {
    let d: [CMat; 4] =
        [new[0] - &old[0], new[1] - &old[1], new[2] - &old[2], new[3] - &old[3]];
    let old_exp0 = &old[0] * p.omega_r;
    let old_exp1 = &old[1] * p.omega_t;
    let d_exp0 = &d[0] * p.omega_r;
    let d_exp1 = &d[1] * p.omega_t;
    let old_slots: [&CMat; 4] = [&old_exp0, &old_exp1, &old[2], &old[3]];
    let delta_slots: [&CMat; 4] = [&d_exp0, &d_exp1, &d[2], &d[3]];

    // uₖ = Σ over slot subsets of size k of the model with those slots taking
    // the displacement; the model along the line is Σₖ sᵏ·uₖ (u₀ = old model).
    let len = p.y.len();
    let mut u: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::ZERO; len]);
    for mask in 1u32..16 {
        let pick = |b: usize| {
            if mask & (1 << b) != 0 {
                delta_slots[b]
            } else {
                old_slots[b]
            }
        };
        let term = cp_build(pick(0), pick(1), pick(2), pick(3));
        let k = mask.count_ones() as usize;
        for (acc, v) in u[k - 1].iter_mut().zip(term.data()) {
            *acc += *v;
        }
    }

    // ‖E − Σₖ sᵏ·uₖ‖² with E the old residual, expanded into Σ c[i]·sⁱ.
    let e: Vec<Complex64> =
        p.y.data().iter().zip(old_model.data()).map(|(a, b)| a - b).collect();
    let mut c = [0.0f64; 9];
    c[0] = e.iter().map(|z| z.norm_sqr()).sum();
    for k in 1..=4 {
        c[k] -= 2.0 * slice_dot(&e, &u[k - 1]).re;
    }
    for j in 1..=4 {
        for k in 1..=4 {
            c[j + k] += slice_dot(&u[j - 1], &u[k - 1]).re;
        }
    }

    let deriv: Vec<f64> = (0..8).map(|i| (i as f64 + 1.0) * c[i + 1]).collect();
    let value = |s: f64| c.iter().rev().fold(0.0, |acc, k| acc * s + k);
    let mut s_best = 1.0;
    let mut f_best = value(1.0);
    for r in poly_real_roots(&deriv) {
        if r.is_finite() && r.abs() <= 1e4 {
            let f = value(r);
            if f < f_best {
                f_best = f;
                s_best = r;
            }
        }
    }
    if s_best == 1.0 {
        return None;
    }

    let step = Complex64::from(s_best);
    let jumped: [CMat; 4] = std::array::from_fn(|b| &old[b] + &d[b] * step);
    let model =
        cp_build(&(&jumped[0] * p.omega_r), &(&jumped[1] * p.omega_t), &jumped[2], &jumped[3]);
    let fit = (p.y - &model).norm() / p.norm_y;
    // Guard against polynomial roundoff recommending a step that does not
    // actually beat the plain sweep.
    if fit >= plain_fit {
        return None;
    }
    Some((jumped, model, fit))
}

/// Leading `k` left singular vectors of `m`, padded with random Gaussian
/// columns when `m` cannot supply that many.
fn leading_left(m: &CMat, k: usize, rng: &mut ChaCha8Rng) -> Result<CMat> {
    let dec = svd(m)?;
    let have = dec.u.ncols().min(k);
    let mut out = CMat::from_fn(m.nrows(), k, |i, j| {
        if j < have {
            dec.u[(i, j)]
        } else {
            Complex64::ZERO
        }
    });
    if have < k {
        let pad = crate::linalg::complex_gaussian_matrix(m.nrows(), k - have, rng);
        for j in have..k {
            out.column_mut(j).copy_from(&pad.column(j - have));
        }
    }
    Ok(out)
}

fn als_single(
    p: &AlsProblem,
    i_max: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    spectral: bool,
) -> Result<FactorEstimates> {
    let dims =
        [p.unfolds[0].nrows(), p.unfolds[1].nrows(), p.unfolds[2].nrows(), p.unfolds[3].nrows()];
    let l = p.l_t * p.l_r;

    // Initialization: either the leading left singular vectors of the
    // matching unfoldings (exact factor subspaces on clean data) or random
    // complex Gaussian factors. The RX-side factor is produced by the first
    // update and needs no initial value.
    let (a_t_bar, b_h_bar, b_v_bar) = if spectral {
        (
            leading_left(&p.unfolds[1], p.l_t, rng)?,
            leading_left(&p.unfolds[2], l, rng)?,
            leading_left(&p.unfolds[3], l, rng)?,
        )
    } else {
        (
            crate::linalg::complex_gaussian_matrix(dims[1], p.l_t, rng),
            crate::linalg::complex_gaussian_matrix(dims[2], l, rng),
            crate::linalg::complex_gaussian_matrix(dims[3], l, rng),
        )
    };
    als_loop(p, i_max, tol, a_t_bar, b_h_bar, b_v_bar)
}

/// The ALS sweep loop from given initial TX-side and surface factors.
fn als_loop(
    p: &AlsProblem,
    i_max: usize,
    tol: f64,
    mut a_t_bar: CMat,
    mut b_h_bar: CMat,
    mut b_v_bar: CMat,
) -> Result<FactorEstimates> {
    let l = p.l_t * p.l_r;
    let mut a_r_bar = CMat::zeros(p.unfolds[0].nrows(), p.l_r);

    let mut fit_history = Vec::new();
    let mut prev_fit = f64::INFINITY;
    let mut iterations = 0;
    // Accepted factors and model of the previous sweep, the line-search base.
    let mut prev: Option<([CMat; 4], Tensor4)> = None;

    for it in 0..i_max {
        let a2 = &a_t_bar * p.omega_t;
        let c1 = p.omega_r * khatri_rao3(&b_v_bar, &b_h_bar, &a2).transpose();
        a_r_bar = ls_right(&p.unfolds[0], &c1, it, p.l_r)?;

        let a1 = &a_r_bar * p.omega_r;
        let c2 = p.omega_t * khatri_rao3(&b_v_bar, &b_h_bar, &a1).transpose();
        a_t_bar = ls_right(&p.unfolds[1], &c2, it, p.l_t)?;

        let a2 = &a_t_bar * p.omega_t;
        let c3 = khatri_rao3(&b_v_bar, &a2, &a1).transpose();
        b_h_bar = ls_right(&p.unfolds[2], &c3, it, l)?;

        let c4 = khatri_rao3(&b_h_bar, &a2, &a1).transpose();
        b_v_bar = ls_right(&p.unfolds[3], &c4, it, l)?;

        let mut model = cp_build(&a1, &a2, &b_h_bar, &b_v_bar);
        let mut fit = (p.y - &model).norm() / p.norm_y;

        if let Some((old, old_model)) = prev.as_ref() {
            if let Some((jumped, j_model, j_fit)) = line_search_jump(
                p,
                old,
                old_model,
                [&a_r_bar, &a_t_bar, &b_h_bar, &b_v_bar],
                fit,
            ) {
                [a_r_bar, a_t_bar, b_h_bar, b_v_bar] = jumped;
                model = j_model;
                fit = j_fit;
            }
        }
        prev = Some((
            [a_r_bar.clone(), a_t_bar.clone(), b_h_bar.clone(), b_v_bar.clone()],
            model,
        ));

        fit_history.push(fit);
        iterations = it + 1;

        let converged = fit <= FIT_FLOOR
            || (prev_fit.is_finite() && (prev_fit - fit).abs() <= tol * prev_fit.max(f64::MIN_POSITIVE));
        prev_fit = fit;
        if converged {
            break;
        }
    }

    Ok(FactorEstimates { a_r_bar, a_t_bar, b_h_bar, b_v_bar, iterations, fit_history })
}

/// Column-pair coherence above which two columns count as collapsed
/// duplicates. Legal draws stay well below this: even at the minimum
/// frequency separation, compressed steering columns correlate around 0.9.
const DUPLICATE_COHERENCE: f64 = 0.99;

/// Final relative residual above which a finished start is worth rescuing.
const RESCUE_FIT: f64 = 1e-9;

/// Most coherent column pair of `m` as `(i, j, coherence)` with `i < j`.
fn max_column_coherence(m: &CMat) -> Option<(usize, usize, f64)> {
    let n = m.ncols();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let denom = m.column(i).norm() * m.column(j).norm();
            if denom == 0.0 {
                continue;
            }
            let c = m.column(i).dotc(&m.column(j)).norm() / denom;
            if best.is_none_or(|(_, _, b)| c > b) {
                best = Some((i, j, c));
            }
        }
    }
    best
}

/// Attempt to rescue a finished start whose TX-side or RX-side factor
/// collapsed into duplicate columns.
///
/// Duplicate steering columns are the signature local minimum under strong
/// path-gain imbalance: both columns chase the dominant direction while the
/// weak path's component survives untouched in the residual. The rescue
/// replaces the duplicate with the leading left singular vector of the
/// matching residual unfolding, re-fits the joint surface factor exactly for
/// the repaired steering factors (one least-squares solve, then a rank-1
/// split per column), and restarts the sweep loop from there. Returns
/// `None` when no column pair exceeds the duplicate-coherence bar.
fn rescue_collapsed(
    p: &AlsProblem,
    est: &FactorEstimates,
    i_max: usize,
    tol: f64,
) -> Result<Option<FactorEstimates>> {
    let mut a_t_bar = est.a_t_bar.clone();
    let mut a_r_bar = est.a_r_bar.clone();

    let model = cp_build(
        &(&a_r_bar * p.omega_r),
        &(&a_t_bar * p.omega_t),
        &est.b_h_bar,
        &est.b_v_bar,
    );
    let residual = p.y - &model;

    let mut repaired = false;
    for (factor, mode) in [(&mut a_t_bar, 2usize), (&mut a_r_bar, 1usize)] {
        let Some((_, j, c)) = max_column_coherence(factor) else {
            continue;
        };
        if c < DUPLICATE_COHERENCE {
            continue;
        }
        let lead = svd(&residual.mode_n_unfold(mode))?;
        if lead.s[0] > 0.0 {
            for r in 0..factor.nrows() {
                factor[(r, j)] = lead.u[(r, 0)];
            }
            repaired = true;
        }
    }
    if !repaired {
        return Ok(None);
    }

    let (b_h_bar, b_v_bar) = surface_refit(p, &a_t_bar, &a_r_bar)?;
    als_loop(p, i_max, tol, a_t_bar, b_h_bar, b_v_bar).map(Some)
}

/// Exact surface re-fit for fixed steering factors: with the mode-1/2
/// factors fixed, the joint surface factor Khatri-Rao(B̄_v, B̄_h) solves a
/// single least-squares problem, and each of its columns splits into its
/// rank-1 vertical/horizontal pair.
fn surface_refit(p: &AlsProblem, a_t_bar: &CMat, a_r_bar: &CMat) -> Result<(CMat, CMat)> {
    let [k1, k2, k3, k4] = p.y.dims();
    let z = CMat::from_fn(k3 * k4, k1 * k2, |r, c| p.y.at(c % k1, c / k1, r % k3, r / k3));
    let dict = khatri_rao(&(a_t_bar * p.omega_t), &(a_r_bar * p.omega_r)).transpose();
    let (dict_pinv, _) = pinv(&dict)?;
    let w = z * dict_pinv;
    let l = p.l_t * p.l_r;
    let mut b_h_bar = CMat::zeros(k3, l);
    let mut b_v_bar = CMat::zeros(k4, l);
    for n in 0..l {
        let m = CMat::from_fn(k3, k4, |i_h, i_v| w[(i_h + k3 * i_v, n)]);
        let dec = svd(&m)?;
        let scale = dec.s[0].sqrt();
        for i_h in 0..k3 {
            b_h_bar[(i_h, n)] = dec.u[(i_h, 0)] * scale;
        }
        for i_v in 0..k4 {
            b_v_bar[(i_v, n)] = dec.v[(i_v, 0)].conj() * scale;
        }
    }
    Ok((b_h_bar, b_v_bar))
}

/// Alternation rounds the block-deflation rescue may spend.
const DEFLATION_ROUNDS: usize = 40;

/// Joint relative residual at which the deflation alternation stops early.
const DEFLATION_FLOOR: f64 = 1e-12;

/// Model tensor of a sub-estimate under its own repetition structure.
fn structured_model(est: &FactorEstimates, l_t: usize, l_r: usize) -> Tensor4 {
    let (omega_t, omega_r) = selection_matrices(l_t, l_r);
    cp_build(&(&est.a_r_bar * &omega_r), &(&est.a_t_bar * &omega_t), &est.b_h_bar, &est.b_v_bar)
}

/// [`AlsProblem`] over `y` for path counts `(l_t, l_r)` with the matching
/// selection matrices borrowed from the caller.
fn make_problem<'a>(
    y: &'a Tensor4,
    l_t: usize,
    l_r: usize,
    omega_t: &'a CMat,
    omega_r: &'a CMat,
) -> AlsProblem<'a> {
    AlsProblem {
        y,
        unfolds: [y.mode_n_unfold(1), y.mode_n_unfold(2), y.mode_n_unfold(3), y.mode_n_unfold(4)],
        norm_y: y.norm(),
        omega_t,
        omega_r,
        l_t,
        l_r,
    }
}

/// Column assignment from `reference` columns to `candidate` columns that
/// maximizes the summed coherence, by exhaustive search over permutations
/// (path counts are tiny).
fn best_column_assignment(reference: &CMat, candidate: &CMat) -> Vec<usize> {
    let n = reference.ncols();
    let coherence = |i: usize, j: usize| {
        let denom = reference.column(i).norm() * candidate.column(j).norm();
        if denom == 0.0 {
            0.0
        } else {
            reference.column(i).dotc(&candidate.column(j)).norm() / denom
        }
    };
    let score = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| coherence(i, j)).sum() };
    (0..n).permutations(n).max_by(|a, b| score(a).total_cmp(&score(b))).unwrap_or_default()
}

/// Block-deflation rescue for runs stuck at a collapse minimum that the
/// in-run column repair could not fix.
///
/// Under extreme path-gain imbalance the joint problem has local minima
/// where every steering column on one side chases the dominant direction,
/// and joint sweeps afterwards crawl: each block update is dominated by the
/// strong paths' own error, which buries the weak path's contribution.
/// Splitting the collapsed side into a strong block and the single weakest
/// path, and alternating full re-estimation of each block on the
/// measurement minus the other block's model, keeps both subproblems
/// internally gain-balanced, so each converges cleanly and the alternation
/// contracts the joint residual geometrically. The blocks share the factor
/// of the non-collapsed side; assembly aligns the weak block's copy of it
/// to the strong block's by the best column assignment, and a short joint
/// polish reconciles the remaining mismatch.
fn rescue_deflation(
    y: &Tensor4,
    est: &FactorEstimates,
    l_t: usize,
    l_r: usize,
    i_max: usize,
    tol: f64,
    seed: u64,
) -> Result<Option<FactorEstimates>> {
    let norm_y = y.norm();
    if norm_y == 0.0 {
        return Ok(None);
    }
    let dims = y.dims();
    // The collapsed side is the one with the most coherent column pair.
    let coh_t = max_column_coherence(&est.a_t_bar);
    let coh_r = max_column_coherence(&est.a_r_bar);
    let score = |c: Option<(usize, usize, f64)>| c.map_or(-1.0, |(_, _, v)| v);
    if score(coh_t).max(score(coh_r)) < DUPLICATE_COHERENCE {
        return Ok(None);
    }
    let tx_side = score(coh_t) >= score(coh_r);
    let (_, drop_col, _) = if tx_side { coh_t.unwrap() } else { coh_r.unwrap() };
    let (lt_s, lr_s, lt_w, lr_w) =
        if tx_side { (l_t - 1, l_r, 1, l_r) } else { (l_t, l_r - 1, l_t, 1) };
    let (omega_t_s, omega_r_s) = selection_matrices(lt_s, lr_s);
    let (omega_t_w, omega_r_w) = selection_matrices(lt_w, lr_w);

    // Strong-block initialization from the stuck estimate with the duplicate
    // column and its surfaces removed: the stuck run fits the strong paths
    // nearly exactly (the weak path perturbs them only at its own
    // amplitude), so the strong block starts in the right basin by
    // construction instead of gambling on a fresh start.
    let keep_t: Vec<usize> = (0..l_t).filter(|&c| !(tx_side && c == drop_col)).collect();
    let keep_r: Vec<usize> = (0..l_r).filter(|&c| !(!tx_side && c == drop_col)).collect();
    let mut a_t_s = CMat::zeros(dims[1], lt_s);
    for (new, &old) in keep_t.iter().enumerate() {
        a_t_s.column_mut(new).copy_from(&est.a_t_bar.column(old));
    }
    let mut b_h_s = CMat::zeros(dims[2], lt_s * lr_s);
    let mut b_v_s = CMat::zeros(dims[3], lt_s * lr_s);
    for (nt, &ot) in keep_t.iter().enumerate() {
        for (nr, &or) in keep_r.iter().enumerate() {
            b_h_s.column_mut(nt * lr_s + nr).copy_from(&est.b_h_bar.column(ot * l_r + or));
            b_v_s.column_mut(nt * lr_s + nr).copy_from(&est.b_v_bar.column(ot * l_r + or));
        }
    }
    // Each half-round re-estimates one block on the measurement minus the
    // other block's model, taking the better of a warm continuation (keeps
    // the best split found so far) and a fresh multi-restart run (spectral
    // initialization on the current deflated tensor, which is what lets a
    // bad split escape its basin). Round 0 offers the dropped-column stuck
    // estimate as the strong block's warm start.
    let refit = |deflated: &Tensor4,
                 l_t: usize,
                 l_r: usize,
                 omega_t: &CMat,
                 omega_r: &CMat,
                 warm: Option<(CMat, CMat, CMat)>,
                 cold_seed: u64|
     -> Result<FactorEstimates> {
        let p = make_problem(deflated, l_t, l_r, omega_t, omega_r);
        let warm = warm.and_then(|(a_t, b_h, b_v)| als_loop(&p, i_max, tol, a_t, b_h, b_v).ok());
        let cold = als_run_plain(deflated, l_t, l_r, i_max, tol, ALS_RESTARTS, cold_seed);
        let fit = |e: &FactorEstimates| e.fit_history.last().copied().unwrap_or(f64::INFINITY);
        match (warm, cold) {
            (Some(w), Ok(c)) => Ok(if fit(&w) <= fit(&c) { w } else { c }),
            (Some(w), Err(_)) => Ok(w),
            (None, cold) => cold,
        }
    };
    let factors_of =
        |e: &FactorEstimates| (e.a_t_bar.clone(), e.b_h_bar.clone(), e.b_v_bar.clone());

    let mut strong = refit(
        y,
        lt_s,
        lr_s,
        &omega_t_s,
        &omega_r_s,
        Some((a_t_s, b_h_s, b_v_s)),
        derive_seed(seed, &[19, 0]),
    )?;
    let mut weak = als_run_plain(
        &(y - &structured_model(&strong, lt_s, lr_s)),
        lt_w,
        lr_w,
        i_max,
        tol,
        ALS_RESTARTS,
        derive_seed(seed, &[23, 0]),
    )?;
    let mut rounds = Vec::new();
    for round in 1..=DEFLATION_ROUNDS as u64 {
        let resid_w = y - &structured_model(&weak, lt_w, lr_w);
        if resid_w.norm() > 0.0 {
            strong = refit(
                &resid_w,
                lt_s,
                lr_s,
                &omega_t_s,
                &omega_r_s,
                Some(factors_of(&strong)),
                derive_seed(seed, &[19, round]),
            )?;
        }
        let resid_s = y - &structured_model(&strong, lt_s, lr_s);
        if resid_s.norm() > 0.0 {
            weak = refit(
                &resid_s,
                lt_w,
                lr_w,
                &omega_t_w,
                &omega_r_w,
                Some(factors_of(&weak)),
                derive_seed(seed, &[23, round]),
            )?;
        }
        let joint = (&(y - &structured_model(&strong, lt_s, lr_s))
            - &structured_model(&weak, lt_w, lr_w))
            .norm()
            / norm_y;
        rounds.push(joint);
        let n = rounds.len();
        let stalled = n >= 6
            && rounds[n - 1] > 0.95 * rounds[n - 2]
            && rounds[n - 2] > 0.95 * rounds[n - 3];
        if joint <= DEFLATION_FLOOR || stalled {
            break;
        }
    }

    // Assemble joint factors: the strong block's paths first, then the weak
    // block's, with the weak block's copy of the shared-side factor aligned
    // to the strong block's columns.
    let l = l_t * l_r;
    let mut a_t_j = CMat::zeros(dims[1], l_t);
    let mut a_r_j = CMat::zeros(dims[0], l_r);
    let mut b_h_j = CMat::zeros(dims[2], l);
    let mut b_v_j = CMat::zeros(dims[3], l);
    // Forcing the weak block onto the strong block's copy of the shared
    // factor changes each of its columns by a complex scale (CP scaling
    // indeterminacy), which must be transferred into the weak surfaces.
    let transfer = |shared_s: &CMat, shared_w: &CMat, s: usize, w: usize| -> Complex64 {
        let denom = shared_s.column(s).norm_squared();
        if denom > 0.0 {
            shared_s.column(s).dotc(&shared_w.column(w)) / Complex64::from(denom)
        } else {
            Complex64::ONE
        }
    };
    if tx_side {
        let perm = best_column_assignment(&strong.a_r_bar, &weak.a_r_bar);
        a_r_j.copy_from(&strong.a_r_bar);
        a_t_j.view_mut((0, 0), (dims[1], l_t - 1)).copy_from(&strong.a_t_bar);
        a_t_j.column_mut(l_t - 1).copy_from(&weak.a_t_bar.column(0));
        for lt in 0..l_t - 1 {
            for k in 0..l_r {
                b_h_j.column_mut(lt * l_r + k).copy_from(&strong.b_h_bar.column(lt * l_r + k));
                b_v_j.column_mut(lt * l_r + k).copy_from(&strong.b_v_bar.column(lt * l_r + k));
            }
        }
        for k in 0..l_r {
            let c = transfer(&strong.a_r_bar, &weak.a_r_bar, k, perm[k]);
            b_h_j.column_mut((l_t - 1) * l_r + k).copy_from(&weak.b_h_bar.column(perm[k]));
            b_v_j
                .column_mut((l_t - 1) * l_r + k)
                .copy_from(&(weak.b_v_bar.column(perm[k]) * c));
        }
    } else {
        let perm = best_column_assignment(&strong.a_t_bar, &weak.a_t_bar);
        a_t_j.copy_from(&strong.a_t_bar);
        a_r_j.view_mut((0, 0), (dims[0], l_r - 1)).copy_from(&strong.a_r_bar);
        a_r_j.column_mut(l_r - 1).copy_from(&weak.a_r_bar.column(0));
        for lt in 0..l_t {
            for k in 0..l_r - 1 {
                b_h_j
                    .column_mut(lt * l_r + k)
                    .copy_from(&strong.b_h_bar.column(lt * (l_r - 1) + k));
                b_v_j
                    .column_mut(lt * l_r + k)
                    .copy_from(&strong.b_v_bar.column(lt * (l_r - 1) + k));
            }
            let c = transfer(&strong.a_t_bar, &weak.a_t_bar, lt, perm[lt]);
            b_h_j.column_mut(lt * l_r + (l_r - 1)).copy_from(&weak.b_h_bar.column(perm[lt]));
            b_v_j
                .column_mut(lt * l_r + (l_r - 1))
                .copy_from(&(weak.b_v_bar.column(perm[lt]) * c));
        }
    }

    let (omega_t, omega_r) = selection_matrices(l_t, l_r);
    let assembled_fit =
        (y - &cp_build(&(&a_r_j * &omega_r), &(&a_t_j * &omega_t), &b_h_j, &b_v_j)).norm() / norm_y;
    rounds.push(assembled_fit);
    let assembled = FactorEstimates {
        a_r_bar: a_r_j.clone(),
        a_t_bar: a_t_j.clone(),
        b_h_bar: b_h_j.clone(),
        b_v_bar: b_v_j.clone(),
        iterations: rounds.len(),
        fit_history: rounds,
    };

    // A short joint polish reconciles the alignment mismatch; keep it only
    // if it actually helps (a long joint run could crawl back toward the
    // collapse basin).
    let p_joint = make_problem(y, l_t, l_r, &omega_t, &omega_r);
    if let Ok(polished) = als_loop(&p_joint, i_max.min(50), tol, a_t_j, b_h_j, b_v_j) {
        let polished_fit = polished.fit_history.last().copied().unwrap_or(f64::INFINITY);
        if polished_fit < assembled_fit {
            return Ok(Some(polished));
        }
    }
    Ok(Some(assembled))
}

/// Constrained ALS decomposition of the measurement tensor with path counts
/// `(L_T, L_R)`.
///
/// Runs [`ALS_RESTARTS`] starts and returns the one with the lowest final
/// relative residual: the first start is seeded from the unfoldings' leading
/// singular vectors, later starts from random complex Gaussian factors
/// (restart `r` uses a sub-seed derived from `seed` and `r`), and any start
/// that finishes poorly gets a duplicate-column rescue pass. A sweep updates
/// `Ā_R`, `Ā_T`, `B̄_h`, `B̄_v` in that order, always against the freshest
/// other factors, follows with an exact line search along the sweep's
/// displacement, and stops when the residual change falls below `tol`
/// (relative) or after `i_max` sweeps. Errors: the training budgets can be
/// too small for the path counts, or every start can lose rank in a design
/// matrix.
pub fn als_run(
    y: &Tensor4,
    l_t: usize,
    l_r: usize,
    i_max: usize,
    tol: f64,
    seed: u64,
) -> Result<FactorEstimates> {
    als_run_with_restarts(y, l_t, l_r, i_max, tol, ALS_RESTARTS, seed)
}

/// [`als_run`] with an explicit restart count instead of [`ALS_RESTARTS`].
///
/// Hard instances — nearly coherent path frequencies under the compressed
/// training apertures, or strongly unequal path gains — can trap a sizeable
/// fraction of random initializations in swamps, so large Monte Carlo sweeps
/// buy reliability with extra restarts rather than extra sweeps. If every
/// start still ends at a collapse minimum (duplicate steering columns), a
/// block-deflation rescue re-estimates the strong and weak path blocks
/// separately and alternates them to convergence; see [`rescue_deflation`].
pub fn als_run_with_restarts(
    y: &Tensor4,
    l_t: usize,
    l_r: usize,
    i_max: usize,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> Result<FactorEstimates> {
    let mut best = als_run_plain(y, l_t, l_r, i_max, tol, restarts, seed)?;
    let fit = best.fit_history.last().copied().unwrap_or(f64::INFINITY);
    if fit > RESCUE_FIT {
        if let Ok(Some(deflated)) = rescue_deflation(y, &best, l_t, l_r, i_max, tol, seed) {
            let deflated_fit = deflated.fit_history.last().copied().unwrap_or(f64::INFINITY);
            if deflated_fit < fit {
                best = deflated;
            }
        }
    }
    Ok(best)
}

/// The restart loop without the block-deflation rescue; deflation's
/// sub-estimates come back here, which keeps the recursion depth at one.
fn als_run_plain(
    y: &Tensor4,
    l_t: usize,
    l_r: usize,
    i_max: usize,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> Result<FactorEstimates> {
    let dims = y.dims();
    check_identifiability(dims, l_t, l_r)?;
    let l = l_t * l_r;

    let norm_y = y.norm();
    if norm_y == 0.0 {
        return Ok(FactorEstimates {
            a_r_bar: CMat::zeros(dims[0], l_r),
            a_t_bar: CMat::zeros(dims[1], l_t),
            b_h_bar: CMat::zeros(dims[2], l),
            b_v_bar: CMat::zeros(dims[3], l),
            iterations: 0,
            fit_history: Vec::new(),
        });
    }

    let (omega_t, omega_r) = selection_matrices(l_t, l_r);
    let p = make_problem(y, l_t, l_r, &omega_t, &omega_r);

    let mut best: Option<FactorEstimates> = None;
    let mut last_err = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rand::SeedableRng::seed_from_u64(derive_seed(seed, &[restart as u64]));
        // The first start seeds the factors from the unfoldings' leading
        // singular vectors; later starts draw random factors.
        match als_single(&p, i_max, tol, &mut rng, restart == 0) {
            Ok(mut est) => {
                let mut fit = est.fit_history.last().copied().unwrap_or(f64::INFINITY);
                if fit > RESCUE_FIT {
                    if let Ok(Some(rescued)) = rescue_collapsed(&p, &est, i_max, tol) {
                        let rescued_fit =
                            rescued.fit_history.last().copied().unwrap_or(f64::INFINITY);
                        if rescued_fit < fit {
                            est = rescued;
                            fit = rescued_fit;
                        }
                    }
                }
                let best_fit = best
                    .as_ref()
                    .and_then(|b| b.fit_history.last().copied())
                    .unwrap_or(f64::INFINITY);
                if fit < best_fit {
                    best = Some(est);
                }
                if fit <= FIT_FLOOR {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(est) => Ok(est),
        None => Err(last_err.expect("no restarts ran")),
    }
}

/// Grid sizes for per-column frequency recovery.
#[derive(Clone, Copy, Debug)]
pub struct RecoveryOptions {
    /// Coarse grid points over the search range.
    pub grid0: usize,
    /// Zoomed refinement stages; each shrinks the sample spacing tenfold,
    /// so the final resolution is `range / (grid0 · 10^refine_levels)`.
    pub refine_levels: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { grid0: 256, refine_levels: 4 }
    }
}

/// Recover one spatial frequency from a factor column.
///
/// Maximizes the normalized correlation
/// `|colᴴ · P·v(ν)| / (‖col‖·‖P·v(ν)‖)` over `ν` in `range`, where `P` is
/// the probing projector that maps a steering vector `v(ν)` (length
/// `P.ncols()`) into the factor's row space. A coarse scan of `grid0` points
/// is followed by `refine_levels` zoom stages, each scanning 21 points
/// spaced a tenth of the previous spacing around the incumbent. The result
/// is folded back into `range`; errors on an all-zero column.
pub fn recover_frequency(
    col: &CVec,
    projector: &CMat,
    grid0: usize,
    refine_levels: usize,
    range: (f64, f64),
) -> Result<f64> {
    assert!(grid0 >= 2, "recover_frequency: coarse grid needs at least 2 points");
    let col_norm = col.norm();
    if col_norm == 0.0 {
        return Err(Error::ZeroColumn);
    }
    let m = projector.ncols();
    let span = range.1 - range.0;
    assert!(span > 0.0, "recover_frequency: empty search range");

    let score = |nu: f64| -> f64 {
        let pv = projector * steering_1d(nu, m);
        let denom = pv.norm() * col_norm;
        if denom == 0.0 {
            return 0.0;
        }
        let corr: Complex64 = col.iter().zip(pv.iter()).map(|(c, p)| c.conj() * p).sum();
        corr.norm() / denom
    };

    Ok(scan_peak(score, grid0, refine_levels, range))
}

/// Coarse-grid maximization of `score` over `range` followed by zoom
/// refinement stages; the peak is folded back into `range`.
fn scan_peak(
    score: impl Fn(f64) -> f64,
    grid0: usize,
    refine_levels: usize,
    range: (f64, f64),
) -> f64 {
    let span = range.1 - range.0;
    let coarse = span / grid0 as f64;
    let mut best_nu = range.0;
    let mut best_score = -1.0;
    for i in 0..grid0 {
        let nu = range.0 + i as f64 * coarse;
        let s = score(nu);
        if s > best_score {
            best_score = s;
            best_nu = nu;
        }
    }

    let mut step = coarse;
    for _ in 0..refine_levels {
        let center = best_nu;
        let fine = step / 10.0;
        for j in -10i32..=10 {
            let nu = center + j as f64 * fine;
            let s = score(nu);
            if s > best_score {
                best_score = s;
                best_nu = nu;
            }
        }
        step = fine;
    }

    range.0 + (best_nu - range.0).rem_euclid(span)
}

/// Frequency whose projected steering vector carries the most energy of the
/// matrix `m` (matched filter `‖mᴴ·P·v(ν)‖ / ‖P·v(ν)‖` over `[0, 2π)`).
fn matched_frequency(m: &CMat, projector: &CMat, grid0: usize, refine_levels: usize) -> f64 {
    let antennas = projector.ncols();
    let score = |nu: f64| -> f64 {
        let pv = projector * steering_1d(nu, antennas);
        let denom = pv.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (m.adjoint() * &pv).norm() / denom
    };
    scan_peak(score, grid0, refine_levels, (0.0, TAU))
}

/// Matched-filter rescue for collapsed steering columns.
///
/// Like [`rescue_collapsed`], but with the training projectors available the
/// duplicate column is rebuilt from the steering dictionary itself: the
/// residual unfolding is scanned for the frequency whose compressed steering
/// vector carries the most residual energy. That lands the repaired column
/// inside the weak path's basin far more reliably than the raw leading
/// singular vector of the residual.
fn rescue_matched(
    p: &AlsProblem,
    est: &FactorEstimates,
    tr: &TrainingSetup,
    cfg: &ArrayConfig,
    i_max: usize,
    tol: f64,
) -> Result<Option<FactorEstimates>> {
    let mut a_t_bar = est.a_t_bar.clone();
    let mut a_r_bar = est.a_r_bar.clone();
    let model = cp_build(
        &(&a_r_bar * p.omega_r),
        &(&a_t_bar * p.omega_t),
        &est.b_h_bar,
        &est.b_v_bar,
    );
    let residual = p.y - &model;

    let mut repaired = false;
    let f_t = tr.f.transpose();
    let w_h = tr.w.adjoint();
    for (factor, mode, proj, antennas) in [
        (&mut a_t_bar, 2usize, &f_t, cfg.m_t),
        (&mut a_r_bar, 1usize, &w_h, cfg.m_r),
    ] {
        let Some((_, j, c)) = max_column_coherence(factor) else {
            continue;
        };
        if c < DUPLICATE_COHERENCE {
            continue;
        }
        let psi = matched_frequency(&residual.mode_n_unfold(mode), proj, 512, 2);
        let col = proj * steering_1d(psi, antennas);
        for r in 0..factor.nrows() {
            factor[(r, j)] = col[r];
        }
        repaired = true;
    }
    if !repaired {
        return Ok(None);
    }

    let (b_h_bar, b_v_bar) = surface_refit(p, &a_t_bar, &a_r_bar)?;
    als_loop(p, i_max, tol, a_t_bar, b_h_bar, b_v_bar).map(Some)
}

/// Spatial frequencies recovered from the ALS factors, plus re-fit gains.
#[derive(Clone, Debug)]
pub struct RecoveredParams {
    /// RX array frequencies (length `L_R`), ordered like the `Ā_R` columns.
    pub psi_r: Vec<f64>,
    /// TX array frequencies (length `L_T`), ordered like the `Ā_T` columns.
    pub psi_t: Vec<f64>,
    /// Combined horizontal surface frequencies (length `L`).
    pub mu_h: Vec<f64>,
    /// Combined vertical surface frequencies (length `L`).
    pub mu_v: Vec<f64>,
    /// Combined path gains (length `L` once fitted; empty until then).
    pub g_hat: Vec<Complex64>,
}

/// Recover every spatial frequency from the ALS factors.
///
/// Each factor column is matched against its own projected steering family:
/// `Wᴴ` for RX, `Fᵀ` for TX, `Φ_hᵀ`/`Φ_vᵀ` for the surface axes. All
/// searches run over `[0, 2π)`; normalization makes the match invariant to
/// the unknown per-column scale (including the gains riding on `B̄_v`).
/// Gains are left empty for [`estimate_gains`].
pub fn recover_all_params(
    est: &FactorEstimates,
    tr: &TrainingSetup,
    opts: &RecoveryOptions,
) -> Result<RecoveredParams> {
    let full = (0.0, TAU);
    let recover_cols = |factor: &CMat, projector: &CMat| -> Result<Vec<f64>> {
        (0..factor.ncols())
            .map(|c| {
                let col = CVec::from_fn(factor.nrows(), |r, _| factor[(r, c)]);
                recover_frequency(&col, projector, opts.grid0, opts.refine_levels, full)
            })
            .collect()
    };

    Ok(RecoveredParams {
        psi_r: recover_cols(&est.a_r_bar, &tr.w.adjoint())?,
        psi_t: recover_cols(&est.a_t_bar, &tr.f.transpose())?,
        mu_h: recover_cols(&est.b_h_bar, &tr.phi_h.transpose())?,
        mu_v: recover_cols(&est.b_v_bar, &tr.phi_v.transpose())?,
        g_hat: Vec::new(),
    })
}

/// Re-fit the combined path gains by least squares on the vectorized
/// measurement.
///
/// Rebuilds the four projected steering factors from the recovered
/// frequencies, forms the `K_R·K_T·K_S^h·K_S^v × L` dictionary whose column
/// `n` is the Kronecker-structured response of combined path `n`, and solves
/// for the gains. Errors if the dictionary loses rank (unresolvable paths).
pub fn estimate_gains(
    y_vec: &CVec,
    params: &RecoveredParams,
    tr: &TrainingSetup,
    cfg: &ArrayConfig,
) -> Result<Vec<Complex64>> {
    let l_t = params.psi_t.len();
    let l_r = params.psi_r.len();
    let l = l_t * l_r;
    let (omega_t, omega_r) = selection_matrices(l_t, l_r);

    let d1 = tr.w.adjoint() * steering_mat_1d(&params.psi_r, cfg.m_r) * omega_r;
    let d2 = tr.f.transpose() * steering_mat_1d(&params.psi_t, cfg.m_t) * omega_t;
    let d3 = tr.phi_h.transpose() * steering_mat_1d(&params.mu_h, cfg.m_s_h);
    let d4 = tr.phi_v.transpose() * steering_mat_1d(&params.mu_v, cfg.m_s_v);

    // Rows of the vectorized tensor run fastest over the combiner index, so
    // the RX factor sits innermost in the Khatri-Rao chain.
    let dict = khatri_rao(&khatri_rao3(&d4, &d3, &d2), &d1);
    let y_mat = CMat::from_fn(y_vec.len(), 1, |r, _| y_vec[r]);
    let sol = ls_solve(&dict, &y_mat)?;
    if sol.rank < l {
        return Err(Error::RankDeficientDictionary { rank: sol.rank, expected: l });
    }
    Ok(sol.x.column(0).iter().copied().collect())
}

/// Rebuild the cascaded channel from recovered parameters:
/// `(Â_T ⊗ Â_R) · diag(ĝ) · (B̂_v ⋄ B̂_h)ᵀ` (`M_T·M_R × M_S`).
///
/// # Panics
/// If the gains have not been fitted.
pub fn reconstruct_cascaded(params: &RecoveredParams, cfg: &ArrayConfig) -> CMat {
    assert!(
        !params.g_hat.is_empty(),
        "reconstruct_cascaded: gains must be fitted before reconstruction"
    );
    let a_t = steering_mat_1d(&params.psi_t, cfg.m_t);
    let a_r = steering_mat_1d(&params.psi_r, cfg.m_r);
    let b_v = steering_mat_1d(&params.mu_v, cfg.m_s_v);
    let b_h = steering_mat_1d(&params.mu_h, cfg.m_s_h);
    kronecker(&a_t, &a_r) * diag(&params.g_hat) * khatri_rao(&b_v, &b_h).transpose()
}

/// The two hop estimates split out of a cascaded-channel estimate.
#[derive(Clone, Debug)]
pub struct SeparatedChannels {
    /// TX-to-surface estimate (`M_S × M_T`), known only up to one scalar per
    /// surface element (cancelled by the matching scalar in `h_r_hat`).
    pub h_t_hat: CMat,
    /// Surface-to-RX estimate (`M_R × M_S`).
    pub h_r_hat: CMat,
    /// The cascaded estimate the split came from.
    pub h_c_hat: CMat,
}

/// Split a cascaded-channel estimate into its two hops, column by column.
///
/// Column `m` of the cascade is `vec` of the rank-1 outer product
/// `h_r[:,m] · h_t[m,:]`; its best rank-1 approximation `σ₁u₁v₁ᴴ` yields
/// `ĥ_r[:,m] = √σ₁·u₁` and `ĥ_t[m,:] = √σ₁·v₁ᴴ`. The per-column scale/phase
/// split is unidentifiable, but any downstream product
/// `Ĥ_R diag(ω) Ĥ_T` is unaffected.
pub fn lskrf_split(h_c_hat: &CMat, cfg: &ArrayConfig) -> Result<SeparatedChannels> {
    assert_eq!(h_c_hat.nrows(), cfg.m_t * cfg.m_r, "lskrf_split: row count mismatch");
    assert_eq!(h_c_hat.ncols(), cfg.m_s(), "lskrf_split: column count mismatch");
    let mut h_t_hat = CMat::zeros(cfg.m_s(), cfg.m_t);
    let mut h_r_hat = CMat::zeros(cfg.m_r, cfg.m_s());
    for m in 0..cfg.m_s() {
        let x = CMat::from_fn(cfg.m_r, cfg.m_t, |r, t| h_c_hat[(t * cfg.m_r + r, m)]);
        let dec = svd(&x)?;
        let scale = dec.s[0].sqrt();
        for r in 0..cfg.m_r {
            h_r_hat[(r, m)] = dec.u[(r, 0)] * scale;
        }
        for t in 0..cfg.m_t {
            h_t_hat[(m, t)] = dec.v[(t, 0)].conj() * scale;
        }
    }
    Ok(SeparatedChannels { h_t_hat, h_r_hat, h_c_hat: h_c_hat.clone() })
}

/// Knobs for the full estimation pipeline.
#[derive(Clone, Copy, Debug)]
pub struct TenriceOptions {
    /// ALS sweep cap.
    pub i_max: usize,
    /// ALS relative-residual change tolerance.
    pub tol: f64,
    /// Random ALS restarts; the best final fit wins.
    pub restarts: usize,
    /// Frequency recovery grids.
    pub recovery: RecoveryOptions,
}

impl Default for TenriceOptions {
    fn default() -> Self {
        Self { i_max: 200, tol: 1e-8, restarts: ALS_RESTARTS, recovery: RecoveryOptions::default() }
    }
}

/// Everything produced by one full estimation run.
#[derive(Clone, Debug)]
pub struct TenriceEstimate {
    /// Raw ALS factors.
    pub factors: FactorEstimates,
    /// Recovered frequencies and fitted gains.
    pub params: RecoveredParams,
    /// Parametric cascaded-channel estimate (`M_T·M_R × M_S`).
    pub h_c_hat: CMat,
    /// Per-hop estimates split from `h_c_hat`.
    pub separated: SeparatedChannels,
}

/// Full TenRICE pipeline: ALS factorization, frequency recovery, gain
/// re-fit, cascaded reconstruction, and per-hop separation.
pub fn tenrice_estimate(
    y: &Tensor4,
    tr: &TrainingSetup,
    cfg: &ArrayConfig,
    l_t: usize,
    l_r: usize,
    opts: &TenriceOptions,
    seed: u64,
) -> Result<TenriceEstimate> {
    let mut factors =
        als_run_with_restarts(y, l_t, l_r, opts.i_max, opts.tol, opts.restarts, seed)?;

    // Second-line rescue: with the training setup in hand, a run that still
    // shows collapsed duplicate steering columns can be repaired against the
    // steering dictionary itself.
    let fit = factors.fit_history.last().copied().unwrap_or(f64::INFINITY);
    if fit > RESCUE_FIT && y.norm() > 0.0 {
        let (omega_t, omega_r) = selection_matrices(l_t, l_r);
        let p = AlsProblem {
            y,
            unfolds: [
                y.mode_n_unfold(1),
                y.mode_n_unfold(2),
                y.mode_n_unfold(3),
                y.mode_n_unfold(4),
            ],
            norm_y: y.norm(),
            omega_t: &omega_t,
            omega_r: &omega_r,
            l_t,
            l_r,
        };
        if let Ok(Some(rescued)) = rescue_matched(&p, &factors, tr, cfg, opts.i_max, opts.tol) {
            if rescued.fit_history.last().copied().unwrap_or(f64::INFINITY) < fit {
                factors = rescued;
            }
        }
    }

    let mut params = recover_all_params(&factors, tr, &opts.recovery)?;
    params.g_hat = estimate_gains(&y.as_vector(), &params, tr, cfg)?;
    let h_c_hat = reconstruct_cascaded(&params, cfg);
    let separated = lskrf_split(&h_c_hat, cfg)?;
    Ok(TenriceEstimate { factors, params, h_c_hat, separated })
}
