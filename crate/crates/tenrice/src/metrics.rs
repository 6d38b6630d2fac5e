//! Error metrics: permutation-aligned angular errors and normalized MSE.
//!
//! Estimated path parameters come back in an arbitrary column order, so
//! frequency errors are measured under the best assignment between the
//! estimated and true lists (brute force over permutations — path counts are
//! single digits) with wrap-around angular distance. Channel matrices are
//! compared with the normalized squared Frobenius error.

use itertools::Itertools;

use crate::channel::wrap_distance;
use crate::linalg::CMat;

/// Largest list length accepted by the brute-force assignment search.
const MAX_ASSIGNMENT: usize = 9;

fn best_assignment(est: &[f64], truth: &[f64]) -> (f64, Vec<usize>) {
    assert_eq!(est.len(), truth.len(), "aligned error: list lengths differ");
    assert!(
        est.len() <= MAX_ASSIGNMENT,
        "aligned error: brute-force assignment limited to {MAX_ASSIGNMENT} entries"
    );
    let n = est.len();
    let mut best = (f64::INFINITY, (0..n).collect::<Vec<_>>());
    for perm in (0..n).permutations(n) {
        let cost: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &p)| wrap_distance(est[p], truth[i]).powi(2))
            .sum();
        if cost < best.0 {
            best = (cost, perm);
        }
    }
    best
}

/// Sum of squared wrap-around distances under the best permutation of the
/// estimates.
pub fn aligned_sq_error(est: &[f64], truth: &[f64]) -> f64 {
    best_assignment(est, truth).0
}

/// Per-entry wrap-around distances under the best permutation, ordered by
/// the truth index.
pub fn aligned_errors(est: &[f64], truth: &[f64]) -> Vec<f64> {
    let (_, perm) = best_assignment(est, truth);
    perm.iter().enumerate().map(|(i, &p)| wrap_distance(est[p], truth[i])).collect()
}

/// Normalized squared Frobenius error `‖est − truth‖²_F / ‖truth‖²_F`.
pub fn nmse(estimate: &CMat, truth: &CMat) -> f64 {
    (estimate - truth).norm_squared() / truth.norm_squared()
}
