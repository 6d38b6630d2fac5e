//! Shared helpers for the in-crate unit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{complex_gaussian_matrix, CMat};

/// Seeded portable RNG for tests.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complex Gaussian matrix from a fresh seeded RNG.
pub fn crandm(rows: usize, cols: usize, seed: u64) -> CMat {
    complex_gaussian_matrix(rows, cols, &mut rng(seed))
}

/// Relative Frobenius error `‖a − b‖ / ‖b‖`.
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

/// Largest entry-wise modulus of the difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Column `c` of `m` as an owned single-column matrix.
pub fn col(m: &CMat, c: usize) -> CMat {
    CMat::from_fn(m.nrows(), 1, |r, _| m[(r, c)])
}
