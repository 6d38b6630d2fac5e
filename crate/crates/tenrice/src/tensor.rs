//! Dense 4-way complex tensors: mode-n unfolding/folding and CP construction.
//!
//! The entry layout is column-major in the 4-index `(i1, i2, i3, i4)` with
//! `i1` fastest, so the raw buffer equals the column-major vectorization of
//! the *transposed* mode-4 unfolding — exactly the stacked measurement vector
//! the estimator consumes ([`Tensor4::as_vector`]).
//!
//! The unfolding convention pairs with Khatri-Rao products in *descending*
//! mode order: a CP tensor with factors `(a1, a2, a3, a4)` satisfies
//! `unfold(1) = a1·(a4 ⋄ a3 ⋄ a2)ᵀ`, `unfold(2) = a2·(a4 ⋄ a3 ⋄ a1)ᵀ`,
//! `unfold(3) = a3·(a4 ⋄ a2 ⋄ a1)ᵀ`, and `unfold(4) = a4·(a3 ⋄ a2 ⋄ a1)ᵀ`
//! (columns of each unfolding enumerate the remaining modes in ascending
//! order, the earliest varying fastest).

use num_complex::Complex64;

use crate::linalg::{CMat, CVec};

/// Dense complex 4-way tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<Complex64>,
}

impl Tensor4 {
    /// All-zero tensor of the given dimensions.
    pub fn zeros(dims: [usize; 4]) -> Self {
        let len: usize = dims.iter().product();
        Self { dims, data: vec![Complex64::new(0.0, 0.0); len] }
    }

    /// Wrap an existing column-major buffer (`i1` fastest).
    ///
    /// # Panics
    /// If the buffer length does not match the dimensions.
    pub fn from_data(dims: [usize; 4], data: Vec<Complex64>) -> Self {
        assert_eq!(
            data.len(),
            dims.iter().product::<usize>(),
            "from_data: buffer length {} does not match dims {:?}",
            data.len(),
            dims
        );
        Self { dims, data }
    }

    /// Dimensions `(I1, I2, I3, I4)`.
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    /// Total entry count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True for a zero-sized tensor.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn lin(&self, i1: usize, i2: usize, i3: usize, i4: usize) -> usize {
        debug_assert!(i1 < self.dims[0] && i2 < self.dims[1] && i3 < self.dims[2] && i4 < self.dims[3]);
        i1 + self.dims[0] * (i2 + self.dims[1] * (i3 + self.dims[2] * i4))
    }

    /// Entry at `(i1, i2, i3, i4)`.
    pub fn at(&self, i1: usize, i2: usize, i3: usize, i4: usize) -> Complex64 {
        self.data[self.lin(i1, i2, i3, i4)]
    }

    /// Mutable entry at `(i1, i2, i3, i4)`.
    pub fn at_mut(&mut self, i1: usize, i2: usize, i3: usize, i4: usize) -> &mut Complex64 {
        let idx = self.lin(i1, i2, i3, i4);
        &mut self.data[idx]
    }

    /// Raw column-major buffer.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Column-major flattening; equals `vec(unfold(4)ᵀ)`, the stacked
    /// measurement vector.
    pub fn as_vector(&self) -> CVec {
        CVec::from_column_slice(&self.data)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Mode-`n` unfolding (`n` in 1..=4): rows enumerate mode `n`, columns
    /// enumerate the remaining modes in ascending order, earliest fastest.
    ///
    /// # Panics
    /// On an invalid mode index.
    pub fn mode_n_unfold(&self, n: usize) -> CMat {
        assert!((1..=4).contains(&n), "mode_n_unfold: invalid mode index {n} (expected 1..=4)");
        let d = self.dims;
        let rows = d[n - 1];
        let cols = self.len() / rows.max(1);
        let mut out = CMat::zeros(rows, cols);
        let mut idx = [0usize; 4];
        for (l, &val) in self.data.iter().enumerate() {
            let mut rest = l;
            idx[0] = rest % d[0];
            rest /= d[0];
            idx[1] = rest % d[1];
            rest /= d[1];
            idx[2] = rest % d[2];
            idx[3] = rest / d[2];
            let mut col = 0;
            let mut stride = 1;
            for (m, &im) in idx.iter().enumerate() {
                if m != n - 1 {
                    col += im * stride;
                    stride *= d[m];
                }
            }
            out[(idx[n - 1], col)] = val;
        }
        out
    }

    /// Inverse of [`Tensor4::mode_n_unfold`] for the given dimensions.
    ///
    /// # Panics
    /// On an invalid mode index or mismatched matrix shape.
    pub fn mode_n_fold(m: &CMat, n: usize, dims: [usize; 4]) -> Self {
        assert!((1..=4).contains(&n), "mode_n_fold: invalid mode index {n} (expected 1..=4)");
        let len: usize = dims.iter().product();
        assert_eq!(m.nrows(), dims[n - 1], "mode_n_fold: row count mismatch");
        assert_eq!(m.ncols(), len / dims[n - 1].max(1), "mode_n_fold: column count mismatch");
        let mut t = Self::zeros(dims);
        let d = dims;
        let mut idx = [0usize; 4];
        for l in 0..len {
            let mut rest = l;
            idx[0] = rest % d[0];
            rest /= d[0];
            idx[1] = rest % d[1];
            rest /= d[1];
            idx[2] = rest % d[2];
            idx[3] = rest / d[2];
            let mut col = 0;
            let mut stride = 1;
            for (mm, &im) in idx.iter().enumerate() {
                if mm != n - 1 {
                    col += im * stride;
                    stride *= d[mm];
                }
            }
            t.data[l] = m[(idx[n - 1], col)];
        }
        t
    }
}

impl std::ops::Sub<&Tensor4> for &Tensor4 {
    type Output = Tensor4;

    fn sub(self, rhs: &Tensor4) -> Tensor4 {
        assert_eq!(self.dims, rhs.dims, "tensor subtraction: dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Tensor4 { dims: self.dims, data }
    }
}

/// Rank-`R` CP tensor from four factor matrices sharing a column count `R`:
/// entry `(i1, i2, i3, i4)` is `Σ_l a1[i1,l]·a2[i2,l]·a3[i3,l]·a4[i4,l]`.
///
/// # Panics
/// If the factors do not share a column count.
pub fn cp_build(a1: &CMat, a2: &CMat, a3: &CMat, a4: &CMat) -> Tensor4 {
    let rank = a1.ncols();
    assert!(
        a2.ncols() == rank && a3.ncols() == rank && a4.ncols() == rank,
        "cp_build: factors must share a column count (got {}, {}, {}, {})",
        rank,
        a2.ncols(),
        a3.ncols(),
        a4.ncols()
    );
    let dims = [a1.nrows(), a2.nrows(), a3.nrows(), a4.nrows()];
    let mut t = Tensor4::zeros(dims);
    for l in 0..rank {
        let mut pos = 0;
        for i4 in 0..dims[3] {
            for i3 in 0..dims[2] {
                let c34 = a3[(i3, l)] * a4[(i4, l)];
                for i2 in 0..dims[1] {
                    let c234 = a2[(i2, l)] * c34;
                    for i1 in 0..dims[0] {
                        t.data[pos] += a1[(i1, l)] * c234;
                        pos += 1;
                    }
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{khatri_rao3, vec_mat, C_ONE};
    use crate::testutil::{crandm, rel_err};

    const TOL: f64 = 1e-12;

    fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor4 {
        let len: usize = dims.iter().product();
        let m = crandm(len, 1, seed);
        Tensor4::from_data(dims, m.column(0).iter().copied().collect())
    }

    // 1. Rank-1 tensor from first basis vectors: single 1 at the origin of
    //    every unfolding.
    #[test]
    fn basis_rank_one_unfoldings() {
        let e = |n: usize| {
            let mut m = CMat::zeros(n, 1);
            m[(0, 0)] = C_ONE;
            m
        };
        let t = cp_build(&e(2), &e(3), &e(2), &e(4));
        for n in 1..=4 {
            let u = t.mode_n_unfold(n);
            assert_eq!(u[(0, 0)], C_ONE);
            assert!((u.norm() - 1.0).abs() < TOL);
        }
    }

    // 2. Element-wise summation oracle: cp_build matches a direct quadruple
    //    loop, and all four unfoldings match their Khatri-Rao formulas.
    #[test]
    fn cp_build_matches_elementwise_oracle_and_unfolding_formulas() {
        let a1 = crandm(2, 2, 1);
        let a2 = crandm(3, 2, 2);
        let a3 = crandm(2, 2, 3);
        let a4 = crandm(2, 2, 4);
        let t = cp_build(&a1, &a2, &a3, &a4);

        for i1 in 0..2 {
            for i2 in 0..3 {
                for i3 in 0..2 {
                    for i4 in 0..2 {
                        let mut expected = Complex64::new(0.0, 0.0);
                        for l in 0..2 {
                            expected +=
                                a1[(i1, l)] * a2[(i2, l)] * a3[(i3, l)] * a4[(i4, l)];
                        }
                        assert!((t.at(i1, i2, i3, i4) - expected).norm() < TOL);
                    }
                }
            }
        }

        let formulas = [
            (1, khatri_rao3(&a4, &a3, &a2), &a1),
            (2, khatri_rao3(&a4, &a3, &a1), &a2),
            (3, khatri_rao3(&a4, &a2, &a1), &a3),
            (4, khatri_rao3(&a3, &a2, &a1), &a4),
        ];
        for (n, kr, factor) in formulas {
            let expected = factor * kr.transpose();
            assert!(rel_err(&t.mode_n_unfold(n), &expected) < TOL, "mode {n}");
        }
    }

    // 3. fold(unfold(T, n), n) is the identity for every mode.
    #[test]
    fn fold_unfold_round_trip() {
        let t = random_tensor([3, 2, 4, 2], 5);
        for n in 1..=4 {
            let back = Tensor4::mode_n_fold(&t.mode_n_unfold(n), n, t.dims());
            assert_eq!(back, t);
        }
    }

    // 4. Identity factors build the super-diagonal tensor.
    #[test]
    fn cp_build_superdiagonal() {
        let eye = CMat::identity(3, 3);
        let t = cp_build(&eye, &eye, &eye, &eye);
        for i1 in 0..3 {
            for i2 in 0..3 {
                for i3 in 0..3 {
                    for i4 in 0..3 {
                        let on_diag = i1 == i2 && i2 == i3 && i3 == i4;
                        let expected = if on_diag { 1.0 } else { 0.0 };
                        assert!((t.at(i1, i2, i3, i4).re - expected).abs() < TOL);
                        assert!(t.at(i1, i2, i3, i4).im.abs() < TOL);
                    }
                }
            }
        }
    }

    // 5. Rank-1 all-ones factors build the all-ones tensor.
    #[test]
    fn cp_build_all_ones() {
        let ones = CMat::from_element(2, 1, C_ONE);
        let t = cp_build(&ones, &ones, &ones, &ones);
        assert!(t.data().iter().all(|z| (z - C_ONE).norm() < TOL));
    }

    // 6. The raw buffer is vec(unfold(4)ᵀ).
    #[test]
    fn as_vector_is_transposed_mode4_unfolding() {
        let t = random_tensor([2, 3, 2, 2], 6);
        let stacked = vec_mat(&t.mode_n_unfold(4).transpose());
        assert!((t.as_vector() - stacked).norm() < TOL);
    }

    // 7. Invalid mode indices panic.
    #[test]
    #[should_panic(expected = "invalid mode index")]
    fn unfold_rejects_invalid_mode() {
        let _ = random_tensor([2, 2, 2, 2], 7).mode_n_unfold(5);
    }

    // 8. Mismatched factor column counts panic.
    #[test]
    #[should_panic(expected = "share a column count")]
    fn cp_build_rejects_rank_mismatch() {
        let _ = cp_build(&crandm(2, 2, 8), &crandm(2, 3, 9), &crandm(2, 2, 10), &crandm(2, 2, 11));
    }

    // 9. Subtraction gives the residual tensor; norm is Frobenius.
    #[test]
    fn subtraction_and_norm() {
        let a = random_tensor([2, 2, 3, 2], 12);
        let b = random_tensor([2, 2, 3, 2], 13);
        let d = &a - &b;
        let direct: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!((d.norm() - direct).abs() < TOL);
    }
}
