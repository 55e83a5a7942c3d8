//! Small dense complex matrices and a coordinate-format sparse matrix.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalue floor for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;
/// Hermiticity tolerance.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `|v⟩⟨v|`.
pub fn projector(v: &[Complex64]) -> CMatrix {
    let d = v.len();
    CMatrix::from_fn(d, d, |r, s| v[r] * v[s].conj())
}

/// `max |m - m†|` entrywise; infinite for non-square input.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for s in r..n {
            worst = worst.max((m[(r, s)] - m[(s, r)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    hermitian_deviation(m) <= tol
}

/// Smallest eigenvalue of the hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().collect()
}

pub fn is_psd(m: &CMatrix, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `m^{-1/2}` for a positive definite hermitian `m`.
pub fn inverse_sqrt_psd(m: &CMatrix) -> Option<CMatrix> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 1e-14) {
        return None;
    }
    let u = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| c(1.0 / l.sqrt(), 0.0)));
    Some(u * d * u.adjoint())
}

/// Unnormalised maximally entangled vector `Σ_x |x⟩|x⟩` as a projector on `d ⊗ d`.
pub fn max_entangled_projector(d: usize) -> CMatrix {
    let mut v = vec![c(0.0, 0.0); d * d];
    for x in 0..d {
        v[x * d + x] = c(1.0, 0.0);
    }
    projector(&v)
}

/// Square matrix stored as a map from `(row, col)` to nonzero value.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|x| ((x, x), c(1.0, 0.0))).collect(),
        }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        assert!(m.is_square(), "sparse matrices are square");
        let mut entries = BTreeMap::new();
        for r in 0..m.nrows() {
            for s in 0..m.ncols() {
                let z = m[(r, s)];
                if z != c(0.0, 0.0) {
                    entries.insert((r, s), z);
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (&(r, s), &z) in &self.entries {
            m[(r, s)] = z;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, r: usize, s: usize) -> Complex64 {
        self.entries.get(&(r, s)).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(r, s), &z)| (r, s, z))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|x| self.get(x, x)).sum()
    }

    pub fn scale(&self, f: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|(&k, &z)| (k, z * f)).collect(),
        }
    }

    /// Adds `z` to entry `(r, s)`.
    pub fn add_entry(&mut self, r: usize, s: usize, z: Complex64) {
        assert!(r < self.dim && s < self.dim, "entry outside the matrix");
        *self.entries.entry((r, s)).or_default() += z;
    }

    /// `self + f * other`.
    pub fn add_scaled(&mut self, other: &SparseMatrix, f: f64) {
        assert_eq!(self.dim, other.dim);
        for (&k, &z) in &other.entries {
            *self.entries.entry(k).or_default() += z * f;
        }
    }

    pub fn kron(&self, other: &SparseMatrix) -> Self {
        let d = other.dim;
        let mut entries = BTreeMap::new();
        for (&(r1, s1), &a) in &self.entries {
            for (&(r2, s2), &b) in &other.entries {
                entries.insert((r1 * d + r2, s1 * d + s2), a * b);
            }
        }
        Self {
            dim: self.dim * d,
            entries,
        }
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.entries
            .iter()
            .map(|(&(r, s), &z)| (z - self.get(s, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Reorders tensor factors: factor `t` of the result is factor `perm[t]` of `self`.
    pub fn permute_factors(&self, dims: &[usize], perm: &[usize]) -> Self {
        assert_eq!(dims.len(), perm.len());
        assert_eq!(dims.iter().product::<usize>(), self.dim);
        let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let remap = |x: usize| {
            let digits = split_index(x, dims);
            let new_digits: Vec<usize> = perm.iter().map(|&p| digits[p]).collect();
            join_index(&new_digits, &new_dims)
        };
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(&(r, s), &z)| ((remap(r), remap(s)), z))
                .collect(),
        }
    }
}

/// Mixed-radix digits of `x`, most significant first.
pub fn split_index(mut x: usize, dims: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; dims.len()];
    for (t, &d) in dims.iter().enumerate().rev() {
        digits[t] = x % d;
        x /= d;
    }
    digits
}

pub fn join_index(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_pauli_x() {
        let x = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        assert!((min_eigenvalue(&x) + 1.0).abs() < 1e-12);
        assert!(!is_psd(&x, PSD_TOL));
        assert!(is_hermitian(&x, 0.0));
    }

    #[test]
    fn hermitian_deviation_detects_asymmetry() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 1.), c(0., 1.), c(1., 0.)]);
        assert!((hermitian_deviation(&m) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_sqrt() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2., 0.), c(0., 1.), c(0., -1.), c(2., 0.)]);
        let r = inverse_sqrt_psd(&m).unwrap();
        let back = &r * &m * &r;
        assert!(max_abs(&(back - identity(2))) < 1e-12);
        assert!(inverse_sqrt_psd(&CMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn sparse_kron_matches_dense() {
        let a = CMatrix::from_fn(2, 2, |r, s| c(r as f64 + 1.0, s as f64));
        let b = CMatrix::from_fn(3, 3, |r, s| c((r * s) as f64, 1.0));
        let sparse = SparseMatrix::from_dense(&a).kron(&SparseMatrix::from_dense(&b));
        assert_eq!(sparse.to_dense(), a.kronecker(&b));
        assert_eq!(sparse.trace(), trace(&a) * trace(&b));
    }

    #[test]
    fn factor_permutation_swaps_kron_order() {
        let a = CMatrix::from_fn(2, 2, |r, s| c(r as f64 + 2.0 * s as f64, 0.5));
        let b = CMatrix::from_fn(3, 3, |r, s| c(1.0, (r + s) as f64));
        let ab = SparseMatrix::from_dense(&a.kronecker(&b));
        let ba = ab.permute_factors(&[2, 3], &[1, 0]);
        assert_eq!(ba.to_dense(), b.kronecker(&a));
    }

    #[test]
    fn index_digits_round_trip() {
        let dims = [2, 3, 4];
        for x in 0..24 {
            assert_eq!(join_index(&split_index(x, &dims), &dims), x);
        }
    }
}
