use nalgebra::{Complex, DMatrix, DVector};

use crate::{lit, Real};

/// Largest absolute entry of `a − aᵀ`.
pub fn asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
pub fn sym_eigen_desc<T: Real>(a: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Spectral norm (largest singular value).
pub fn op_norm<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.singular_values().max()
}

/// Trace norm (sum of singular values).
pub fn trace_norm<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.singular_values().sum()
}

/// Smallest eigenvalue of the Hermitian matrix `a + i b` where `a` is real
/// symmetric and `b` real antisymmetric.
pub fn min_eig_hermitian<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let h = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| Complex::new(a[(i, j)], b[(i, j)]));
    h.symmetric_eigenvalues().min()
}
