//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::SymmetricEigen;

use crate::{Matrix, Vector};

/// Full `rows x rows` orthogonal factor of a Householder QR of `a`.
///
/// The first `rank(a)` columns span `range(a)`; the trailing columns span its
/// orthogonal complement.
pub fn householder_full_q(a: &Matrix) -> Matrix {
    let (rows, cols) = a.shape();
    let mut r = a.clone();
    let mut q = Matrix::identity(rows, rows);
    for k in 0..cols.min(rows) {
        let x = r.view((k, k), (rows - k, 1)).column(0).clone_owned();
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- H R on the trailing block
        for j in k..cols {
            let mut col = r.view_mut((k, j), (rows - k, 1));
            let s = 2.0 * v.dot(&col.column(0)) / vnorm2;
            col.column_mut(0).axpy(-s, &v, 1.0);
        }
        // Q <- Q H
        for i in 0..rows {
            let mut row = q.view_mut((i, k), (1, rows - k));
            let s = 2.0 * row.row(0).transpose().dot(&v) / vnorm2;
            for (idx, vi) in v.iter().enumerate() {
                row[(0, idx)] -= s * vi;
            }
        }
    }
    q
}

/// Smallest eigenvalue of a symmetric matrix. Returns `+inf` for an empty matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose pseudoinverse of a symmetric positive semidefinite matrix,
/// truncating eigenvalues below `rel_cutoff * largest`.
pub fn pinv_psd(m: &Matrix, rel_cutoff: f64) -> Matrix {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        return Matrix::from_element(1, 1, if v > 0.0 { 1.0 / v } else { 0.0 });
    }
    let eig = SymmetricEigen::new(m.clone());
    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = rel_cutoff * largest;
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            let u = eig.eigenvectors.column(k);
            out += (u * u.transpose()) / lam;
        }
    }
    out
}

/// Extreme singular values `(min, max)` of `a` (over `min(rows, cols)` values).
pub fn singular_value_range(a: &Matrix) -> (f64, f64) {
    if a.nrows() == 0 || a.ncols() == 0 {
        return (f64::INFINITY, 0.0);
    }
    let sv = a.clone().singular_values();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sv.iter().copied().fold(0.0, f64::max);
    (min, max)
}

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Block-diagonal embedding `[[a, 0], [0, 0_{pad x pad}]]`.
pub fn pad_block_diag(a: &Matrix, pad: usize) -> Matrix {
    let n = a.nrows();
    let mut out = Matrix::zeros(n + pad, n + pad);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out
}

/// Concatenate `(x, y)` into one vector.
pub fn stack(x: &Vector, y: &Vector) -> Vector {
    let mut out = Vector::zeros(x.len() + y.len());
    out.rows_mut(0, x.len()).copy_from(x);
    out.rows_mut(x.len(), y.len()).copy_from(y);
    out
}
