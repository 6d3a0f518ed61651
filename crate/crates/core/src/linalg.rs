//! Small dense linear-algebra helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Frobenius norm.
pub fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`; returns the absolute error when `b` is zero.
pub fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = frob(b);
    let num = frob(&(a - b));
    if denom > 0.0 {
        num / denom
    } else {
        num
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    frob(&(m - m.transpose()))
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Block matrix `[[a, b], [c, d]]` from four equally sized square blocks.
pub fn block2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, n)).copy_from(b);
    out.view_mut((n, 0), (n, n)).copy_from(c);
    out.view_mut((n, n), (n, n)).copy_from(d);
    out
}

pub fn block_diag(a: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    block2(a, &DMatrix::zeros(n, n), &DMatrix::zeros(n, n), d)
}

/// Lower Cholesky factor of an SPD matrix, or `None` if it is not numerically SPD.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| c.l())
}

/// Symmetric PSD square root factor `U Λ^{1/2}` usable for sampling when `m`
/// is only semidefinite (negative round-off eigenvalues are clipped).
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(l) = cholesky_lower(m) {
        return l;
    }
    let (vals, vecs) = sym_eigen(m);
    let mut f = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    f
}

/// Unbiased sample covariance and mean of row-observations.
pub fn sample_covariance(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let m = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = DVector::zeros(d);
    for r in rows {
        for (j, v) in r.iter().enumerate() {
            mean[j] += v;
        }
    }
    if m > 0 {
        mean /= m as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Uncentered second moment `Σ_m z zᵀ / M`.
pub fn second_moment(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let m = rows.len().max(1);
    let d = rows.first().map_or(0, Vec::len);
    let mut out = DMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in i..d {
                out[(i, j)] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = out[(i, j)] / m as f64;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!(frob(&(recon - m)) < 1e-12);
    }

    #[test]
    fn covariance_of_two_points() {
        let rows = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let (mean, cov) = sample_covariance(&rows);
        assert_eq!(mean, DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        assert_eq!(second_moment(&rows), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn psd_factor_handles_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&m);
        assert!(frob(&(&f * f.transpose() - &m)) < 1e-12);
    }
}
