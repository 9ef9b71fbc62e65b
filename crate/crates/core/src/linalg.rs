//! Small dense linear-algebra helpers on top of nalgebra.

use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the eigenvector for value `k`.
pub fn sym_eigen_desc<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest absolute relative asymmetry `|m_ij - m_ji| / max|m|`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let scale = m.amax().max(T::min_positive_value());
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what}: matrix is not square")));
    }
    if m.iter().any(|v| !v.finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what}: non-finite entries")));
    }
    m.clone()
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `log|m|` from a lower Cholesky factor.
pub fn log_det_from_cholesky<T: Real>(l: &DMatrix<T>) -> T {
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc + acc
}

/// `log|m|` of a symmetric positive-definite matrix.
pub fn log_det_pd<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(log_det_from_cholesky(&cholesky_lower(m, "log-determinant")?))
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn inverse_pd<T: Real>(l: &DMatrix<T>) -> DMatrix<T> {
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor has a positive diagonal");
    symmetrize(&(linv.transpose() * linv))
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_sym<T: Real>(m: &DMatrix<T>) -> T {
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Thin QR with the sign convention `R_jj >= 0`; returns the orthonormal
/// factor. Fails when a column is (numerically) dependent on the previous
/// ones.
pub fn thin_q<T: Real>(b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, d) = b.shape();
    if d == 0 || d > p {
        return Err(Error::Dimension(format!("cannot orthonormalize a {p}x{d} matrix")));
    }
    let scale = b.column_iter().map(|c| c.norm()).fold(T::zero(), |a, v| a.max(v));
    let qr = b.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let tol = scale * T::eps() * T::from_count(p.max(d)) * T::lit(16.0);
    for j in 0..d {
        let rjj = r[(j, j)];
        if !(rjj.abs() > tol) {
            return Err(Error::RankDeficient(format!(
                "column {} is linearly dependent on the preceding columns",
                j + 1
            )));
        }
        if rjj < T::zero() {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    Ok(q)
}

/// Orthogonal projector onto the column span of `b`, `B (BᵀB)⁻¹ Bᵀ`.
pub fn span_projector<T: Real>(b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let q = thin_q(b)?;
    Ok(symmetrize(&(&q * q.transpose())))
}

/// `max |BᵀB - I|` elementwise.
pub fn orthonormality_defect<T: Real>(b: &DMatrix<T>) -> T {
    let gram = b.transpose() * b;
    let d = gram.nrows();
    (gram - DMatrix::identity(d, d)).amax()
}

/// Column means of an `n x p` matrix.
pub fn column_means<T: Real>(x: &DMatrix<T>) -> DVector<T> {
    let n = T::from_count(x.nrows());
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample covariance (divisor `n - 1`) of the rows of `x`.
pub fn sample_covariance<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    let mean = column_means(x);
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = T::from_count(n.saturating_sub(1).max(1));
    symmetrize(&(centred.transpose() * &centred)) / denom
}

/// Random orthogonal `n x n` matrix (QR of a Gaussian matrix with the sign
/// convention, i.e. Haar distributed).
pub fn random_orthogonal<T: Real, R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<T> {
    let g = DMatrix::from_fn(n, n, |_, _| crate::rng::standard_normal::<T, _>(rng));
    thin_q(&g).expect("Gaussian matrix is full rank with probability one")
}
