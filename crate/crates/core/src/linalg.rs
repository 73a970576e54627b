//! Small dense linear-algebra helpers shared by the solver, the realization
//! and the codec. Everything works on `nalgebra` dynamic matrices; the
//! dimensions involved are tiny (a handful of states).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && frobenius(&(m - m.transpose())) <= tol * frobenius(m).max(1.0)
}

/// Strict positive definiteness via Cholesky.
pub fn is_pd(m: &DMatrix<f64>) -> bool {
    Cholesky::new(symmetrize(m)).is_some()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Natural log-determinant of a symmetric positive-definite matrix.
pub fn ln_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    let c = Cholesky::new(symmetrize(m))?;
    Some(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Flips the sign of each row so its first non-negligible entry is positive.
pub fn fix_row_signs(t: &mut DMatrix<f64>) {
    for mut row in t.row_iter_mut() {
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12 * scale).copied() {
            if first < 0.0 {
                row.neg_mut();
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Returns `(values, E)` where the rows of `E` are the
/// eigenvectors, so `E · m · Eᵀ = diag(values)`.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut e = DMatrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        e.set_row(r, &eig.eigenvectors.column(i).transpose());
    }
    fix_row_signs(&mut e);
    (values, e)
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `rel_tol · max|eigenvalue|` are treated as zero.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let cutoff = rel_tol * eig.eigenvalues.amax();
    let d = eig.eigenvalues.map(|v| if v.abs() > cutoff { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Stationary covariance `Σ = AΣAᵀ + W` by the doubling iteration.
/// Returns `None` unless `A` is strictly stable.
pub fn lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if spectral_radius(a) >= 1.0 - 1e-12 {
        return None;
    }
    let mut s = w.clone();
    let mut ak = a.clone();
    for _ in 0..200 {
        s = &s + &ak * &s * ak.transpose();
        ak = &ak * &ak;
        if frobenius(&ak) < 1e-30 || !s.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    let s = symmetrize(&s);
    s.iter().all(|v| v.is_finite()).then_some(s)
}

/// Simultaneous diagonalization of two covariance matrices by congruence.
///
/// Given a symmetric `prior` and a positive-definite `post`, returns
/// `(T, λ, δ)` with `T·prior·Tᵀ = diag(λ)` and `T·post·Tᵀ = diag(δ)`. Rows of
/// `T` have unit Euclidean norm, are ordered by decreasing ratio `λᵢ/δᵢ` and
/// carry the same sign convention as [`sym_eigen_desc`]. When the two
/// matrices commute (and the ratios are distinct) `T` is orthogonal: the
/// common eigenbasis.
pub fn congruence_diagonalize(
    prior: &DMatrix<f64>,
    post: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let n = prior.nrows();
    let chol = Cholesky::new(symmetrize(post))?;
    let l_inv = chol.l().try_inverse()?;
    let m = symmetrize(&(&l_inv * prior * l_inv.transpose()));
    let (ratios, u) = sym_eigen_desc(&m);
    let mut t = &u * &l_inv;
    let mut lambda = DVector::zeros(n);
    let mut delta = DVector::zeros(n);
    for i in 0..n {
        let norm = t.row(i).norm();
        t.row_mut(i).scale_mut(1.0 / norm);
        let s2 = 1.0 / (norm * norm);
        delta[i] = s2;
        lambda[i] = s2 * ratios[i];
    }
    fix_row_signs(&mut t);
    Some((t, lambda, delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let w = DMatrix::from_element(1, 1, 1.0);
        let s = lyapunov(&a, &w).unwrap();
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!(lyapunov(&DMatrix::from_element(1, 1, 1.5), &w).is_none());
    }

    #[test]
    fn congruence_recovers_both_diagonals() {
        let prior = DMatrix::from_row_slice(2, 2, &[1.68, 0.14, 0.14, 1.03]);
        let post = DMatrix::from_row_slice(2, 2, &[0.39, 0.07, 0.07, 0.61]);
        let (t, lambda, delta) = congruence_diagonalize(&prior, &post).unwrap();
        let dp = &t * &prior * t.transpose();
        let dq = &t * &post * t.transpose();
        for i in 0..2 {
            assert!((dp[(i, i)] - lambda[i]).abs() < 1e-12);
            assert!((dq[(i, i)] - delta[i]).abs() < 1e-12);
            assert!((t.row(i).norm() - 1.0).abs() < 1e-12);
        }
        assert!(dp[(0, 1)].abs() < 1e-12 && dq[(0, 1)].abs() < 1e-12);
        assert!(lambda[0] / delta[0] >= lambda[1] / delta[1]);
    }

    #[test]
    fn congruence_is_orthogonal_for_commuting_pair() {
        let (_, e) = sym_eigen_desc(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let prior = e.transpose() * DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0])) * &e;
        let post = e.transpose() * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.5])) * &e;
        let (t, _, _) = congruence_diagonalize(&prior, &post).unwrap();
        let gram = &t * t.transpose();
        assert!(frobenius(&(gram - DMatrix::identity(2, 2))) < 1e-12);
    }
}
