//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Solves `K x = w² M x` for symmetric `K` and symmetric positive definite
/// `M`. Eigenvalues come back ascending, eigenvectors mass-normalized with a
/// deterministic sign (largest component positive).
pub fn generalized_symmetric_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor of the mass matrix".into()))?;
    let mut a = &l_inv * k * l_inv.transpose();
    a = (&a + a.transpose()) * 0.5;
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    let back = l_inv.transpose();
    for (col, &i) in order.iter().enumerate() {
        let mut x: DVector<f64> = &back * eig.eigenvectors.column(i);
        let norm = (x.transpose() * m * &x)[(0, 0)].sqrt();
        x /= norm;
        let imax = x.iamax();
        if x[imax] < 0.0 {
            x = -x;
        }
        vecs.set_column(col, &x);
    }
    Ok((vals, vecs))
}

/// `x^H A y` for a real matrix `A`.
pub fn herm_form(x: &[Complex64], a: &DMatrix<f64>, y: &[Complex64]) -> Complex64 {
    let n = x.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let aij = a[(i, j)];
            if aij != 0.0 {
                row += y[j] * aij;
            }
        }
        acc += x[i].conj() * row;
    }
    acc
}

/// `x^H y`.
pub fn herm_dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn mat_vec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    for (i, o) in out.iter_mut().enumerate().take(n) {
        let mut s = 0.0;
        for (j, xj) in x.iter().enumerate() {
            s += a[(i, j)] * xj;
        }
        *o = s;
    }
}

pub fn mat_cvec(a: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = a.nrows();
    (0..n)
        .map(|i| {
            x.iter()
                .enumerate()
                .map(|(j, xj)| xj * a[(i, j)])
                .sum::<Complex64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dof_chain_spectrum() {
        let m = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let (vals, vecs) = generalized_symmetric_eigen(&k, &m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        let g = vecs.transpose() * &m * &vecs;
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn herm_form_of_identity_is_squared_norm() {
        let a = DMatrix::identity(2, 2);
        let x = [Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0)];
        let v = herm_form(&x, &a, &x);
        assert!((v.re - 6.0).abs() < 1e-15 && v.im.abs() < 1e-15);
    }
}
