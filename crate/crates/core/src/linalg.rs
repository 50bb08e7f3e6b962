//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

pub type Mat = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix is singular (|det| = {0:.3e})")]
    Singular(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn mat_vec(m: &Mat, x: &[f64]) -> Vec<f64> {
    let d = m.nrows();
    (0..d)
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Returns the symmetric part of `m` and the Frobenius norm of its
/// antisymmetric part.
pub fn symmetrize(m: &Mat) -> (Mat, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let skew = (m - m.transpose()) * 0.5;
    (sym, frobenius(&skew))
}

fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = SymmetricEigen::new(m.clone());
    let q = &eig.eigenvectors;
    let mut diag = Mat::zeros(m.nrows(), m.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        diag[(i, i)] = f(l);
    }
    q * diag * q.transpose()
}

/// Matrix exponential of the symmetric part of `m`; also returns the
/// symmetrization defect.
pub fn sym_exp(m: &Mat) -> (Mat, f64) {
    let (s, defect) = symmetrize(m);
    (sym_apply(&s, f64::exp), defect)
}

/// Principal square root of the symmetric part of `m`.
pub fn sym_sqrt(m: &Mat) -> Result<(Mat, f64), MatrixError> {
    let (s, defect) = symmetrize(m);
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(MatrixError::NotPositive(min));
    }
    Ok((sym_apply(&s, f64::sqrt), defect))
}

pub fn inverse(m: &Mat) -> Result<Mat, MatrixError> {
    let det = m.determinant();
    if det.abs() < 1e-14 {
        return Err(MatrixError::Singular(det.abs()));
    }
    m.clone().try_inverse().ok_or(MatrixError::Singular(det.abs()))
}

/// Orthonormal basis whose first vector is the unit vector `u`.
fn basis_from(u: &[f64]) -> Vec<Vec<f64>> {
    let d = u.len();
    let mut basis = vec![u.to_vec()];
    for k in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for b in &basis {
            let c = dot(&v, b);
            for i in 0..d {
                v[i] -= c * b[i];
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Symmetric matrix `A` with `A u0 = u1` for unit vectors `u0`, `u1`: in an
/// orthonormal basis starting with `u0`, the first row and column carry the
/// coordinates of `u1` and the complementary block is the identity.
pub fn block_transfer(u0: &[f64], u1: &[f64]) -> Mat {
    let d = u0.len();
    let basis = basis_from(u0);
    let coords: Vec<f64> = basis.iter().map(|b| dot(b, u1)).collect();
    let mut local = Mat::identity(d, d);
    for i in 0..d {
        local[(i, 0)] = coords[i];
        local[(0, i)] = coords[i];
    }
    let p = Mat::from_fn(d, d, |i, j| basis[j][i]);
    &p * local * p.transpose()
}

/// Rotation (determinant one) sending the unit vector `n` to `-e_1`.
pub fn rotation_to_minus_e1(n: &[f64]) -> Mat {
    match n.len() {
        1 => Mat::from_element(1, 1, 1.0),
        _ => Mat::from_row_slice(2, 2, &[-n[0], -n[1], n[1], -n[0]]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_zero_is_identity() {
        let (e, defect) = sym_exp(&Mat::zeros(2, 2));
        assert!((e - identity(2)).abs().max() < 1e-15);
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[1.1, 0.05, 0.05, 0.93]);
        let (r, _) = sym_sqrt(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn block_transfer_maps_and_is_symmetric() {
        let u0 = [-1.0, 0.0];
        let phi: f64 = 0.07;
        let u1 = [-phi.cos(), phi.sin()];
        let a = block_transfer(&u0, &u1);
        let img = mat_vec(&a, &u0);
        assert!((img[0] - u1[0]).abs() < 1e-14 && (img[1] - u1[1]).abs() < 1e-14);
        assert!((&a - a.transpose()).abs().max() < 1e-15);
        assert!(frobenius(&(a - identity(2))) <= 2.0 * phi);
    }

    #[test]
    fn rotation_aligns_normal() {
        let n = [-0.8, 0.6];
        let q = rotation_to_minus_e1(&n);
        let v = mat_vec(&q, &n);
        assert!((v[0] + 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((q.determinant() - 1.0).abs() < 1e-15);
    }
}
