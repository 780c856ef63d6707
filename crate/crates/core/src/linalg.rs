//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::gauss;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub(crate) fn check_shape(context: &'static str, m: &Mat, expected: (usize, usize)) -> Result<()> {
    if m.shape() == expected {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context,
            expected,
            got: m.shape(),
        })
    }
}

#[inline]
pub fn frob_sq(m: &Mat) -> f64 {
    m.iter().map(|x| x * x).sum()
}

#[inline]
pub fn frob(m: &Mat) -> f64 {
    libm::sqrt(frob_sq(m))
}

#[inline]
pub fn trace(m: &Mat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `Aᵀ B + Bᵀ A`.
pub fn sym_product(a: &Mat, b: &Mat) -> Mat {
    let ab = a.tr_mul(b);
    let ba = ab.transpose();
    ab + ba
}

/// `M^(-1/2)` for a symmetric positive definite `M`, via its eigendecomposition.
pub fn inv_sqrt_spd(m: &Mat) -> Result<Mat> {
    let eig = SymmetricEigen::new(m.clone());
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid(
            "matrix",
            alloc::format!("expected symmetric positive definite, found eigenvalue {bad}"),
        ));
    }
    let q = &eig.eigenvectors;
    let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / libm::sqrt(eig.eigenvalues[j]));
    Ok(scaled * q.transpose())
}

/// Eigenvalues of a symmetric matrix in descending order, with matching eigenvectors as columns.
pub fn sym_eigen_desc(m: &Mat) -> (Vec<f64>, Mat) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &Mat) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()))
}

/// `rows × cols` matrix of independent standard normals, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let data: Vec<f64> = (0..rows * cols).map(|_| gauss(rng)).collect();
    Mat::from_vec(rows, cols, data)
}

pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vector {
    Vector::from_vec((0..len).map(|_| gauss(rng)).collect())
}

/// Thin QR orthonormalization with the sign of each column fixed so that `R` has a
/// nonnegative diagonal.
pub fn orthonormalize(a: &Mat) -> Mat {
    let qr = a.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_root_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = inv_sqrt_spd(&m).unwrap();
        let back = (&s * &s) * &m;
        assert!((back - Mat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn inverse_square_root_rejects_indefinite() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(inv_sqrt_spd(&m).is_err());
    }

    #[test]
    fn eigen_desc_sorted() {
        let m = Mat::from_diagonal(&Vector::from_vec(alloc::vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals, alloc::vec![3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
