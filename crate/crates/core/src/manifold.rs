//! Stiefel manifold primitives: tangent projection, polar retraction, Haar sampling
//! and the projected distance `d(V, U) = ‖P_{T_V}(U)‖_F`.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_shape, frob, frob_sq, gaussian_matrix, inv_sqrt_spd, orthonormalize, Mat};

/// Tolerance on `‖UᵀU − I‖_F` accepted when constructing a point from arithmetic output.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A `d × r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    mat: Mat,
}

impl StiefelPoint {
    pub fn new(mat: Mat) -> Result<Self> {
        let (d, r) = mat.shape();
        if r == 0 || d < r {
            return Err(Error::invalid("shape", alloc::format!("need d >= r >= 1, got {d}x{r}")));
        }
        let err = orthonormality_error(&mat);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::invalid(
                "mat",
                alloc::format!("columns are not orthonormal (‖UᵀU − I‖_F = {err:e})"),
            ));
        }
        Ok(Self { mat })
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn new_unchecked(mat: Mat) -> Self {
        Self { mat }
    }

    /// The first `r` columns of the `d × d` identity.
    pub fn canonical(d: usize, r: usize) -> Result<Self> {
        Self::new(Mat::identity(d, r))
    }

    pub fn d(&self) -> usize {
        self.mat.nrows()
    }

    pub fn r(&self) -> usize {
        self.mat.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mat.shape()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn into_matrix(self) -> Mat {
        self.mat
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.mat)
    }
}

pub fn orthonormality_error(m: &Mat) -> f64 {
    let gram = m.tr_mul(m);
    frob(&(gram - Mat::identity(m.ncols(), m.ncols())))
}

/// A matrix in the tangent space at `base`: `baseᵀ·mat + matᵀ·base = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: StiefelPoint,
    pub mat: Mat,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        frob(&self.mat)
    }

    pub fn norm_sq(&self) -> f64 {
        frob_sq(&self.mat)
    }

    /// `‖baseᵀ·mat + matᵀ·base‖_F`; zero for an exact tangent vector.
    pub fn skew_residual(&self) -> f64 {
        frob(&crate::linalg::sym_product(self.base.as_matrix(), &self.mat))
    }
}

/// `P_{T_V}(U) = U − ½ V (VᵀU + UᵀV)` as a plain matrix.
pub(crate) fn project_raw(v: &Mat, u: &Mat) -> Mat {
    let vtu = v.tr_mul(u);
    let sym = &vtu + vtu.transpose();
    u - (v * sym) * 0.5
}

pub fn tangent_project(v: &StiefelPoint, u: &Mat) -> Result<TangentVector> {
    check_shape("tangent_project", u, v.dims())?;
    Ok(TangentVector {
        base: v.clone(),
        mat: project_raw(v.as_matrix(), u),
    })
}

/// Polar retraction `R_U(Ξ) = (U + Ξ)(I + ΞᵀΞ)^(-1/2)`.
///
/// The formula is evaluated for any `Ξ` of matching shape; the result lies on the
/// manifold when `Ξ` is tangent at `base`.
pub fn polar_retract(base: &StiefelPoint, xi: &Mat) -> Result<StiefelPoint> {
    check_shape("polar_retract", xi, base.dims())?;
    let r = base.r();
    let gram = Mat::identity(r, r) + xi.tr_mul(xi);
    let root = inv_sqrt_spd(&gram)?;
    Ok(StiefelPoint::new_unchecked((base.as_matrix() + xi) * root))
}

/// Nearest point of the manifold to a full-rank `m` in Frobenius norm, `m(mᵀm)^(-1/2)`.
pub fn polar_factor(m: &Mat) -> Result<StiefelPoint> {
    if m.nrows() < m.ncols() {
        return Err(Error::invalid("polar_factor", "need at least as many rows as columns"));
    }
    let root = inv_sqrt_spd(&m.tr_mul(m))?;
    Ok(StiefelPoint::new_unchecked(m * root))
}

/// `d(V, U) = ‖P_{T_V}(U)‖_F`. Not symmetric in its arguments.
pub fn stiefel_distance(v: &StiefelPoint, u: &StiefelPoint) -> Result<f64> {
    Ok(libm::sqrt(stiefel_distance_sq(v, u)?))
}

pub fn stiefel_distance_sq(v: &StiefelPoint, u: &StiefelPoint) -> Result<f64> {
    check_shape("stiefel_distance", u.as_matrix(), v.dims())?;
    Ok(frob_sq(&project_raw(v.as_matrix(), u.as_matrix())))
}

/// Haar-distributed point: orthonormalized standard Gaussian `d × r` matrix.
pub fn sample_stiefel_uniform<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<StiefelPoint> {
    if r == 0 || d < r {
        return Err(Error::invalid("shape", alloc::format!("need d >= r >= 1, got {d}x{r}")));
    }
    let g = gaussian_matrix(d, r, rng);
    Ok(StiefelPoint::new_unchecked(orthonormalize(&g)))
}

/// Random tangent vector at `base` with Frobenius norm `norm`.
pub fn random_tangent<R: Rng + ?Sized>(base: &StiefelPoint, norm: f64, rng: &mut R) -> TangentVector {
    let g = gaussian_matrix(base.d(), base.r(), rng);
    let p = project_raw(base.as_matrix(), &g);
    let scale = norm / frob(&p).max(f64::MIN_POSITIVE);
    TangentVector {
        base: base.clone(),
        mat: p * scale,
    }
}

/// Empirical constant `C` in `‖R_U(Ξ) − (U + Ξ)‖_F ≤ C ‖Ξ‖_F²`, maximised over
/// random tangent vectors with `‖Ξ‖_F ≤ max_norm`.
pub fn estimate_retraction_constant<R: Rng + ?Sized>(
    d: usize,
    r: usize,
    max_norm: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let base = sample_stiefel_uniform(d, r, rng)?;
        let norm = max_norm * rng.random::<f64>().max(1e-3);
        let xi = random_tangent(&base, norm, rng);
        let err = retraction_error(&base, &xi.mat)?;
        worst = worst.max(err / (norm * norm));
    }
    Ok(worst)
}

/// `‖R_U(Ξ) − (U + Ξ)‖_F`.
pub fn retraction_error(base: &StiefelPoint, xi: &Mat) -> Result<f64> {
    let retracted = polar_retract(base, xi)?;
    Ok(frob(&(retracted.into_matrix() - (base.as_matrix() + xi))))
}

/// Least-squares slope of `log(error)` against `log(scale)`.
pub fn log_log_slope(scales: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = scales.iter().map(|s| libm::log(*s)).collect();
    let ys: Vec<f64> = errors.iter().map(|e| libm::log(*e)).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngKey;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn col(values: &[f64]) -> Mat {
        Mat::from_column_slice(values.len(), 1, values)
    }

    fn e1() -> StiefelPoint {
        StiefelPoint::new(col(&[1.0, 0.0])).unwrap()
    }

    #[test]
    fn self_projection_vanishes() {
        let p = tangent_project(&e1(), &col(&[1.0, 0.0])).unwrap();
        assert!(p.mat.norm() < 1e-15);
    }

    #[test]
    fn orthogonal_direction_is_kept() {
        let p = tangent_project(&e1(), &col(&[0.0, 1.0])).unwrap();
        assert!((p.mat - col(&[0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn diagonal_direction_loses_base_component() {
        let p = tangent_project(&e1(), &col(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap();
        assert!((p.mat - col(&[0.0, FRAC_1_SQRT_2])).norm() < 1e-15);
    }

    #[test]
    fn projection_rejects_wrong_shape() {
        assert!(matches!(
            tangent_project(&e1(), &col(&[1.0, 0.0, 0.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn retract_zero_is_identity() {
        let mut rng = RngKey::new(1).stream(0, 0, 0);
        let u = sample_stiefel_uniform(5, 2, &mut rng).unwrap();
        let back = polar_retract(&u, &Mat::zeros(5, 2)).unwrap();
        assert!((back.as_matrix() - u.as_matrix()).norm() < 1e-14);
    }

    #[test]
    fn retract_rank_one_normalizes() {
        let out = polar_retract(&e1(), &col(&[0.0, 1.0])).unwrap();
        assert!((out.into_matrix() - col(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).norm() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(stiefel_distance(&e1(), &e1()).unwrap(), 0.0);
        let e2 = StiefelPoint::new(col(&[0.0, 1.0])).unwrap();
        assert!((stiefel_distance(&e1(), &e2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_by_one_sample_is_sign() {
        let mut rng = RngKey::new(3).stream(0, 0, 0);
        for _ in 0..10 {
            let u = sample_stiefel_uniform(1, 1, &mut rng).unwrap();
            assert_eq!(u.as_matrix()[(0, 0)].abs(), 1.0);
        }
    }

    #[test]
    fn seeded_sample_is_deterministic_and_orthonormal() {
        let a = sample_stiefel_uniform(3, 2, &mut RngKey::new(11).stream(0, 0, 0)).unwrap();
        let b = sample_stiefel_uniform(3, 2, &mut RngKey::new(11).stream(0, 0, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.orthonormality_error() < 1e-12);
    }

    #[test]
    fn constructor_rejects_non_orthonormal() {
        assert!(StiefelPoint::new(col(&[1.0, 1.0])).is_err());
        assert!(StiefelPoint::new(Mat::zeros(1, 2)).is_err());
    }

    #[test]
    fn haar_column_mean_is_near_zero() {
        let mut rng = RngKey::new(5).stream(0, 0, 0);
        let mut acc = Mat::zeros(3, 2);
        let draws = 10_000;
        for _ in 0..draws {
            acc += sample_stiefel_uniform(3, 2, &mut rng).unwrap().into_matrix();
        }
        acc /= draws as f64;
        assert!(acc.iter().all(|x| x.abs() < 0.05), "{acc}");
    }

    #[test]
    fn empirical_retraction_constant_is_bounded() {
        let mut rng = RngKey::new(9).stream(0, 0, 0);
        let c = estimate_retraction_constant(6, 2, 1.0, 200, &mut rng).unwrap();
        // (U+Ξ) has operator norm ≤ √(1+M²) and |(1+λ)^(-1/2) − 1| ≤ λ/2.
        assert!(c > 0.0 && c <= 0.5 * libm::sqrt(2.0) + 1e-12, "{c}");
    }
}
