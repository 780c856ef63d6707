//! Analytic personalized diffusion for Gaussian clients.
//!
//! Client `i` has target `N(θ_i, σ₀² I)` with `θ_i ~ N(μ*, σ*² I)`. With a linear score
//! model the optimal personalized estimate shrinks the local sample mean toward the
//! grand mean by a weight set through the learned population variance `σ̂²`.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::gaussian_vector;
use crate::rng::{domain, RngKey};
use crate::runtime::{mean_scalars, mean_vectors};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPopulation {
    pub mu_star: DVector<f64>,
    pub sigma_star_sq: f64,
    /// Observation variance `σ₀²`.
    pub sigma0_sq: f64,
    pub n: usize,
    pub m: usize,
    /// Diffusion horizon; `f64::INFINITY` is allowed.
    pub t_horizon: f64,
}

impl GaussianPopulation {
    pub fn validate(&self) -> Result<()> {
        if self.mu_star.is_empty() || self.n == 0 || self.m == 0 {
            return Err(Error::invalid("population", "need d, n, m >= 1"));
        }
        if !(self.sigma_star_sq >= 0.0) || !(self.sigma0_sq >= 0.0) {
            return Err(Error::invalid("population", "variances must be >= 0"));
        }
        if !(self.t_horizon > 0.0) {
            return Err(Error::invalid("t_horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu_star.len()
    }
}

/// `1/σ₀² − 1/(σ₀² + T)`.
pub fn alpha_score(sigma0_sq: f64, t_horizon: f64) -> f64 {
    1.0 / sigma0_sq - 1.0 / (sigma0_sq + t_horizon)
}

/// `‖θ − θ̂ + σ₀²/(σ₀² + T)·θ̂‖²`.
pub fn gaussian_reverse_kl(theta: &DVector<f64>, theta_hat: &DVector<f64>, sigma0_sq: f64, t_horizon: f64) -> f64 {
    let c = sigma0_sq / (sigma0_sq + t_horizon);
    theta
        .iter()
        .zip(theta_hat.iter())
        .map(|(t, h)| {
            let e = t - h + c * h;
            e * e
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mu_hat: DVector<f64>,
    pub theta_hats: Vec<DVector<f64>>,
    pub sigma_hat_sq: f64,
    pub s_sq: f64,
    pub alpha_score: f64,
}

impl GaussianFit {
    /// Weight `nασ̂²/(nασ̂² + 1)` on the local mean.
    pub fn shrinkage(&self, n: usize) -> f64 {
        shrinkage_weight(n as f64 * self.alpha_score, self.sigma_hat_sq)
    }
}

fn shrinkage_weight(n_alpha: f64, s: f64) -> f64 {
    let k = n_alpha * s;
    k / (k + 1.0)
}

/// `s − floor − s²·w(s)²`, zero at the fixed point.
pub fn fixed_point_residual(s: f64, floor: f64, s_sq: f64, n_alpha: f64) -> f64 {
    let w = shrinkage_weight(n_alpha, s);
    s - floor - s_sq * w * w
}

const SCAN_CELLS: usize = 1024;

/// Largest solution of `s = floor + s²·(nα s/(nα s + 1))²` in `[floor, floor + s²]`.
///
/// The bracket is scanned from the top until the residual turns negative, then the
/// last cell is bisected to absolute width 1e-13.
pub fn solve_sigma_hat_sq(floor: f64, s_sq: f64, n_alpha: f64) -> Result<f64> {
    if !(floor >= 0.0) || !(s_sq >= 0.0) || !(n_alpha >= 0.0) || !floor.is_finite() || !s_sq.is_finite() {
        return Err(Error::invalid("fixed point", "need finite floor, s_sq, n_alpha >= 0"));
    }
    let g = |s: f64| fixed_point_residual(s, floor, s_sq, n_alpha);
    let hi0 = floor + s_sq;
    if s_sq == 0.0 || g(hi0) == 0.0 {
        return Ok(hi0);
    }
    let step = s_sq / SCAN_CELLS as f64;
    let (mut lo, mut hi) = (floor, hi0);
    for k in (0..SCAN_CELLS).rev() {
        let a = floor + step * k as f64;
        if g(a) < 0.0 {
            lo = a;
            hi = (a + step).min(hi0);
            break;
        }
        if k == 0 {
            return Ok(floor);
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if g(lo).abs() < g(hi).abs() { lo } else { hi })
}

/// Personalized estimates from client sample means.
pub fn gaussian_personalized_fit(means: &[DVector<f64>], xi: f64, n: usize, alpha: f64) -> Result<GaussianFit> {
    if means.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let d = means[0].len();
    if d == 0 || n == 0 || !(xi >= 0.0) || !(alpha >= 0.0) {
        return Err(Error::invalid("fit", "need d, n >= 1 and xi, alpha >= 0"));
    }
    let refs: Vec<&DVector<f64>> = means.iter().collect();
    let mu_hat = mean_vectors(&refs)?;
    let m = means.len() as f64;
    let s_sq = means.iter().map(|x| (&mu_hat - x).norm_squared()).sum::<f64>() / (m * d as f64);
    let n_alpha = n as f64 * alpha;
    let sigma_hat_sq = solve_sigma_hat_sq(2.0 * xi / d as f64, s_sq, n_alpha)?;
    let w = shrinkage_weight(n_alpha, sigma_hat_sq);
    let theta_hats = means.iter().map(|x| x * w + &mu_hat * (1.0 - w)).collect();
    Ok(GaussianFit {
        mu_hat,
        theta_hats,
        sigma_hat_sq,
        s_sq,
        alpha_score: alpha,
    })
}

/// Whether collaboration lowers the average KL, and by how much.
///
/// With `c = σ₀²/n`, `factor = ((2σ̂² + c − σ*²)/(σ̂² + c))·(c/(σ̂² + c))·c`.
pub fn collaboration_improvement(sigma_hat_sq: f64, sigma_star_sq: f64, sigma0_sq: f64, n: usize) -> (bool, f64) {
    let c = sigma0_sq / n as f64;
    let denom = sigma_hat_sq + c;
    let factor = ((2.0 * sigma_hat_sq + c - sigma_star_sq) / denom) * (c / denom) * c;
    (sigma_hat_sq > sigma_star_sq / 2.0 - c / 2.0, factor)
}

/// `3 d σ₀² / (2n)`.
pub fn xi_guarantee(d: usize, sigma0_sq: f64, n: usize) -> f64 {
    3.0 * d as f64 * sigma0_sq / (2.0 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloKl {
    pub avg_kl_collab: f64,
    pub avg_kl_local: f64,
    pub se_collab: f64,
    pub se_local: f64,
    /// Standard error of the per-client difference `local − collab`.
    pub se_diff: f64,
    pub sigma_hat_sq: f64,
}

fn mean_and_se(xs: &[f64]) -> Result<(f64, f64)> {
    let mean = mean_scalars(xs)?;
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, libm::sqrt(var / n)))
}

/// Simulates one population of `pop.m` clients and reports per-dimension average KL
/// for the personalized fit and for the local estimate `θ̂_i = x̄_i`.
pub fn monte_carlo_kl(pop: &GaussianPopulation, xi: f64, key: RngKey) -> Result<MonteCarloKl> {
    pop.validate()?;
    let d = pop.dim();
    let (s_star, s_mean) = (libm::sqrt(pop.sigma_star_sq), libm::sqrt(pop.sigma0_sq / pop.n as f64));
    let mut thetas = Vec::with_capacity(pop.m);
    let mut means = Vec::with_capacity(pop.m);
    for i in 0..pop.m as u64 {
        let mut rng = key.stream(domain::MONTE_CARLO, i, 0);
        let theta = &pop.mu_star + gaussian_vector(d, &mut rng) * s_star;
        let xbar = &theta + gaussian_vector(d, &mut rng) * s_mean;
        thetas.push(theta);
        means.push(xbar);
    }
    let alpha = alpha_score(pop.sigma0_sq, pop.t_horizon);
    let fit = gaussian_personalized_fit(&means, xi, pop.n, alpha)?;
    let per_dim = d as f64;
    let mut collab = Vec::with_capacity(pop.m);
    let mut local = Vec::with_capacity(pop.m);
    let mut diff = Vec::with_capacity(pop.m);
    for ((theta, th), xbar) in thetas.iter().zip(&fit.theta_hats).zip(&means) {
        let kc = gaussian_reverse_kl(theta, th, pop.sigma0_sq, pop.t_horizon) / per_dim;
        let kl = gaussian_reverse_kl(theta, xbar, pop.sigma0_sq, pop.t_horizon) / per_dim;
        collab.push(kc);
        local.push(kl);
        diff.push(kl - kc);
    }
    let (avg_kl_collab, se_collab) = mean_and_se(&collab)?;
    let (avg_kl_local, se_local) = mean_and_se(&local)?;
    let (_, se_diff) = mean_and_se(&diff)?;
    Ok(MonteCarloKl {
        avg_kl_collab,
        avg_kl_local,
        se_collab,
        se_local,
        se_diff,
        sigma_hat_sq: fit.sigma_hat_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_reverse_kl(&v(&[1.0]), &v(&[1.0]), 1.0, f64::INFINITY), 0.0);
        assert_eq!(gaussian_reverse_kl(&v(&[0.0]), &v(&[0.0]), 1.0, 3.0), 0.0);
        assert!((gaussian_reverse_kl(&v(&[1.0]), &v(&[0.8]), 1.0, f64::INFINITY) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn grand_mean_and_fixed_point_example() {
        let fit = gaussian_personalized_fit(&[v(&[0.0]), v(&[2.0])], 0.1, 1, 1.0).unwrap();
        assert_eq!(fit.mu_hat[0], 1.0);
        let s = solve_sigma_hat_sq(0.01, 1.0, 1000.0).unwrap();
        assert!((s - 1.008).abs() < 1e-3);
        assert!(fixed_point_residual(s, 0.01, 1.0, 1000.0).abs() < 1e-10);
    }

    #[test]
    fn improvement_examples() {
        let (ok, f) = collaboration_improvement(0.4, 0.4, 1.0, 10);
        assert!(ok && (f - 0.02).abs() < 1e-15);
        let (ok, f) = collaboration_improvement(0.4 / 2.0 - 0.05, 0.4, 1.0, 10);
        assert!(!ok && f.abs() < 1e-15);
        assert!(collaboration_improvement(1e12, 0.4, 1.0, 10).1 < 1e-12);
    }

    #[test]
    fn xi_guarantee_example() {
        assert!((xi_guarantee(2, 1.0, 10) - 0.3).abs() < 1e-15);
    }
}
