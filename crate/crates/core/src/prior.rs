//! Hierarchical-Bayes prior shared by all three algorithms.
//!
//! The prior is `θ_i ~ N(μ, σ² I)` with an inverse-gamma hyper-prior on `σ²`
//! controlled by `ξ`. It contributes
//! `(1/m) Σ_i (2ξ + ‖μ − θ_i‖²)/(2σ²) + d_θ log σ` to every loss.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::{check_sigma, Error, Result};

/// Scale of the population prior: one shared value or one per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    Scalar(f64),
    PerWeight(DVector<f64>),
}

impl Sigma {
    pub fn check(&self) -> Result<()> {
        match self {
            Sigma::Scalar(s) => check_sigma(*s),
            Sigma::PerWeight(v) => v.iter().try_for_each(|s| check_sigma(*s)),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Sigma::Scalar(s) => *s,
            Sigma::PerWeight(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Sigma::Scalar(s) => *s,
            Sigma::PerWeight(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Sigma::Scalar(s) => *s,
            Sigma::PerWeight(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// Raises every component to at least `bound`.
    pub fn clamp_below(&mut self, bound: f64) {
        match self {
            Sigma::Scalar(s) => *s = s.max(bound),
            Sigma::PerWeight(v) => v.iter_mut().for_each(|s| *s = s.max(bound)),
        }
    }
}

/// Global model `μ`, scale `σ` and hyper-parameter `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorState<M> {
    pub mu: M,
    pub sigma: Sigma,
    pub xi: f64,
    pub d_theta: usize,
}

impl<M> PriorState<M> {
    pub fn new(mu: M, sigma: Sigma, xi: f64, d_theta: usize) -> Result<Self> {
        sigma.check()?;
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::invalid("xi", alloc::format!("must be positive, got {xi}")));
        }
        if d_theta == 0 {
            return Err(Error::invalid("d_theta", "must be at least 1"));
        }
        if let Sigma::PerWeight(v) = &sigma {
            if v.len() != d_theta {
                return Err(Error::ShapeMismatch {
                    context: "per-weight sigma",
                    expected: (d_theta, 1),
                    got: (v.len(), 1),
                });
            }
        }
        Ok(Self { mu, sigma, xi, d_theta })
    }

    /// Guaranteed lower bound on σ for the current mode.
    pub fn sigma_bound(&self, omega: f64) -> Result<f64> {
        match self.sigma {
            Sigma::Scalar(_) => sigma_lower_bound(omega, self.xi, self.d_theta),
            Sigma::PerWeight(_) => sigma_lower_bound(omega, self.xi, 1),
        }
    }
}

/// When σ is trained and how its updates are constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSchedule {
    pub init: f64,
    /// σ is held fixed for rounds `1..=freeze_rounds`.
    pub freeze_rounds: usize,
    /// σ is held fixed for rounds `1..=lazy_start_round`.
    pub lazy_start_round: usize,
    pub omega: f64,
    /// ℓ∞ clip applied to σ-gradients.
    pub clip_inf: f64,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self {
            init: 1.0,
            freeze_rounds: 0,
            lazy_start_round: 0,
            omega: DEFAULT_OMEGA,
            clip_inf: f64::INFINITY,
        }
    }
}

pub const DEFAULT_OMEGA: f64 = 0.5;

impl SigmaSchedule {
    pub fn validate(&self) -> Result<()> {
        check_omega(self.omega)?;
        check_sigma(self.init)?;
        if self.lazy_start_round < self.freeze_rounds {
            return Err(Error::invalid(
                "lazy_start_round",
                alloc::format!(
                    "must be >= freeze_rounds ({} < {})",
                    self.lazy_start_round,
                    self.freeze_rounds
                ),
            ));
        }
        if !(self.clip_inf > 0.0) {
            return Err(Error::invalid("clip_inf", "must be positive"));
        }
        Ok(())
    }

    /// Whether σ is updated in communication round `round` (1-based).
    pub fn is_active(&self, round: usize) -> bool {
        round > self.freeze_rounds.max(self.lazy_start_round)
    }
}

pub(crate) fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("omega", alloc::format!("must lie in (0, 1), got {omega}")))
    }
}

/// `(1/m) Σ_i (2ξ + dist_i²)/(2σ²) + d_θ log σ` from precomputed squared distances.
pub fn regularizer_scalar(dist_sq: &[f64], sigma: f64, xi: f64, d_theta: usize) -> Result<f64> {
    check_sigma(sigma)?;
    if dist_sq.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let m = dist_sq.len() as f64;
    let s2 = sigma * sigma;
    let coupling: f64 = dist_sq.iter().map(|d2| (2.0 * xi + d2) / (2.0 * s2)).sum::<f64>() / m;
    Ok(coupling + d_theta as f64 * libm::log(sigma))
}

/// Per-coordinate variant: `(1/m) Σ_i Σ_j (2ξ + (μ_j − θ_ij)²)/(2σ_j²) + Σ_j log σ_j`.
pub fn regularizer_per_weight(diffs: &[DVector<f64>], sigma: &DVector<f64>, xi: f64) -> Result<f64> {
    sigma.iter().try_for_each(|s| check_sigma(*s))?;
    if diffs.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let m = diffs.len() as f64;
    let mut coupling = 0.0;
    for diff in diffs {
        if diff.len() != sigma.len() {
            return Err(Error::ShapeMismatch {
                context: "regularizer_per_weight",
                expected: (sigma.len(), 1),
                got: (diff.len(), 1),
            });
        }
        coupling += per_weight_coupling(diff, sigma, xi);
    }
    let log_term: f64 = sigma.iter().map(|s| libm::log(*s)).sum();
    Ok(coupling / m + log_term)
}

/// `Σ_j (2ξ + diff_j²)/(2σ_j²)` for one client.
pub(crate) fn per_weight_coupling(diff: &DVector<f64>, sigma: &DVector<f64>, xi: f64) -> f64 {
    diff.iter()
        .zip(sigma.iter())
        .map(|(d, s)| (2.0 * xi + d * d) / (2.0 * s * s))
        .sum()
}

/// Regularizer for arbitrary parameter types under a scalar σ and a caller-supplied metric.
pub fn regularizer_value<T, F>(thetas: &[T], prior: &PriorState<T>, dist: F) -> Result<f64>
where
    F: Fn(&T, &T) -> f64,
{
    match &prior.sigma {
        Sigma::Scalar(s) => {
            let d2: Vec<f64> = thetas
                .iter()
                .map(|t| {
                    let d = dist(&prior.mu, t);
                    d * d
                })
                .collect();
            regularizer_scalar(&d2, *s, prior.xi, prior.d_theta)
        }
        Sigma::PerWeight(_) => Err(Error::invalid(
            "sigma",
            "per-weight mode needs coordinate differences; use regularizer_per_weight",
        )),
    }
}

/// Per-client σ-derivative `d_θ/σ − (2ξ + dist²)/σ³`.
pub fn sigma_gradient(dist_sq: f64, sigma: f64, xi: f64, d_theta: usize) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(d_theta as f64 / sigma - (2.0 * xi + dist_sq) / (sigma * sigma * sigma))
}

/// Per-coordinate σ-derivative `1/σ_j − (2ξ + diff_j²)/σ_j³`.
pub fn sigma_gradient_per_weight(diff: &DVector<f64>, sigma: &DVector<f64>, xi: f64) -> DVector<f64> {
    DVector::from_iterator(
        sigma.len(),
        diff.iter()
            .zip(sigma.iter())
            .map(|(d, s)| 1.0 / s - (2.0 * xi + d * d) / (s * s * s)),
    )
}

/// `ω √(2ξ / d_θ)`.
pub fn sigma_lower_bound(omega: f64, xi: f64, d_theta: usize) -> Result<f64> {
    check_omega(omega)?;
    Ok(omega * libm::sqrt(2.0 * xi / d_theta as f64))
}

/// Largest σ step size for which the lower bound on σ is guaranteed.
pub fn max_sigma_step(omega: f64, xi: f64, d_theta: usize) -> Result<f64> {
    check_omega(omega)?;
    let d = d_theta as f64;
    Ok((1.0 - omega) * 2.0 * xi / (d * d))
}

/// True iff `η₃ ≤ (1−ω)·2ξ/d_θ²` and `σ₀ ≥ ω√(2ξ/d_θ)`; both boundaries are accepted.
pub fn validate_schedule(eta3: f64, sched: &SigmaSchedule, xi: f64, d_theta: usize) -> Result<bool> {
    let step_cap = max_sigma_step(sched.omega, xi, d_theta)?;
    let bound = sigma_lower_bound(sched.omega, xi, d_theta)?;
    const REL: f64 = 1e-12;
    Ok(eta3 >= 0.0 && eta3 <= step_cap * (1.0 + REL) && sched.init >= bound * (1.0 - REL))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularizer_examples() {
        assert!((regularizer_scalar(&[0.0], 1.0, 1e-6, 4).unwrap() - 1e-6).abs() < 1e-18);
        assert!((regularizer_scalar(&[2.0], 1.0, 0.0, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(regularizer_scalar(&[1.0], 1e12, 1.0, 3).unwrap() > 80.0);
        assert!(matches!(
            regularizer_scalar(&[1.0], 0.0, 1.0, 3),
            Err(Error::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn regularizer_value_uses_metric() {
        let prior = PriorState::new(0.0_f64, Sigma::Scalar(1.0), 1e-6, 1).unwrap();
        let r = regularizer_value(&[2.0_f64.sqrt()], &prior, |a, b| (a - b).abs()).unwrap();
        assert!((r - (2e-6 + 2.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn per_weight_matches_scalar_when_constant() {
        let diffs = [DVector::from_vec(alloc::vec![0.5, -1.0, 2.0])];
        let s = DVector::from_element(3, 0.7);
        let pw = regularizer_per_weight(&diffs, &s, 1e-3).unwrap();
        let coupling = (3.0 * 2e-3 + 0.25 + 1.0 + 4.0) / (2.0 * 0.49);
        assert!((pw - (coupling + 3.0 * libm::log(0.7))).abs() < 1e-12);
    }

    #[test]
    fn sigma_gradient_examples() {
        let xi = 1e-6;
        let s = libm::sqrt(2.0 * xi / 7.0);
        assert!(sigma_gradient(0.0, s, xi, 7).unwrap().abs() < 1e-6 * 7.0 / s);
        assert_eq!(sigma_gradient(2.0, 1.0, 0.0, 2).unwrap(), 0.0);
        assert_eq!(sigma_gradient(0.0, 1.0, 0.0, 2).unwrap(), 2.0);
        assert!(sigma_gradient(0.0, -1.0, 0.0, 2).is_err());
    }

    #[test]
    fn lower_bound_and_schedule() {
        let b = sigma_lower_bound(0.5, 1e-6, 2000).unwrap();
        assert!((b - 1.5811388300841898e-5).abs() < 1e-15);
        assert!(sigma_lower_bound(1.0, 1e-6, 2).is_err());
        assert!(sigma_lower_bound(0.0, 1e-6, 2).is_err());

        let (omega, xi, d) = (0.5, 1e-6, 2000);
        let sched = SigmaSchedule {
            init: sigma_lower_bound(omega, xi, d).unwrap(),
            omega,
            ..SigmaSchedule::default()
        };
        let eta3 = (1.0 - omega) * 2.0 * xi / (d as f64 * d as f64);
        assert!(validate_schedule(eta3, &sched, xi, d).unwrap());
        assert!(!validate_schedule(eta3 * 1.01, &sched, xi, d).unwrap());
        let low = SigmaSchedule { init: sched.init * 0.99, ..sched };
        assert!(!validate_schedule(eta3, &low, xi, d).unwrap());
    }

    #[test]
    fn schedule_activity() {
        let s = SigmaSchedule {
            freeze_rounds: 2,
            lazy_start_round: 2,
            ..SigmaSchedule::default()
        };
        assert!(!s.is_active(1) && !s.is_active(2) && s.is_active(3));
        let bad = SigmaSchedule { freeze_rounds: 3, lazy_start_round: 1, ..s };
        assert!(bad.validate().is_err());
    }
}
