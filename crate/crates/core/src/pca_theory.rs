//! Smoothness constants, step sizes and run-time checks for the PCA convergence theory.
//!
//! `d` below is the parameter dimension `d_θ = d·r`.

use crate::error::Result;
use crate::manifold::estimate_retraction_constant;
use crate::pca::PcaClientData;
use crate::prior::check_omega;
use crate::rng::{domain, RngKey};
use crate::trace::RoundTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaTheoryConstants {
    pub l_sigma: f64,
    pub l_u: f64,
    pub g_u: f64,
    pub l_v: f64,
    pub g_v: f64,
    pub l_u_sigma: f64,
    pub l_v_sigma: f64,
    pub c_eta1: f64,
    pub c_eta2: f64,
    pub g1: f64,
    pub g2: f64,
}

/// Inputs to the constants: problem sizes plus the data bound `max_i ‖S_i‖_op`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaTheoryInputs {
    pub d_theta: usize,
    pub n: usize,
    pub sigma_eps: f64,
    pub g_op: f64,
    pub omega: f64,
    pub xi: f64,
    /// Retraction constants `C₁` (for `U`) and `C₂` (for `V`).
    pub c1: f64,
    pub c2: f64,
}

impl PcaTheoryInputs {
    /// Reads sizes and `G_op` from the data; `C₁ = C₂` is estimated empirically.
    pub fn from_data(data: &[PcaClientData], r: usize, omega: f64, xi: f64, key: RngKey) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| crate::Error::invalid("data", "need at least one client"))?;
        let d = first.dim();
        let n = data.iter().map(|c| c.n()).max().unwrap_or(1);
        let g_op = data.iter().map(|c| c.op_norm()).fold(0.0, f64::max);
        let mut rng = key.stream(domain::PROBE, 0, 0);
        let c = estimate_retraction_constant(d, r, 1.0, 64, &mut rng)?;
        Ok(Self {
            d_theta: d * r,
            n,
            sigma_eps: first.sigma_eps(),
            g_op,
            omega,
            xi,
            c1: c,
            c2: c,
        })
    }
}

pub fn pca_theory(inp: &PcaTheoryInputs) -> Result<PcaTheoryConstants> {
    check_omega(inp.omega)?;
    let d = inp.d_theta as f64;
    let (xi, w) = (inp.xi, inp.omega);
    let (w2, w3, w4) = (w * w, w * w * w, w * w * w * w);
    let e2 = inp.sigma_eps * inp.sigma_eps;
    let e4 = e2 * e2;
    let n = inp.n as f64;
    let g_op = inp.g_op;

    let l_sigma = d * d / (2.0 * xi * w2) + 3.0 * d * d / (2.0 * xi * w4) + 3.0 * d * d / (xi * xi * w4);
    let prior_u = d / (xi * w2);
    let l_u = 0.5 * n * (1.0 / e2 + g_op / e4 + (1.0 + 2.0 * g_op / e2) * 2.0 / e4) + prior_u;
    let g_u = 0.5 * n * (g_op / e4 + 1.0 / e2) + prior_u;
    let l_v = 12.0 * d / (xi * w2);
    let g_v = 3.0 * d / (xi * w2);
    let xi3 = xi * xi * xi;
    let l_u_sigma = libm::sqrt(2.0 * d * d * d) / (w3 * libm::sqrt(xi3));
    let l_v_sigma = 2.0 * libm::sqrt(d * d * d) / (w3 * libm::sqrt(2.0 * xi3));
    let g1 = 2.0 * g_u * libm::sqrt(d);
    let g2 = 2.0 * g_v * libm::sqrt(d);
    let c_eta1 = inp.c1 * g1 + (l_u + g_u) * (inp.c1 * inp.c1 * g1 * g1 + 1.0) / 2.0;
    let c_eta2 = inp.c2 * g2 + (l_v + g_v) * (inp.c2 * inp.c2 * g2 * g2 + 1.0) / 2.0;
    Ok(PcaTheoryConstants {
        l_sigma,
        l_u,
        g_u,
        l_v,
        g_v,
        l_u_sigma,
        l_v_sigma,
        c_eta1,
        c_eta2,
        g1,
        g2,
    })
}

/// Step sizes for which the per-iteration decrease is guaranteed.
///
/// `η₃` uses `1/(6 L_σ)`, the value under which the decrease argument for σ goes through.
pub fn theorem_step_sizes(c: &PcaTheoryConstants) -> (f64, f64, f64) {
    let eta1 = (1.0 / (3.0 * c.c_eta1)).min(1.0);
    let eta2 = (1.0 / (3.0 * c.c_eta2)).min(1.0);
    let eta3 = (eta1 / (3.0 * c.l_u_sigma * c.l_u_sigma))
        .min(eta2 / (3.0 * c.l_v_sigma * c.l_v_sigma))
        .min(1.0 / (6.0 * c.l_sigma));
    (eta1, eta2, eta3)
}

/// `G_t` per recorded iteration.
pub fn stationarity_measure(trace: &RoundTrace) -> Option<alloc::vec::Vec<f64>> {
    let gu = trace.column("grad_U_msq")?;
    let gv = trace.column("grad_V_sq")?;
    let gs = trace.column("grad_sigma_sq")?;
    Some(gu.iter().zip(&gv).zip(&gs).map(|((a, b), c)| a + b + c).collect())
}

/// Iterations at which `f_t − f_{t−1} > −(min η/3)·G_t + 1e-9`.
pub fn sufficient_decrease_violations(trace: &RoundTrace, min_eta: f64) -> alloc::vec::Vec<usize> {
    let (Some(loss), Some(g), Some(f0)) = (trace.column("loss"), stationarity_measure(trace), trace.initial_loss)
    else {
        return alloc::vec::Vec::new();
    };
    let mut prev = f0;
    let mut bad = alloc::vec::Vec::new();
    for (k, (f, gt)) in loss.iter().zip(&g).enumerate() {
        if f - prev > -(min_eta / 3.0) * gt + 1e-9 {
            bad.push(trace.rows[k].iter);
        }
        prev = *f;
    }
    bad
}

pub fn check_sufficient_decrease(trace: &RoundTrace, min_eta: f64) -> bool {
    sufficient_decrease_violations(trace, min_eta).is_empty()
}

/// `(1/T) Σ G_t` and the bound `3Δ_T/(T·min η)`.
pub fn convergence_bound(trace: &RoundTrace, min_eta: f64) -> Option<(f64, f64)> {
    let g = stationarity_measure(trace)?;
    let t = g.len();
    if t == 0 {
        return None;
    }
    let delta = trace.initial_loss? - trace.column("loss")?.last().copied()?;
    let avg = g.iter().sum::<f64>() / t as f64;
    Some((avg, 3.0 * delta / (t as f64 * min_eta)))
}

pub fn check_convergence_bound(trace: &RoundTrace, min_eta: f64) -> bool {
    convergence_bound(trace, min_eta).is_some_and(|(avg, bound)| avg <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(d_theta: usize, xi: f64, omega: f64) -> PcaTheoryInputs {
        PcaTheoryInputs {
            d_theta,
            n: 10,
            sigma_eps: 1.0,
            g_op: 2.0,
            omega,
            xi,
            c1: 0.5,
            c2: 0.5,
        }
    }

    #[test]
    fn l_v_example() {
        let c = pca_theory(&inputs(4, 1.0, 0.5)).unwrap();
        assert!((c.l_v - 192.0).abs() < 1e-12);
        assert!((c.g_v - 48.0).abs() < 1e-12);
    }

    #[test]
    fn l_v_omega_limit() {
        let c = pca_theory(&inputs(4, 2.0, 1.0 - 1e-12)).unwrap();
        assert!((c.l_v - 12.0 * 4.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn constants_finite_and_nonnegative() {
        let c = pca_theory(&inputs(200, 1e-6, 0.5)).unwrap();
        for v in [
            c.l_sigma, c.l_u, c.g_u, c.l_v, c.g_v, c.l_u_sigma, c.l_v_sigma, c.c_eta1, c.c_eta2, c.g1, c.g2,
        ] {
            assert!(v.is_finite() && v >= 0.0);
        }
        let (e1, e2, e3) = theorem_step_sizes(&c);
        assert!(e1 > 0.0 && e2 > 0.0 && e3 > 0.0 && e1 <= 1.0 && e2 <= 1.0);
    }

    #[test]
    fn l_sigma_formula() {
        let c = pca_theory(&inputs(2, 0.5, 0.5)).unwrap();
        let (d, xi, w) = (2.0_f64, 0.5_f64, 0.5_f64);
        let expected = d * d / (2.0 * xi * w * w)
            + 3.0 * d * d / (2.0 * xi * w.powi(4))
            + 3.0 * d * d / (xi * xi * w.powi(4));
        assert!((c.l_sigma - expected).abs() < 1e-9);
    }
}
