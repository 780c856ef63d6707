//! Personalized autoencoders: reconstruction objective, energy metric and the
//! convergence constants of the alternating scheme.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nnet::{Activation, DenseNet};
use crate::personal::{coupling, train_nets, NetObjective, NetOptions, NetState, TrainMode};
use crate::prior::{check_omega, PriorState, Sigma};
use crate::rng::{RngKey, SimRng};
use crate::runtime::{Executor, Schedule};
use crate::trace::RoundTrace;

/// One client's samples, stored as the columns of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AeClientData {
    x: Mat,
    latent_dim: usize,
}

impl AeClientData {
    pub fn new(x: Mat, latent_dim: usize) -> Result<Self> {
        if x.ncols() == 0 || x.nrows() == 0 || latent_dim == 0 {
            return Err(Error::invalid("ae data", "need n >= 1 samples, d_x >= 1 and a latent width"));
        }
        Ok(Self { x, latent_dim })
    }

    pub fn samples(&self) -> &Mat {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// Encoder `d_x → r` with ReLU followed by decoder `r → d_x` with sigmoid, as one network.
pub fn init_autoencoder<R: Rng + ?Sized>(d_x: usize, r: usize, rng: &mut R) -> Result<DenseNet> {
    DenseNet::init(&[d_x, r, d_x], &[Activation::Relu, Activation::Sigmoid], rng)
}

/// `‖X − net(X)‖²_F` and its flat gradient.
pub fn reconstruction_loss_grad(net: &DenseNet, x: &Mat) -> Result<(f64, DVector<f64>)> {
    let cache = net.forward_batch(x)?;
    let resid = cache.output() - x;
    let loss = resid.norm_squared();
    let grad = net.backward(&cache, &(resid * 2.0))?;
    Ok((loss, grad))
}

pub fn reconstruction_loss(net: &DenseNet, x: &Mat) -> Result<f64> {
    let out = net.forward_batch(x)?;
    Ok((out.output() - x).norm_squared())
}

/// Reconstruction term plus `(2ξ + ‖μ − θ_i‖²)/(2σ²)`; the shared log term is left out.
pub fn ae_local_loss(theta: &DenseNet, prior: &PriorState<DVector<f64>>, data: &AeClientData) -> Result<f64> {
    prior.sigma.check()?;
    let recon = reconstruction_loss(theta, data.samples())?;
    let diff = &prior.mu - theta.to_flat();
    if diff.len() != prior.d_theta {
        return Err(Error::ShapeMismatch {
            context: "ae_local_loss",
            expected: (prior.d_theta, 1),
            got: (diff.len(), 1),
        });
    }
    Ok(recon + coupling(&diff, &prior.sigma, prior.xi))
}

/// `100 (1 − ‖x − x̂‖²/‖x‖²)`.
pub fn energy_captured(x: &DVector<f64>, x_hat: &DVector<f64>) -> Result<f64> {
    let e = x.norm_squared();
    if !(e > 0.0) {
        return Err(Error::ZeroNormSample);
    }
    if x.len() != x_hat.len() {
        return Err(Error::ShapeMismatch {
            context: "energy_captured",
            expected: (x.len(), 1),
            got: (x_hat.len(), 1),
        });
    }
    Ok(100.0 * (1.0 - (x - x_hat).norm_squared() / e))
}

/// Mean energy captured over the columns of `x`.
pub fn mean_energy(net: &DenseNet, x: &Mat) -> Result<f64> {
    let cache = net.forward_batch(x)?;
    let out = cache.output();
    let mut total = 0.0;
    for j in 0..x.ncols() {
        let xj = x.column(j).into_owned();
        total += energy_captured(&xj, &out.column(j).into_owned())?;
    }
    Ok(total / x.ncols() as f64)
}

/// Reconstruction objective, with optional held-out sets for the energy metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct AeObjective<'a> {
    pub test: Option<&'a [DMatrix<f64>]>,
}

impl NetObjective for AeObjective<'_> {
    type Data = AeClientData;

    fn loss_grad(&self, net: &DenseNet, data: &AeClientData, _rng: &mut SimRng) -> Result<(f64, DVector<f64>)> {
        reconstruction_loss_grad(net, data.samples())
    }

    fn loss(&self, net: &DenseNet, data: &AeClientData, _rng: &mut SimRng) -> Result<f64> {
        reconstruction_loss(net, data.samples())
    }

    fn metric(&self, client: usize, net: &DenseNet) -> Result<Option<f64>> {
        match self.test {
            Some(sets) => sets
                .get(client)
                .map(|x| mean_energy(net, x))
                .transpose(),
            None => Ok(None),
        }
    }
}

/// Trains personalized autoencoders; `test` supplies per-client held-out samples
/// whose mean energy is reported in the `metric` column.
pub fn run_adept_ae<E: Executor>(
    state: NetState,
    data: &[AeClientData],
    test: Option<&[DMatrix<f64>]>,
    opts: &NetOptions,
    schedule: Schedule,
    key: RngKey,
    exec: &E,
) -> Result<(NetState, RoundTrace)> {
    train_nets(&AeObjective { test }, state, data, opts, TrainMode::Adept, schedule, key, exec)
}

/// Smoothness constants for scalar σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeTheoryConstants {
    pub l_theta: f64,
    pub l_mu: f64,
    pub l_sigma: f64,
    pub l_sigma_mu: f64,
    /// Norm bound on all `θ_i` and `μ`.
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeSteps {
    pub eta_theta: f64,
    pub eta_mu: f64,
    pub eta_sigma: f64,
}

pub fn ae_theory(d_theta: usize, xi: f64, omega: f64, b: f64, l_theta: f64) -> Result<AeTheoryConstants> {
    check_omega(omega)?;
    if !(xi > 0.0) || !(b >= 0.0) || !(l_theta > 0.0) {
        return Err(Error::invalid("ae_theory", "need xi > 0, B >= 0 and L_theta > 0"));
    }
    let d = d_theta as f64;
    let (w2, w3, w4) = (omega * omega, omega * omega * omega, omega * omega * omega * omega);
    Ok(AeTheoryConstants {
        l_theta,
        l_mu: d / (2.0 * xi * w2),
        l_sigma: 3.0 * xi * d * d / (2.0 * xi * xi * w4) + 3.0 * d * d * b * b / (xi * xi * w4) + d * d / (2.0 * xi * w2),
        l_sigma_mu: b * libm::sqrt(d * d * d) / (w3 * libm::sqrt(2.0 * xi * xi * xi)),
        b,
    })
}

/// θ-step `1/L_θ`, σ-step `1/(L_σ + (L_σ^μ)²)`, μ-step `min{1, 1/L_μ}`.
pub fn ae_theorem_steps(c: &AeTheoryConstants) -> AeSteps {
    AeSteps {
        eta_theta: 1.0 / c.l_theta,
        eta_mu: (1.0 / c.l_mu).min(1.0),
        eta_sigma: 1.0 / (c.l_sigma + c.l_sigma_mu * c.l_sigma_mu),
    }
}

/// Largest parameter norm in the state.
pub fn max_param_norm(state: &NetState) -> f64 {
    state
        .locals
        .iter()
        .map(|n| n.to_flat().norm())
        .fold(state.prior.mu.norm(), f64::max)
}

/// Scalar-σ check used before a monitored run.
pub fn scalar_sigma(state: &NetState) -> Result<f64> {
    match state.prior.sigma {
        Sigma::Scalar(s) => Ok(s),
        Sigma::PerWeight(_) => Err(Error::invalid("sigma", "theory constants assume a scalar sigma")),
    }
}

/// Iterations where the recorded loss rose by more than `tol`.
pub fn loss_increase_violations(trace: &RoundTrace, tol: f64) -> Vec<usize> {
    let (Some(loss), Some(f0)) = (trace.column("loss"), trace.initial_loss) else {
        return Vec::new();
    };
    let mut prev = f0;
    let mut bad = Vec::new();
    for (k, f) in loss.iter().enumerate() {
        if *f > prev + tol {
            bad.push(trace.rows[k].iter);
        }
        prev = *f;
    }
    bad
}

/// `min_{τ | t} G_t` and the bound `max{L_θ, L_σ + (L_σ^μ)², L_μ, 1}·Δ/R`.
pub fn ae_convergence_bound(trace: &RoundTrace, c: &AeTheoryConstants, tau: usize) -> Option<(f64, f64)> {
    let gt = trace.column("grad_theta_msq")?;
    let gm = trace.column("grad_mu_sq")?;
    let gs = trace.column("grad_sigma_sq")?;
    let loss = trace.column("loss")?;
    let mut min_g = f64::INFINITY;
    let mut rounds = 0usize;
    for (k, row) in trace.rows.iter().enumerate() {
        if tau > 0 && row.iter % tau == 0 {
            rounds += 1;
            min_g = min_g.min(gt[k] + gm[k] + gs[k]);
        }
    }
    if rounds == 0 {
        return None;
    }
    let delta = trace.initial_loss? - loss.last()?;
    let lmax = c
        .l_theta
        .max(c.l_sigma + c.l_sigma_mu * c.l_sigma_mu)
        .max(c.l_mu)
        .max(1.0);
    Some((min_g, lmax * delta / rounds as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::domain;

    #[test]
    fn energy_examples() {
        let x = DVector::from_vec(alloc::vec![3.0, 4.0]);
        assert_eq!(energy_captured(&x, &x).unwrap(), 100.0);
        assert_eq!(energy_captured(&x, &DVector::zeros(2)).unwrap(), 0.0);
        let e = energy_captured(&x, &DVector::from_vec(alloc::vec![3.0, 0.0])).unwrap();
        assert!((e - 36.0).abs() < 1e-12);
        assert_eq!(energy_captured(&DVector::zeros(2), &x), Err(Error::ZeroNormSample));
    }

    #[test]
    fn identity_net_reconstruction_term() {
        use crate::nnet::Layer;
        let net = DenseNet::from_layers(alloc::vec![Layer {
            w: DMatrix::zeros(2, 2),
            b: DVector::from_vec(alloc::vec![1.0, 1.0]),
            act: Activation::Identity,
        }])
        .unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert!((reconstruction_loss(&net, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn local_loss_vanishes_without_error_or_coupling() {
        use crate::nnet::Layer;
        let net = DenseNet::from_layers(alloc::vec![Layer {
            w: DMatrix::identity(3, 3),
            b: DVector::zeros(3),
            act: Activation::Identity,
        }])
        .unwrap();
        let data = AeClientData::new(DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]), 3).unwrap();
        let prior = PriorState {
            mu: net.to_flat(),
            sigma: Sigma::Scalar(0.7),
            xi: 0.0,
            d_theta: 12,
        };
        assert_eq!(ae_local_loss(&net, &prior, &data).unwrap(), 0.0);
    }

    #[test]
    fn theory_constants() {
        let c = ae_theory(8, 0.5, 0.5, 2.0, 3.0).unwrap();
        assert!((c.l_mu - 8.0 / (2.0 * 0.5 * 0.25)).abs() < 1e-12);
        let s = ae_theorem_steps(&c);
        assert!(s.eta_mu <= 1.0 && s.eta_theta == 1.0 / 3.0);
        assert!(s.eta_sigma > 0.0 && s.eta_sigma < 1.0 / c.l_sigma);
    }

    #[test]
    fn seeded_autoencoder_shapes() {
        let mut rng = RngKey::new(9).stream(domain::INIT, 0, 0);
        let net = init_autoencoder(64, 5, &mut rng).unwrap();
        assert_eq!(net.n_params(), 64 * 5 + 5 + 5 * 64 + 64);
        assert_eq!((net.input_dim(), net.output_dim()), (64, 64));
    }
}
