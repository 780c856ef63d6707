//! Personalized denoisers trained on randomly corrupted samples.
//!
//! A sample `x` is mixed with Gaussian noise `z` as `x(1 − α) + zα`, where
//! `α = k/γ` for `k` uniform on `{1, …, γ}`. The denoiser sees the mixture and `α`
//! and predicts `x`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, Mat};
use crate::nnet::{Activation, DenseNet};
use crate::personal::{coupling, log_sigma_term, train_nets, NetObjective, NetOptions, NetState, TrainMode};
use crate::prior::PriorState;
use crate::rng::{domain, RngKey, SimRng};
use crate::runtime::{Executor, Schedule};
use crate::trace::RoundTrace;

/// Per-sample corruption levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionDraw {
    raw: Vec<u32>,
    gamma: u32,
}

impl CorruptionDraw {
    pub fn sample<R: Rng + ?Sized>(n: usize, gamma: u32, rng: &mut R) -> Result<Self> {
        if gamma == 0 {
            return Err(Error::invalid("gamma", "must be >= 1"));
        }
        let raw = (0..n).map(|_| rng.random_range(1..=gamma)).collect();
        Ok(Self { raw, gamma })
    }

    pub fn raw(&self) -> &[u32] {
        &self.raw
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    /// Mixing levels `k/γ ∈ (0, 1]`.
    pub fn alpha(&self) -> Vec<f64> {
        self.raw.iter().map(|k| *k as f64 / self.gamma as f64).collect()
    }
}

/// Input width `d + 1`, two ReLU hidden layers, linear output of width `d`.
pub fn init_denoiser<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Result<DenseNet> {
    DenseNet::init(
        &[d + 1, hidden, hidden, d],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
        rng,
    )
}

/// Stacks `x(1 − α) + zα` over the row of levels `α`.
pub fn corrupt(x: &Mat, alpha: &[f64], z: &Mat) -> Result<Mat> {
    let (d, n) = x.shape();
    if alpha.len() != n || z.shape() != (d, n) {
        return Err(Error::ShapeMismatch {
            context: "corrupt",
            expected: (d, n),
            got: (z.nrows(), alpha.len()),
        });
    }
    let mut out = DMatrix::zeros(d + 1, n);
    for j in 0..n {
        let a = alpha[j];
        for k in 0..d {
            out[(k, j)] = x[(k, j)] * (1.0 - a) + z[(k, j)] * a;
        }
        out[(d, j)] = a;
    }
    Ok(out)
}

/// `Σ_j ‖φ(x_j(1 − α_j) + z_jα_j, α_j) − x_j‖²` and its flat gradient.
pub fn denoising_loss_grad(net: &DenseNet, x: &Mat, alpha: &[f64], z: &Mat) -> Result<(f64, DVector<f64>)> {
    let input = corrupt(x, alpha, z)?;
    let cache = net.forward_batch(&input)?;
    let resid = cache.output() - x;
    let loss = resid.norm_squared();
    let grad = net.backward(&cache, &(resid * 2.0))?;
    Ok((loss, grad))
}

pub fn denoising_loss(net: &DenseNet, x: &Mat, alpha: &[f64], z: &Mat) -> Result<f64> {
    let input = corrupt(x, alpha, z)?;
    let cache = net.forward_batch(&input)?;
    Ok((cache.output() - x).norm_squared())
}

/// Denoising error at fixed levels and noise plus the prior terms
/// `(2ξ + ‖μ − θ_i‖²)/(2σ²) + d_θ log σ`.
pub fn dgm_loss_at(theta: &DenseNet, prior: &PriorState<DVector<f64>>, x: &Mat, alpha: &[f64], z: &Mat) -> Result<f64> {
    prior.sigma.check()?;
    let diff = &prior.mu - theta.to_flat();
    Ok(denoising_loss(theta, x, alpha, z)? + coupling(&diff, &prior.sigma, prior.xi) + log_sigma_term(&prior.sigma, prior.d_theta))
}

/// [`dgm_loss_at`] with fresh levels from `{1, …, γ}` and fresh standard Gaussian noise.
pub fn dgm_loss(theta: &DenseNet, prior: &PriorState<DVector<f64>>, x: &Mat, gamma: u32, rng: &mut SimRng) -> Result<f64> {
    let draw = CorruptionDraw::sample(x.ncols(), gamma, rng)?;
    let z = gaussian_matrix(x.nrows(), x.ncols(), rng);
    dgm_loss_at(theta, prior, x, &draw.alpha(), &z)
}

/// Mean per-sample denoising error on `x` with draws fixed by `key`.
pub fn validation_loss(net: &DenseNet, x: &Mat, gamma: u32, key: RngKey, client: usize) -> Result<f64> {
    let mut rng = key.stream(domain::EVAL, client as u64, 1);
    let draw = CorruptionDraw::sample(x.ncols(), gamma, &mut rng)?;
    let z = gaussian_matrix(x.nrows(), x.ncols(), &mut rng);
    Ok(denoising_loss(net, x, &draw.alpha(), &z)? / x.ncols() as f64)
}

/// Denoising objective; levels and noise are redrawn at every local step.
#[derive(Debug, Clone, Copy)]
pub struct DgmObjective<'a> {
    pub gamma: u32,
    /// Per-client held-out samples for the `metric` column.
    pub validation: Option<&'a [DMatrix<f64>]>,
    pub validation_key: RngKey,
}

impl NetObjective for DgmObjective<'_> {
    type Data = Mat;

    fn loss_grad(&self, net: &DenseNet, x: &Mat, rng: &mut SimRng) -> Result<(f64, DVector<f64>)> {
        let draw = CorruptionDraw::sample(x.ncols(), self.gamma, rng)?;
        let z = gaussian_matrix(x.nrows(), x.ncols(), rng);
        denoising_loss_grad(net, x, &draw.alpha(), &z)
    }

    fn metric(&self, client: usize, net: &DenseNet) -> Result<Option<f64>> {
        match self.validation {
            Some(sets) => sets
                .get(client)
                .map(|x| validation_loss(net, x, self.gamma, self.validation_key, client))
                .transpose(),
            None => Ok(None),
        }
    }
}

pub fn run_adept_dgm<E: Executor>(
    state: NetState,
    data: &[Mat],
    objective: &DgmObjective<'_>,
    opts: &NetOptions,
    schedule: Schedule,
    key: RngKey,
    exec: &E,
) -> Result<(NetState, RoundTrace)> {
    train_nets(objective, state, data, opts, TrainMode::Adept, schedule, key, exec)
}
