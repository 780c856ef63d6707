//! Seeded heterogeneous datasets for the three tasks.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gaussian::GaussianPopulation;
use crate::linalg::{gaussian_matrix, gaussian_vector, Mat};
use crate::manifold::{polar_retract, sample_stiefel_uniform, tangent_project, StiefelPoint};
use crate::nnet::{Activation, DenseNet, Layer};
use crate::rng::{domain, RngKey};

/// Synthetic probabilistic-PCA population. `sigma_star` is the entrywise std of the
/// perturbation of `V*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaGenConfig {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    /// Held-out samples per client.
    pub n_eval: usize,
    pub sigma_star: f64,
    pub sigma_eps: f64,
    pub seed: u64,
}

impl PcaGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.d < self.r || self.m == 0 || self.n == 0 {
            return Err(Error::invalid("pca generator", "need d >= r >= 1 and m, n >= 1"));
        }
        if !(self.sigma_star >= 0.0) || !(self.sigma_eps >= 0.0) {
            return Err(Error::invalid("pca generator", "standard deviations must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PcaDataset {
    pub v_star: StiefelPoint,
    pub u_star: Vec<StiefelPoint>,
    /// `d × n` training samples per client.
    pub train: Vec<Mat>,
    /// `d × n_eval` held-out samples per client.
    pub eval: Vec<Mat>,
}

fn pca_samples(u: &StiefelPoint, n: usize, sigma_eps: f64, rng: &mut crate::rng::SimRng) -> Mat {
    let z = gaussian_matrix(u.r(), n, rng);
    let eps = gaussian_matrix(u.d(), n, rng);
    u.as_matrix() * z + eps * sigma_eps
}

/// `U_i* = R_{V*}(P_{V*}(V* + σ*·G_i))` and samples `x = U_i* z + ε`.
pub fn gen_pca_data(cfg: &PcaGenConfig) -> Result<PcaDataset> {
    cfg.validate()?;
    let key = RngKey::new(cfg.seed);
    let v_star = sample_stiefel_uniform(cfg.d, cfg.r, &mut key.stream(domain::DATA, 0, 0))?;
    let mut u_star = Vec::with_capacity(cfg.m);
    let mut train = Vec::with_capacity(cfg.m);
    let mut eval = Vec::with_capacity(cfg.m);
    for i in 0..cfg.m as u64 {
        let g = gaussian_matrix(cfg.d, cfg.r, &mut key.stream(domain::DATA, 1, i));
        let u_hat = v_star.as_matrix() + g * cfg.sigma_star;
        let xi = tangent_project(&v_star, &u_hat)?;
        let u = polar_retract(&v_star, &xi.mat)?;
        train.push(pca_samples(&u, cfg.n, cfg.sigma_eps, &mut key.stream(domain::DATA, 2, i)));
        eval.push(pca_samples(&u, cfg.n_eval, cfg.sigma_eps, &mut key.stream(domain::DATA, 3, i)));
        u_star.push(u);
    }
    Ok(PcaDataset {
        v_star,
        u_star,
        train,
        eval,
    })
}

/// Synthetic nonlinear latent-variable population with one-layer sigmoid decoders
/// `x = sigmoid(W_i z + b_i) + ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeGenConfig {
    pub latent_dim: usize,
    pub out_dim: usize,
    pub sigma_mu: f64,
    pub sigma_star: f64,
    /// Std of the additive observation noise.
    pub noise_std: f64,
    pub m: usize,
    pub n: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for AeGenConfig {
    fn default() -> Self {
        Self {
            latent_dim: 5,
            out_dim: 64,
            sigma_mu: 0.1,
            sigma_star: 0.01,
            noise_std: 0.01,
            m: 50,
            n: 10,
            n_test: 100,
            seed: 0,
        }
    }
}

impl AeGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.out_dim == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::invalid("ae generator", "dimensions and counts must be >= 1"));
        }
        if !(self.sigma_mu >= 0.0) || !(self.sigma_star >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::invalid("ae generator", "standard deviations must be >= 0"));
        }
        Ok(())
    }

    pub fn snr_db(&self) -> f64 {
        snr_db(self.sigma_mu, self.sigma_star)
    }
}

/// `20 log10(σ_μ/σ*)`.
pub fn snr_db(sigma_mu: f64, sigma_star: f64) -> f64 {
    20.0 * libm::log10(sigma_mu / sigma_star)
}

/// Inverse of [`snr_db`].
pub fn sigma_star_for_snr(sigma_mu: f64, snr_db: f64) -> f64 {
    sigma_mu / libm::pow(10.0, snr_db / 20.0)
}

#[derive(Debug, Clone)]
pub struct AeDataset {
    pub shared_decoder: DenseNet,
    pub decoders: Vec<DenseNet>,
    pub train: Vec<Mat>,
    pub test: Vec<Mat>,
}

fn decoder_layer(w: Mat, b: DVector<f64>) -> Result<DenseNet> {
    DenseNet::from_layers(alloc::vec![Layer {
        w,
        b,
        act: Activation::Sigmoid,
    }])
}

fn ae_samples(dec: &DenseNet, n: usize, noise: f64, rng: &mut crate::rng::SimRng) -> Result<Mat> {
    let z = gaussian_matrix(dec.input_dim(), n, rng);
    let eps = gaussian_matrix(dec.output_dim(), n, rng);
    let out = dec.forward_batch(&z)?;
    Ok(out.output() + eps * noise)
}

/// Shared decoder weights and biases `~ N(0, σ_μ²)`; client decoders add `N(0, σ*²)` entrywise.
pub fn gen_ae_data(cfg: &AeGenConfig) -> Result<AeDataset> {
    cfg.validate()?;
    let key = RngKey::new(cfg.seed);
    let (r, d) = (cfg.latent_dim, cfg.out_dim);
    let mut rng = key.stream(domain::DATA, 0, 0);
    let w0 = gaussian_matrix(d, r, &mut rng) * cfg.sigma_mu;
    let b0 = gaussian_vector(d, &mut rng) * cfg.sigma_mu;
    let shared_decoder = decoder_layer(w0.clone(), b0.clone())?;
    let mut decoders = Vec::with_capacity(cfg.m);
    let mut train = Vec::with_capacity(cfg.m);
    let mut test = Vec::with_capacity(cfg.m);
    for i in 0..cfg.m as u64 {
        let mut rng = key.stream(domain::DATA, 1, i);
        let w = &w0 + gaussian_matrix(d, r, &mut rng) * cfg.sigma_star;
        let b = &b0 + gaussian_vector(d, &mut rng) * cfg.sigma_star;
        let dec = decoder_layer(w, b)?;
        train.push(ae_samples(&dec, cfg.n, cfg.noise_std, &mut key.stream(domain::DATA, 2, i))?);
        test.push(ae_samples(&dec, cfg.n_test, cfg.noise_std, &mut key.stream(domain::DATA, 3, i))?);
        decoders.push(dec);
    }
    Ok(AeDataset {
        shared_decoder,
        decoders,
        train,
        test,
    })
}

/// `θ_i ~ N(μ*, σ*² I)` and `n` samples `x_ij ~ N(θ_i, σ₀² I)` per client, as columns.
pub fn gen_gaussian_population(pop: &GaussianPopulation, seed: u64) -> Result<(Vec<DVector<f64>>, Vec<Mat>)> {
    pop.validate()?;
    let key = RngKey::new(seed);
    let d = pop.mu_star.len();
    let (s_star, s0) = (libm::sqrt(pop.sigma_star_sq), libm::sqrt(pop.sigma0_sq));
    let mut thetas = Vec::with_capacity(pop.m);
    let mut samples = Vec::with_capacity(pop.m);
    for i in 0..pop.m as u64 {
        let mut rng = key.stream(domain::DATA, 4, i);
        let theta = &pop.mu_star + gaussian_vector(d, &mut rng) * s_star;
        let mut x = gaussian_matrix(d, pop.n, &mut rng) * s0;
        for mut col in x.column_iter_mut() {
            col += &theta;
        }
        thetas.push(theta);
        samples.push(x);
    }
    Ok((thetas, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_examples() {
        assert!((snr_db(0.1, 0.05) - 6.0206).abs() < 1e-4);
        assert!((snr_db(0.1, 0.01) - 20.0).abs() < 1e-12);
        assert!((sigma_star_for_snr(0.1, 20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_pca_clients_share_v_star() {
        let cfg = PcaGenConfig {
            d: 8,
            r: 2,
            m: 3,
            n: 4,
            n_eval: 2,
            sigma_star: 0.0,
            sigma_eps: 0.1,
            seed: 1,
        };
        let ds = gen_pca_data(&cfg).unwrap();
        for u in &ds.u_star {
            assert_eq!(u.as_matrix(), ds.v_star.as_matrix());
        }
    }

    #[test]
    fn homogeneous_ae_decoders_match() {
        let cfg = AeGenConfig {
            sigma_star: 0.0,
            m: 3,
            ..AeGenConfig::default()
        };
        let ds = gen_ae_data(&cfg).unwrap();
        assert!(ds.decoders.iter().all(|d| *d == ds.shared_decoder));
    }
}
