//! Adaptive personalized PCA on the Stiefel manifold.
//!
//! Client `i` holds a personalized basis `U_i`, the server a global basis `V`
//! and the shared scale `σ`. With `W = UUᵀ + σ_ε² I` the per-client objective is
//! `(n/2)(log|W| + tr(W⁻¹S)) + (2ξ + d²(V, U))/(2σ²) + d_θ log σ`,
//! and the global objective is the client average.

use alloc::vec::Vec;

use crate::error::{check_sigma, Error, Result};
use crate::linalg::{all_finite, check_shape, frob_sq, trace, Mat};
use crate::manifold::{polar_factor, polar_retract, project_raw, StiefelPoint, TangentVector};
use crate::prior::{check_omega, sigma_gradient, sigma_lower_bound, PriorState, Sigma, SigmaSchedule};
use crate::rng::RngKey;
use crate::runtime::{mean_matrices, mean_scalars, run_rounds, Executor, FederatedTask, Schedule, StepCtx};
use crate::rng::SimRng;
use crate::trace::RoundTrace;

/// Sample covariance of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaClientData {
    s: Mat,
    n: usize,
    sigma_eps: f64,
    trace_s: f64,
}

impl PcaClientData {
    pub fn new(s: Mat, n: usize, sigma_eps: f64) -> Result<Self> {
        let d = s.nrows();
        check_shape("PcaClientData", &s, (d, d))?;
        if n == 0 {
            return Err(Error::invalid("n", "need at least one sample"));
        }
        if !(sigma_eps > 0.0) || !sigma_eps.is_finite() {
            return Err(Error::invalid("sigma_eps", alloc::format!("must be positive, got {sigma_eps}")));
        }
        let asym = frob_sq(&(&s - s.transpose()));
        if asym > 1e-20 * (1.0 + frob_sq(&s)) {
            return Err(Error::invalid("s", "covariance must be symmetric"));
        }
        let min_eig = nalgebra::SymmetricEigen::new(s.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::invalid("s", alloc::format!("covariance has eigenvalue {min_eig}")));
        }
        let trace_s = trace(&s);
        Ok(Self { s, n, sigma_eps, trace_s })
    }

    /// `S = X Xᵀ / n` for samples stored as the columns of `x`.
    pub fn from_samples(x: &Mat, sigma_eps: f64) -> Result<Self> {
        let n = x.ncols();
        if n == 0 {
            return Err(Error::invalid("x", "need at least one sample"));
        }
        let mut s = (x * x.transpose()) / n as f64;
        let sym = (&s + s.transpose()) * 0.5;
        s.copy_from(&sym);
        Self::new(s, n, sigma_eps)
    }

    pub fn covariance(&self) -> &Mat {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Spectral norm of `S`.
    pub fn op_norm(&self) -> f64 {
        crate::linalg::sym_op_norm(&self.s)
    }
}

/// `log|W|` for `W = UUᵀ + σ_ε² I` with orthonormal `U`.
pub fn log_det_w(d: usize, r: usize, sigma_eps: f64) -> f64 {
    let e2 = sigma_eps * sigma_eps;
    r as f64 * libm::log(1.0 + e2) + (d - r) as f64 * libm::log(e2)
}

/// `W⁻¹ = σ_ε⁻² (I − UUᵀ/(1 + σ_ε²))`.
pub fn inv_w(u: &StiefelPoint, sigma_eps: f64) -> Mat {
    let e2 = sigma_eps * sigma_eps;
    let um = u.as_matrix();
    let mut w = -(um * um.transpose()) / (1.0 + e2);
    for i in 0..w.nrows() {
        w[(i, i)] += 1.0;
    }
    w / e2
}

/// Likelihood term `(n/2)(log|W| + tr(W⁻¹S))`.
pub fn pca_data_loss(u: &StiefelPoint, data: &PcaClientData) -> Result<f64> {
    check_shape("pca_data_loss", u.as_matrix(), (data.dim(), u.r()))?;
    let su = &data.s * u.as_matrix();
    Ok(data_loss_from(u, &su, data))
}

fn data_loss_from(u: &StiefelPoint, su: &Mat, data: &PcaClientData) -> f64 {
    let e2 = data.sigma_eps * data.sigma_eps;
    let utsu = u.as_matrix().dot(su);
    let tr_ws = (data.trace_s - utsu / (1.0 + e2)) / e2;
    0.5 * data.n as f64 * (log_det_w(data.dim(), u.r(), data.sigma_eps) + tr_ws)
}

/// Euclidean gradient of the likelihood term, `n(W⁻¹U − W⁻¹SW⁻¹U)`.
pub fn pca_data_gradient(u: &StiefelPoint, data: &PcaClientData) -> Result<Mat> {
    check_shape("pca_data_gradient", u.as_matrix(), (data.dim(), u.r()))?;
    let su = &data.s * u.as_matrix();
    Ok(data_gradient_from(u, &su, data))
}

fn data_gradient_from(u: &StiefelPoint, su: &Mat, data: &PcaClientData) -> Mat {
    let e2 = data.sigma_eps * data.sigma_eps;
    let a = 1.0 / (1.0 + e2);
    let um = u.as_matrix();
    // W⁻¹U = aU, hence W⁻¹SW⁻¹U = (a/σ_ε²)(SU − a U (UᵀSU)).
    let utsu = um.tr_mul(su);
    let wswu = (su - (um * utsu) * a) * (a / e2);
    (um * a - wswu) * data.n as f64
}

/// Per-client objective without the shared `d_θ log σ` term.
pub fn pca_local_loss(u: &StiefelPoint, v: &StiefelPoint, sigma: f64, xi: f64, data: &PcaClientData) -> Result<f64> {
    check_sigma(sigma)?;
    check_shape("pca_local_loss", v.as_matrix(), u.dims())?;
    let d2 = frob_sq(&project_raw(v.as_matrix(), u.as_matrix()));
    Ok(pca_data_loss(u, data)? + (2.0 * xi + d2) / (2.0 * sigma * sigma))
}

/// `(1/m) Σ_i f_i + d_θ log σ`.
pub fn pca_total_loss(
    locals: &[StiefelPoint],
    v: &StiefelPoint,
    sigma: f64,
    xi: f64,
    data: &[PcaClientData],
) -> Result<f64> {
    if locals.len() != data.len() || locals.is_empty() {
        return Err(Error::invalid("locals", "need one basis per client"));
    }
    let mut acc = 0.0;
    for (u, dat) in locals.iter().zip(data) {
        acc += pca_local_loss(u, v, sigma, xi, dat)?;
    }
    let d_theta = v.d() * v.r();
    Ok(acc / locals.len() as f64 + d_theta as f64 * libm::log(sigma))
}

/// Riemannian gradients of the per-client objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaGradients {
    /// Projected onto the tangent space at `U`.
    pub grad_u: TangentVector,
    /// Projected onto the tangent space at `V`.
    pub grad_v: TangentVector,
    /// Includes the `d_θ/σ` contribution of the log term.
    pub grad_sigma: f64,
}

/// Prior part of the U-gradient, `P_{T_V}(U)/σ²`, and of the V-gradient,
/// `−P_{T_V}(U)(UᵀV + VᵀU)/(2σ²)`, both before tangent projection.
fn prior_gradients(u: &Mat, v: &Mat, sigma: f64) -> (Mat, Mat, f64) {
    let p = project_raw(v, u);
    let d2 = frob_sq(&p);
    let s2 = sigma * sigma;
    let sym = crate::linalg::sym_product(u, v);
    let gv = (&p * sym) * (-0.5 / s2);
    (p / s2, gv, d2)
}

fn grad_v_at(u: &StiefelPoint, v: &StiefelPoint, sigma: f64) -> Mat {
    let (_, gv, _) = prior_gradients(u.as_matrix(), v.as_matrix(), sigma);
    project_raw(v.as_matrix(), &gv)
}

pub fn pca_gradients(
    u: &StiefelPoint,
    v: &StiefelPoint,
    sigma: f64,
    xi: f64,
    data: &PcaClientData,
) -> Result<PcaGradients> {
    check_sigma(sigma)?;
    check_shape("pca_gradients", v.as_matrix(), u.dims())?;
    check_shape("pca_gradients", u.as_matrix(), (data.dim(), u.r()))?;
    let su = &data.s * u.as_matrix();
    let (pu, gv, d2) = prior_gradients(u.as_matrix(), v.as_matrix(), sigma);
    let gu = data_gradient_from(u, &su, data) + pu;
    Ok(PcaGradients {
        grad_u: TangentVector {
            base: u.clone(),
            mat: project_raw(u.as_matrix(), &gu),
        },
        grad_v: TangentVector {
            base: v.clone(),
            mat: project_raw(v.as_matrix(), &gv),
        },
        grad_sigma: sigma_gradient(d2, sigma, xi, u.d() * u.r())?,
    })
}

/// Personalized bases, global basis and prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaState {
    pub locals: Vec<StiefelPoint>,
    pub prior: PriorState<StiefelPoint>,
}

impl PcaState {
    /// Every client starts at the global basis `v`.
    pub fn from_global(v: StiefelPoint, m: usize, sigma0: f64, xi: f64) -> Result<Self> {
        let d_theta = v.d() * v.r();
        let prior = PriorState::new(v.clone(), Sigma::Scalar(sigma0), xi, d_theta)?;
        Ok(Self {
            locals: alloc::vec![v; m],
            prior,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.prior.sigma.mean()
    }

    pub fn global(&self) -> &StiefelPoint {
        &self.prior.mu
    }
}

/// How the nominal step sizes are turned into the steps actually taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// Use `(η₁, η₂, η₃)` as given.
    Fixed,
    /// Cap `η₁, η₂` at `κσ²` and `η₃` at `κσ²/d_θ`, using the current `σ`.
    /// The prior curvature grows like `1/σ²`, so this keeps the iteration stable
    /// when `σ` becomes small.
    SigmaScaled { kappa: f64 },
}

/// How the bases are moved each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaCoupling {
    /// The listed scheme: `U_i` follows its full gradient, `V` the prior gradient.
    Alternating,
    /// `U_i` is first pulled toward `V` by the proximal map of the coupling
    /// (`polar((1 − k)V + kU_i)`, `k = 1/(1 + η₁/σ²)`), then both `U_i` and `V`
    /// follow the likelihood gradient of client `i` evaluated at `U_i`.
    Residual,
}

/// How σ is updated once active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaRule {
    /// Gradient step with `η₃`.
    Gradient,
    /// Exact minimizer `σ² = (2ξ + mean_i d²(V, U_i))/d_θ` of the objective in σ.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaOptions {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub step: StepMode,
    pub coupling: PcaCoupling,
    pub sigma_rule: SigmaRule,
    pub schedule: SigmaSchedule,
    /// Clamp σ to `ω√(2ξ/d_θ)` after every aggregation.
    pub clamp_sigma: bool,
    /// Abort with [`Error::ScheduleViolation`] if σ drops below the bound.
    pub enforce_bound: bool,
}

impl PcaOptions {
    pub fn fixed(eta1: f64, eta2: f64, eta3: f64) -> Self {
        Self {
            eta1,
            eta2,
            eta3,
            step: StepMode::Fixed,
            coupling: PcaCoupling::Alternating,
            sigma_rule: SigmaRule::Gradient,
            schedule: SigmaSchedule::default(),
            clamp_sigma: true,
            enforce_bound: false,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2), ("eta3", self.eta3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, alloc::format!("must be a nonnegative number, got {v}")));
            }
        }
        if let StepMode::SigmaScaled { kappa } = self.step {
            if !(kappa > 0.0) {
                return Err(Error::invalid("kappa", "must be positive"));
            }
        }
        check_omega(self.schedule.omega)
    }

    fn steps(&self, sigma: f64, d_theta: usize) -> (f64, f64, f64) {
        match self.step {
            StepMode::Fixed => (self.eta1, self.eta2, self.eta3),
            StepMode::SigmaScaled { kappa } => {
                let cap = kappa * sigma * sigma;
                (
                    self.eta1.min(cap),
                    self.eta2.min(cap),
                    self.eta3.min(cap / d_theta as f64),
                )
            }
        }
    }
}

pub const PCA_TRACE_COLUMNS: [&str; 5] = ["loss", "grad_U_msq", "grad_V_sq", "grad_sigma_sq", "sigma"];

struct PcaGlobal {
    v: StiefelPoint,
    sigma: f64,
    last: [f64; 3],
}

struct PcaUpdate {
    v_i: Mat,
    sigma_i: f64,
    d2: f64,
    g_u_sq: f64,
    g_v: Mat,
    g_sigma: f64,
}

struct PcaTask<'a> {
    data: &'a [PcaClientData],
    opts: PcaOptions,
    xi: f64,
    d_theta: usize,
    bound: f64,
}

impl FederatedTask for PcaTask<'_> {
    type Client = StiefelPoint;
    type Global = PcaGlobal;
    type Update = PcaUpdate;

    fn receive(&self, _client: &mut StiefelPoint, _global: &PcaGlobal) {}

    fn step(&self, ctx: StepCtx, u: &mut StiefelPoint, g: &PcaGlobal, _rng: &mut SimRng) -> Result<Option<PcaUpdate>> {
        let data = &self.data[ctx.client];
        let (eta1, eta2, eta3) = self.opts.steps(g.sigma, self.d_theta);
        let residual = self.opts.coupling == PcaCoupling::Residual;
        let d2 = frob_sq(&project_raw(g.v.as_matrix(), u.as_matrix()));
        if residual {
            let keep = 1.0 / (1.0 + eta1 / (g.sigma * g.sigma));
            *u = polar_factor(&(g.v.as_matrix() * (1.0 - keep) + u.as_matrix() * keep))?;
        }
        let grads = pca_gradients(u, &g.v, g.sigma, self.xi, data)?;
        let g_sigma = grads.grad_sigma;
        let sigma_i = if self.opts.schedule.is_active(ctx.round) && self.opts.sigma_rule == SigmaRule::Gradient {
            g.sigma - eta3 * g_sigma
        } else {
            g.sigma
        };
        let (new_u, g_v) = if residual {
            let euclid = pca_data_gradient(u, data)?;
            let step_u = project_raw(u.as_matrix(), &euclid);
            (polar_retract(u, &(step_u * -eta1))?, project_raw(g.v.as_matrix(), &euclid))
        } else {
            let new_u = polar_retract(u, &(&grads.grad_u.mat * -eta1))?;
            let g_v = grad_v_at(&new_u, &g.v, g.sigma);
            (new_u, g_v)
        };
        let v_i = g.v.as_matrix() - &g_v * eta2;
        if !all_finite(new_u.as_matrix()) || !all_finite(&v_i) || !sigma_i.is_finite() {
            return Err(Error::NonFinite {
                what: "client update",
                iter: ctx.iter,
            });
        }
        let g_u_sq = grads.grad_u.norm_sq();
        *u = new_u;
        Ok(Some(PcaUpdate {
            v_i,
            sigma_i,
            d2,
            g_u_sq,
            g_v,
            g_sigma,
        }))
    }

    fn aggregate(&self, g: &mut PcaGlobal, updates: Vec<PcaUpdate>, ctx: StepCtx) -> Result<()> {
        let vs: Vec<&Mat> = updates.iter().map(|u| &u.v_i).collect();
        let mean_v = mean_matrices(&vs)?;
        let gvs: Vec<&Mat> = updates.iter().map(|u| &u.g_v).collect();
        let mean_gv = mean_matrices(&gvs)?;
        let sig: Vec<f64> = updates.iter().map(|u| u.sigma_i).collect();
        let gs: Vec<f64> = updates.iter().map(|u| u.g_sigma).collect();
        let gu: Vec<f64> = updates.iter().map(|u| u.g_u_sq).collect();
        let new_v = polar_retract(&g.v, &(mean_v - g.v.as_matrix()))?;
        let mut sigma = mean_scalars(&sig)?;
        if self.opts.sigma_rule == SigmaRule::Exact && self.opts.schedule.is_active(ctx.round) {
            let d2: Vec<f64> = updates.iter().map(|u| u.d2).collect();
            sigma = libm::sqrt((2.0 * self.xi + mean_scalars(&d2)?) / self.d_theta as f64);
        }
        if self.opts.enforce_bound && sigma < self.bound - 1e-12 {
            return Err(Error::ScheduleViolation {
                sigma,
                bound: self.bound,
                iter: ctx.iter,
            });
        }
        if self.opts.clamp_sigma {
            sigma = sigma.max(self.bound);
        }
        if !(sigma > 0.0) || !all_finite(new_v.as_matrix()) {
            return Err(Error::NonFinite {
                what: "server aggregate",
                iter: ctx.iter,
            });
        }
        let g_sigma = mean_scalars(&gs)?;
        g.last = [mean_scalars(&gu)?, frob_sq(&mean_gv), g_sigma * g_sigma];
        g.v = new_v;
        g.sigma = sigma;
        Ok(())
    }

    fn observe(
        &self,
        t: usize,
        _communicated: bool,
        clients: &[StiefelPoint],
        g: &PcaGlobal,
        trace: &mut RoundTrace,
    ) -> Result<()> {
        let loss = pca_total_loss(clients, &g.v, g.sigma, self.xi, self.data)?;
        trace.push(t, alloc::vec![loss, g.last[0], g.last[1], g.last[2], g.sigma]);
        Ok(())
    }
}

/// Runs the alternating Riemannian scheme for `iters` iterations.
///
/// Each iteration every client updates σ from the previous state, takes a retracted
/// step on `U_i`, and a Euclidean step on `V` evaluated at the new `U_i`; the server
/// retracts the mean of the client `V`s and averages σ. With
/// [`PcaCoupling::Residual`] the `U_i` step starts from the proximal pull toward `V`.
pub fn run_adept_pca<E: Executor>(
    state: PcaState,
    data: &[PcaClientData],
    opts: &PcaOptions,
    iters: usize,
    key: RngKey,
    exec: &E,
) -> Result<(PcaState, RoundTrace)> {
    opts.validate()?;
    if state.locals.len() != data.len() {
        return Err(Error::invalid("data", "need one dataset per client"));
    }
    let xi = state.prior.xi;
    let v = state.prior.mu.clone();
    let d_theta = v.d() * v.r();
    let sigma = match state.prior.sigma {
        Sigma::Scalar(s) => s,
        Sigma::PerWeight(_) => return Err(Error::invalid("sigma", "PCA uses a scalar sigma")),
    };
    let task = PcaTask {
        data,
        opts: *opts,
        xi,
        d_theta,
        bound: sigma_lower_bound(opts.schedule.omega, xi, d_theta)?,
    };
    let mut trace = RoundTrace::new(&PCA_TRACE_COLUMNS);
    trace.initial_loss = Some(pca_total_loss(&state.locals, &v, sigma, xi, data)?);
    let mut locals = state.locals;
    let mut global = PcaGlobal {
        v,
        sigma,
        last: [0.0; 3],
    };
    run_rounds(&task, &mut locals, &mut global, Schedule::new(iters, 1)?, key, exec, &mut trace)?;
    let prior = PriorState::new(global.v, Sigma::Scalar(global.sigma), xi, d_theta)?;
    Ok((PcaState { locals, prior }, trace))
}

/// Mean over held-out samples (columns of `x`) of `‖x − UUᵀx‖²`.
pub fn reconstruction_error(u: &StiefelPoint, x: &Mat) -> Result<f64> {
    check_shape("reconstruction_error", x, (u.d(), x.ncols()))?;
    if x.ncols() == 0 {
        return Err(Error::invalid("x", "need at least one sample"));
    }
    let um = u.as_matrix();
    let coeff = um.tr_mul(x);
    let resid = x - um * coeff;
    Ok(frob_sq(&resid) / x.ncols() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::manifold::{random_tangent, sample_stiefel_uniform};
    use crate::runtime::Sequential;

    fn instance(seed: u64, d: usize, r: usize, n: usize) -> (StiefelPoint, StiefelPoint, PcaClientData) {
        let mut rng = RngKey::new(seed).stream(0, 0, 0);
        let u = sample_stiefel_uniform(d, r, &mut rng).unwrap();
        let v = sample_stiefel_uniform(d, r, &mut rng).unwrap();
        let x = gaussian_matrix(d, n, &mut rng);
        (u, v, PcaClientData::from_samples(&x, 0.8).unwrap())
    }

    #[test]
    fn closed_forms_match_dense_algebra() {
        for seed in 0..10 {
            let (u, _, data) = instance(seed, 12, 3, 7);
            let um = u.as_matrix();
            let w = um * um.transpose() + Mat::identity(12, 12) * 0.64;
            let dense_inv = w.clone().try_inverse().unwrap();
            assert!((inv_w(&u, 0.8) - &dense_inv).norm() < 1e-8);
            let ld = w.clone().cholesky().unwrap().determinant().ln();
            assert!((log_det_w(12, 3, 0.8) - ld).abs() < 1e-8);
            let naive = 0.5 * 7.0 * (ld + (dense_inv * data.covariance()).trace());
            assert!((pca_data_loss(&u, &data).unwrap() - naive).abs() < 1e-8);
        }
    }

    #[test]
    fn log_det_example() {
        assert!((log_det_w(3, 1, 1.0) - libm::log(2.0)).abs() < 1e-15);
    }

    #[test]
    fn trace_term_is_d_when_covariance_is_w() {
        let u = StiefelPoint::canonical(4, 2).unwrap();
        let w = u.as_matrix() * u.as_matrix().transpose() + Mat::identity(4, 4) * 0.25;
        let data = PcaClientData::new(w, 2, 0.5).unwrap();
        let expected = log_det_w(4, 2, 0.5) + 4.0;
        assert!((pca_data_loss(&u, &data).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn prior_gradients_vanish_at_global() {
        let (u, _, data) = instance(3, 6, 2, 5);
        let g = pca_gradients(&u, &u, 0.7, 1e-3, &data).unwrap();
        assert!(g.grad_v.mat.norm() < 1e-14);
        let expected = sigma_gradient(0.0, 0.7, 1e-3, 12).unwrap();
        assert_eq!(g.grad_sigma, expected);
    }

    #[test]
    fn gradients_match_retraction_finite_differences() {
        let h = 1e-5;
        for seed in 0..5 {
            let (u, v, data) = instance(100 + seed, 8, 3, 6);
            let (sigma, xi) = (0.9, 0.01);
            let g = pca_gradients(&u, &v, sigma, xi, &data).unwrap();
            let mut rng = RngKey::new(seed).stream(1, 0, 0);
            for _ in 0..5 {
                let dir = random_tangent(&u, 1.0, &mut rng).mat;
                let f = |s: f64| {
                    let up = polar_retract(&u, &(&dir * s)).unwrap();
                    pca_local_loss(&up, &v, sigma, xi, &data).unwrap()
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let an = g.grad_u.mat.dot(&dir);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "U: {fd} vs {an}");

                let dir = random_tangent(&v, 1.0, &mut rng).mat;
                let f = |s: f64| {
                    let vp = polar_retract(&v, &(&dir * s)).unwrap();
                    pca_local_loss(&u, &vp, sigma, xi, &data).unwrap()
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let an = g.grad_v.mat.dot(&dir);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "V: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn zero_iterations_return_input() {
        let (u, _, data) = instance(9, 5, 2, 4);
        let state = PcaState::from_global(u, 1, 1.0, 1e-3).unwrap();
        let (out, trace) = run_adept_pca(
            state.clone(),
            &[data],
            &PcaOptions::fixed(0.01, 0.01, 0.0),
            0,
            RngKey::new(0),
            &Sequential,
        )
        .unwrap();
        assert_eq!(out, state);
        assert!(trace.is_empty());
    }

    #[test]
    fn single_client_without_prior_descends() {
        let (u, _, data) = instance(11, 10, 3, 30);
        let state = PcaState::from_global(u, 1, 1e6, 1e-9).unwrap();
        let opts = PcaOptions::fixed(0.01, 0.0, 0.0);
        let (_, trace) = run_adept_pca(state, &[data], &opts, 100, RngKey::new(0), &Sequential).unwrap();
        let loss = trace.column("loss").unwrap();
        let mut prev = trace.initial_loss.unwrap();
        for l in loss {
            assert!(l <= prev + 1e-9, "{l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn reconstruction_error_ignores_rotation() {
        let (u, _, _) = instance(12, 6, 2, 3);
        let mut rng = RngKey::new(5).stream(0, 0, 0);
        let x = gaussian_matrix(6, 20, &mut rng);
        let q = sample_stiefel_uniform(2, 2, &mut rng).unwrap();
        let rotated = StiefelPoint::new(u.as_matrix() * q.as_matrix()).unwrap();
        let a = reconstruction_error(&u, &x).unwrap();
        let b = reconstruction_error(&rotated, &x).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
