//! Federated training of personalized dense networks under the hierarchical prior.
//!
//! Used by the autoencoder and denoiser algorithms and by the network baselines.
//! Client `i` holds `θ_i`, a cached copy of `(μ, σ)` and its optimizer state. Every
//! `τ` iterations it sends `(μ_i, σ_i)`; the server averages them.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::nnet::{clip_inf, DenseNet, OptimKind, OptimState};
use crate::prior::{PriorState, Sigma, SigmaSchedule};
use crate::rng::{domain, RngKey, SimRng};
use crate::runtime::{aggregate_mean, mean_scalars, mean_vectors, run_rounds, ClientUpdate, Executor, FederatedTask, Schedule, StepCtx};
use crate::trace::RoundTrace;

/// Local data term of a network objective.
pub trait NetObjective: Sync {
    type Data: Sync;

    /// Data loss and its gradient over the flat parameters.
    fn loss_grad(&self, net: &DenseNet, data: &Self::Data, rng: &mut SimRng) -> Result<(f64, DVector<f64>)>;

    fn loss(&self, net: &DenseNet, data: &Self::Data, rng: &mut SimRng) -> Result<f64> {
        Ok(self.loss_grad(net, data, rng)?.0)
    }

    /// Held-out quality measure for client `client`, reported at communication rounds.
    fn metric(&self, _client: usize, _net: &DenseNet) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Personalized models coupled through the learned prior.
    Adept,
    /// Independent per-client training, no communication.
    Local,
    /// One shared model; clients start each round from it and the server averages weights.
    FedAvg,
}

/// How the θ and μ updates treat the prior coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingStep {
    /// Gradient steps on `θ_i` and `μ` with the coupling gradient `(θ_i − μ)/σ²`.
    Explicit,
    /// Steps in the coordinates `θ_i = μ + δ_i`: `μ` and `δ_i` both follow the data
    /// gradient and `δ_i` is then shrunk by the exact proximal map of `‖δ‖²/(2σ²)`.
    /// `μ` moves at every local iteration. Stable for any `σ² ≪ η`.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrDecay {
    /// First round (1-based) at which the factor applies.
    pub round: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOptions {
    pub eta_theta: f64,
    pub eta_mu: f64,
    pub eta_sigma: f64,
    pub theta_optim: OptimKind,
    pub mu_optim: OptimKind,
    /// ℓ∞ clip on θ and μ gradients; σ uses `schedule.clip_inf`.
    pub clip: f64,
    /// Update σ at the first local iteration of a round instead of the last.
    pub sigma_first: bool,
    /// Step the client copy of μ at every local iteration.
    pub global_in_local: bool,
    pub schedule: SigmaSchedule,
    pub clamp_sigma: bool,
    pub enforce_bound: bool,
    /// Scales the prior coupling seen by θ; 0 removes it.
    pub prior_weight: f64,
    pub decay: Option<LrDecay>,
    pub coupling_step: CouplingStep,
    /// Record every iteration instead of communication rounds only.
    pub record_every_iter: bool,
}

impl NetOptions {
    /// Plain gradient steps exactly as in the algorithm listing.
    pub fn literal(eta_theta: f64, eta_mu: f64, eta_sigma: f64) -> Self {
        Self {
            eta_theta,
            eta_mu,
            eta_sigma,
            theta_optim: OptimKind::Sgd,
            mu_optim: OptimKind::Sgd,
            clip: f64::INFINITY,
            sigma_first: false,
            global_in_local: false,
            schedule: SigmaSchedule::default(),
            clamp_sigma: false,
            enforce_bound: false,
            prior_weight: 1.0,
            decay: None,
            coupling_step: CouplingStep::Explicit,
            record_every_iter: false,
        }
    }

    /// Experimental setting: momentum on θ and μ, gradient clipping, σ updated first,
    /// μ stepped in local iterations, σ frozen for two rounds, residual coupling steps.
    pub fn experimental() -> Self {
        Self {
            eta_theta: 0.01,
            eta_mu: 0.01,
            eta_sigma: 0.001,
            theta_optim: OptimKind::Momentum { beta: 0.9 },
            mu_optim: OptimKind::Momentum { beta: 0.9 },
            clip: 1.0,
            sigma_first: true,
            global_in_local: true,
            schedule: SigmaSchedule {
                init: 1.0,
                freeze_rounds: 2,
                lazy_start_round: 2,
                clip_inf: 10.0,
                ..SigmaSchedule::default()
            },
            clamp_sigma: true,
            enforce_bound: false,
            prior_weight: 1.0,
            decay: None,
            coupling_step: CouplingStep::Residual,
            record_every_iter: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_theta", self.eta_theta),
            ("eta_mu", self.eta_mu),
            ("eta_sigma", self.eta_sigma),
            ("prior_weight", self.prior_weight),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, alloc::format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip", "must be positive"));
        }
        if let Some(d) = self.decay {
            if !(d.factor > 0.0) || d.round == 0 {
                return Err(Error::invalid("decay", "needs a positive factor and round >= 1"));
            }
        }
        self.schedule.validate()
    }

    fn lr_scale(&self, round: usize) -> f64 {
        match self.decay {
            Some(d) if round >= d.round => d.factor,
            _ => 1.0,
        }
    }
}

/// Personalized networks plus the population prior over their flat parameters.
#[derive(Debug, Clone)]
pub struct NetState {
    pub locals: Vec<DenseNet>,
    pub prior: PriorState<DVector<f64>>,
}

impl NetState {
    pub fn new(locals: Vec<DenseNet>, mu: DVector<f64>, sigma0: f64, per_weight: bool, xi: f64) -> Result<Self> {
        let d = mu.len();
        if locals.is_empty() {
            return Err(Error::invalid("locals", "need at least one client"));
        }
        if let Some(bad) = locals.iter().find(|n| n.n_params() != d) {
            return Err(Error::ShapeMismatch {
                context: "local network parameters",
                expected: (d, 1),
                got: (bad.n_params(), 1),
            });
        }
        let sigma = if per_weight {
            Sigma::PerWeight(DVector::from_element(d, sigma0))
        } else {
            Sigma::Scalar(sigma0)
        };
        let prior = PriorState::new(mu, sigma, xi, d)?;
        Ok(Self { locals, prior })
    }

    /// Every client starts from `net`, which is also the global model.
    pub fn shared_init(net: &DenseNet, m: usize, sigma0: f64, per_weight: bool, xi: f64) -> Result<Self> {
        Self::new(alloc::vec![net.clone(); m], net.to_flat(), sigma0, per_weight, xi)
    }

    pub fn d_theta(&self) -> usize {
        self.prior.d_theta
    }
}

/// `Σ (2ξ + diff²)/(2σ²)` for one client, without the log term.
pub fn coupling(diff: &DVector<f64>, sigma: &Sigma, xi: f64) -> f64 {
    match sigma {
        Sigma::Scalar(s) => (2.0 * xi + diff.norm_squared()) / (2.0 * s * s),
        Sigma::PerWeight(v) => crate::prior::per_weight_coupling(diff, v, xi),
    }
}

/// `d_θ log σ` or `Σ_j log σ_j`.
pub fn log_sigma_term(sigma: &Sigma, d_theta: usize) -> f64 {
    match sigma {
        Sigma::Scalar(s) => d_theta as f64 * libm::log(*s),
        Sigma::PerWeight(v) => v.iter().map(|s| libm::log(*s)).sum(),
    }
}

/// `diff / σ²`, elementwise in per-weight mode.
fn scaled_by_inv_var(diff: &DVector<f64>, sigma: &Sigma) -> DVector<f64> {
    match sigma {
        Sigma::Scalar(s) => diff / (s * s),
        Sigma::PerWeight(v) => diff.zip_map(v, |d, s| d / (s * s)),
    }
}

/// σ-derivative of one client's loss, `μ − θ = diff`.
fn sigma_grad(diff: &DVector<f64>, sigma: &Sigma, xi: f64, d_theta: usize) -> DVector<f64> {
    match sigma {
        Sigma::Scalar(s) => {
            let g = d_theta as f64 / s - (2.0 * xi + diff.norm_squared()) / (s * s * s);
            DVector::from_element(1, g)
        }
        Sigma::PerWeight(v) => crate::prior::sigma_gradient_per_weight(diff, v, xi),
    }
}

fn sigma_step(sigma: &Sigma, grad: &DVector<f64>, eta: f64, clip: f64) -> Sigma {
    let mut g = grad.clone();
    clip_inf(&mut g, clip);
    match sigma {
        Sigma::Scalar(s) => Sigma::Scalar(s - eta * g[0]),
        Sigma::PerWeight(v) => Sigma::PerWeight(v - g * eta),
    }
}

fn sigma_finite(sigma: &Sigma) -> bool {
    match sigma {
        Sigma::Scalar(s) => s.is_finite(),
        Sigma::PerWeight(v) => v.iter().all(|s| s.is_finite()),
    }
}

/// Total objective `(1/m) Σ_i [data_i + w·coupling_i] + w·log term`.
pub fn total_objective<O: NetObjective>(
    obj: &O,
    nets: &[DenseNet],
    data: &[O::Data],
    prior: &PriorState<DVector<f64>>,
    prior_weight: f64,
    key: RngKey,
) -> Result<f64> {
    if nets.is_empty() || nets.len() != data.len() {
        return Err(Error::invalid("data", "need one dataset per client"));
    }
    let mut terms = Vec::with_capacity(nets.len());
    for (i, (net, x)) in nets.iter().zip(data).enumerate() {
        let mut rng = key.stream(domain::EVAL, i as u64, 0);
        let mut v = obj.loss(net, x, &mut rng)?;
        if prior_weight != 0.0 {
            let diff = &prior.mu - net.to_flat();
            v += prior_weight * coupling(&diff, &prior.sigma, prior.xi);
        }
        terms.push(v);
    }
    let mut f = mean_scalars(&terms)?;
    if prior_weight != 0.0 {
        f += prior_weight * log_sigma_term(&prior.sigma, prior.d_theta);
    }
    Ok(f)
}

pub const NET_TRACE_COLUMNS: [&str; 8] = [
    "loss",
    "metric",
    "sigma_min",
    "sigma_mean",
    "sigma_max",
    "grad_theta_msq",
    "grad_mu_sq",
    "grad_sigma_sq",
];

struct NetClient {
    net: DenseNet,
    theta: DVector<f64>,
    mu: DVector<f64>,
    sigma: Sigma,
    opt_theta: OptimState,
    opt_mu: OptimState,
    g_theta_sq: f64,
}

struct NetGlobal {
    mu: DVector<f64>,
    sigma: Sigma,
    last: [f64; 3],
}

struct NetUpdate {
    base: ClientUpdate,
    g_mu: DVector<f64>,
    g_sigma: DVector<f64>,
}

struct NetTask<'a, O: NetObjective> {
    obj: &'a O,
    data: &'a [O::Data],
    opts: NetOptions,
    mode: TrainMode,
    xi: f64,
    d_theta: usize,
    bound: f64,
    key: RngKey,
}

impl<O: NetObjective> NetTask<'_, O> {
    fn check_finite(&self, v: &DVector<f64>, what: &'static str, iter: usize) -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what, iter })
        }
    }

    fn sigma_active(&self, round: usize) -> bool {
        self.mode == TrainMode::Adept && self.opts.eta_sigma > 0.0 && self.opts.schedule.is_active(round)
    }

    /// Minimizer of `‖y − δ‖²/(2η) + w‖y‖²/(2σ²)`.
    fn shrink(delta: &mut DVector<f64>, sigma: &Sigma, eta: f64, weight: f64) {
        let keep = |s: f64| 1.0 / (1.0 + weight * eta / (s * s));
        match sigma {
            Sigma::Scalar(s) => *delta *= keep(*s),
            Sigma::PerWeight(v) => delta.iter_mut().zip(v.iter()).for_each(|(d, s)| *d *= keep(*s)),
        }
    }

    fn step_mu(&self, c: &mut NetClient, sigma: &Sigma, eta_mu: f64) -> Result<()> {
        let mut g_mu = scaled_by_inv_var(&(&c.mu - &c.theta), sigma);
        clip_inf(&mut g_mu, self.opts.clip);
        c.opt_mu.step(&mut c.mu, &g_mu, eta_mu)
    }

    fn clamp(&self, sigma: &mut Sigma) {
        if self.opts.clamp_sigma {
            sigma.clamp_below(self.bound);
        }
    }
}

impl<O: NetObjective> FederatedTask for NetTask<'_, O> {
    type Client = NetClient;
    type Global = NetGlobal;
    type Update = NetUpdate;

    fn receive(&self, c: &mut NetClient, g: &NetGlobal) {
        match self.mode {
            TrainMode::Adept => {
                if self.opts.coupling_step == CouplingStep::Residual {
                    let delta = &c.theta - &c.mu;
                    c.theta = &g.mu + delta;
                }
                c.mu.copy_from(&g.mu);
                c.sigma = g.sigma.clone();
            }
            TrainMode::FedAvg => {
                c.theta.copy_from(&g.mu);
            }
            TrainMode::Local => {}
        }
    }

    fn step(&self, ctx: StepCtx, c: &mut NetClient, g: &NetGlobal, rng: &mut SimRng) -> Result<Option<NetUpdate>> {
        let data = &self.data[ctx.client];
        let scale = self.opts.lr_scale(ctx.round);
        let (eta_theta, eta_mu) = (self.opts.eta_theta * scale, self.opts.eta_mu * scale);
        let adept = self.mode == TrainMode::Adept;
        let active = self.sigma_active(ctx.round);

        if adept && active && self.opts.sigma_first && ctx.first_local {
            let gs = sigma_grad(&(&c.mu - &c.theta), &c.sigma, self.xi, self.d_theta);
            c.sigma = sigma_step(&c.sigma, &gs, self.opts.eta_sigma, self.opts.schedule.clip_inf);
            self.clamp(&mut c.sigma);
        }

        c.net.set_flat(&c.theta)?;
        let (_, mut g_theta) = self.obj.loss_grad(&c.net, data, rng)?;
        let coupled = adept && self.opts.prior_weight != 0.0;
        if adept && self.opts.coupling_step == CouplingStep::Residual {
            self.check_finite(&g_theta, "theta gradient", ctx.iter)?;
            let pull = scaled_by_inv_var(&(&c.theta - &c.mu), &c.sigma);
            c.g_theta_sq = (&g_theta + pull * self.opts.prior_weight).norm_squared();
            clip_inf(&mut g_theta, self.opts.clip);
            let mut delta = &c.theta - &c.mu;
            c.opt_theta.step(&mut delta, &g_theta, eta_theta)?;
            if coupled {
                Self::shrink(&mut delta, &c.sigma, eta_theta, self.opts.prior_weight);
            }
            c.opt_mu.step(&mut c.mu, &g_theta, eta_mu)?;
            c.theta = &c.mu + delta;
            self.check_finite(&c.theta, "theta", ctx.iter)?;
        } else {
            if coupled {
                let pull = scaled_by_inv_var(&(&c.theta - &c.mu), &c.sigma);
                g_theta.axpy(self.opts.prior_weight, &pull, 1.0);
            }
            self.check_finite(&g_theta, "theta gradient", ctx.iter)?;
            c.g_theta_sq = g_theta.norm_squared();
            clip_inf(&mut g_theta, self.opts.clip);
            c.opt_theta.step(&mut c.theta, &g_theta, eta_theta)?;
            self.check_finite(&c.theta, "theta", ctx.iter)?;
            if adept && self.opts.global_in_local {
                let sigma = c.sigma.clone();
                self.step_mu(c, &sigma, eta_mu)?;
            }
        }

        if !ctx.communicate {
            return Ok(None);
        }
        c.net.set_flat(&c.theta)?;

        let diff_global = &g.mu - &c.theta;
        let g_mu_exact = scaled_by_inv_var(&diff_global, &g.sigma);
        let g_sigma_exact = sigma_grad(&diff_global, &g.sigma, self.xi, self.d_theta);
        let (mu_i, sigma_i) = match self.mode {
            TrainMode::Adept => {
                if !self.opts.global_in_local && self.opts.coupling_step == CouplingStep::Explicit {
                    self.step_mu(c, &g.sigma, eta_mu)?;
                }
                if active && !self.opts.sigma_first {
                    c.sigma = sigma_step(&g.sigma, &g_sigma_exact, self.opts.eta_sigma, self.opts.schedule.clip_inf);
                    self.clamp(&mut c.sigma);
                }
                (c.mu.clone(), c.sigma.clone())
            }
            TrainMode::FedAvg => (c.theta.clone(), g.sigma.clone()),
            TrainMode::Local => (g.mu.clone(), g.sigma.clone()),
        };
        self.check_finite(&mu_i, "client global model", ctx.iter)?;
        if !sigma_finite(&sigma_i) {
            return Err(Error::NonFinite {
                what: "client sigma",
                iter: ctx.iter,
            });
        }
        Ok(Some(NetUpdate {
            base: ClientUpdate {
                client_id: ctx.client,
                mu: mu_i,
                sigma: sigma_i,
                metrics: [("grad_theta_sq", c.g_theta_sq)].into_iter().collect(),
            },
            g_mu: g_mu_exact,
            g_sigma: g_sigma_exact,
        }))
    }

    fn aggregate(&self, g: &mut NetGlobal, updates: Vec<NetUpdate>, ctx: StepCtx) -> Result<()> {
        let gt: Vec<f64> = updates.iter().map(|u| u.base.metrics["grad_theta_sq"]).collect();
        let gm: Vec<&DVector<f64>> = updates.iter().map(|u| &u.g_mu).collect();
        let gs: Vec<&DVector<f64>> = updates.iter().map(|u| &u.g_sigma).collect();
        let mean_gm = mean_vectors(&gm)?;
        let mean_gs = mean_vectors(&gs)?;
        g.last = [mean_scalars(&gt)?, mean_gm.norm_squared(), mean_gs.norm_squared()];
        if self.mode == TrainMode::Local {
            return Ok(());
        }
        let bases: Vec<ClientUpdate> = updates.into_iter().map(|u| u.base).collect();
        let (mu, mut sigma) = aggregate_mean(&bases)?;
        if self.mode == TrainMode::Adept {
            if self.opts.enforce_bound && sigma.min() < self.bound * (1.0 - 1e-12) {
                return Err(Error::ScheduleViolation {
                    sigma: sigma.min(),
                    bound: self.bound,
                    iter: ctx.iter,
                });
            }
            self.clamp(&mut sigma);
            if !(sigma.min() > 0.0) {
                return Err(Error::NonFinite {
                    what: "server sigma",
                    iter: ctx.iter,
                });
            }
        }
        self.check_finite(&mu, "server global model", ctx.iter)?;
        g.mu = mu;
        g.sigma = sigma;
        Ok(())
    }

    fn observe(&self, t: usize, communicated: bool, clients: &[NetClient], g: &NetGlobal, trace: &mut RoundTrace) -> Result<()> {
        if !(communicated || self.opts.record_every_iter) {
            return Ok(());
        }
        let nets = self.deployed(clients, g)?;
        let loss = self.objective(&nets, g)?;
        let metric = if communicated {
            let mut vals = Vec::new();
            for (i, net) in nets.iter().enumerate() {
                if let Some(v) = self.obj.metric(i, net)? {
                    vals.push(v);
                }
            }
            if vals.is_empty() {
                f64::NAN
            } else {
                mean_scalars(&vals)?
            }
        } else {
            f64::NAN
        };
        let mut row = alloc::vec![loss, metric, g.sigma.min(), g.sigma.mean(), g.sigma.max()];
        row.extend_from_slice(&g.last);
        trace.push(t, row);
        Ok(())
    }
}

impl<O: NetObjective> NetTask<'_, O> {
    fn objective(&self, nets: &[DenseNet], g: &NetGlobal) -> Result<f64> {
        let weight = if self.mode == TrainMode::Adept { self.opts.prior_weight } else { 0.0 };
        let prior = PriorState {
            mu: g.mu.clone(),
            sigma: g.sigma.clone(),
            xi: self.xi,
            d_theta: self.d_theta,
        };
        total_objective(self.obj, nets, self.data, &prior, weight, self.key)
    }
}

impl<O: NetObjective> NetTask<'_, O> {
    /// The models each client would use: its own, or the shared one under FedAvg.
    fn deployed(&self, clients: &[NetClient], g: &NetGlobal) -> Result<Vec<DenseNet>> {
        clients
            .iter()
            .map(|c| match self.mode {
                TrainMode::FedAvg => c.net.with_flat(&g.mu),
                _ => synced_net(c),
            })
            .collect()
    }
}

fn synced_net(c: &NetClient) -> Result<DenseNet> {
    c.net.with_flat(&c.theta)
}

/// Runs `schedule.iters` iterations of personalized (or baseline) network training.
///
/// The returned trace has one row per communication round, or per iteration when
/// `record_every_iter` is set, with columns [`NET_TRACE_COLUMNS`].
pub fn train_nets<O: NetObjective, E: Executor>(
    obj: &O,
    state: NetState,
    data: &[O::Data],
    opts: &NetOptions,
    mode: TrainMode,
    schedule: Schedule,
    key: RngKey,
    exec: &E,
) -> Result<(NetState, RoundTrace)> {
    opts.validate()?;
    if state.locals.len() != data.len() {
        return Err(Error::invalid("data", "need one dataset per client"));
    }
    let d_theta = state.d_theta();
    let task = NetTask {
        obj,
        data,
        opts: *opts,
        mode,
        xi: state.prior.xi,
        d_theta,
        bound: state.prior.sigma_bound(opts.schedule.omega)?,
        key,
    };
    let mut clients: Vec<NetClient> = state
        .locals
        .into_iter()
        .map(|net| NetClient {
            theta: net.to_flat(),
            mu: state.prior.mu.clone(),
            sigma: state.prior.sigma.clone(),
            opt_theta: OptimState::new(opts.theta_optim, d_theta),
            opt_mu: OptimState::new(opts.mu_optim, d_theta),
            g_theta_sq: 0.0,
            net,
        })
        .collect();
    let mut global = NetGlobal {
        mu: state.prior.mu,
        sigma: state.prior.sigma,
        last: [0.0; 3],
    };
    let mut trace = RoundTrace::new(&NET_TRACE_COLUMNS);
    let nets: Vec<DenseNet> = clients.iter().map(|c| c.net.clone()).collect();
    trace.initial_loss = Some(task.objective(&nets, &global)?);
    run_rounds(&task, &mut clients, &mut global, schedule, key, exec, &mut trace)?;
    let locals = task.deployed(&clients, &global)?;
    let prior = PriorState::new(global.mu, global.sigma, task.xi, d_theta)?;
    Ok((NetState { locals, prior }, trace))
}

/// Largest observed `‖∇F(θ₁) − ∇F(θ₂)‖/‖θ₁ − θ₂‖` over random probe pairs around each
/// client's parameters, where `F` is the data loss plus the prior coupling.
pub fn estimate_l_theta<O: NetObjective>(
    obj: &O,
    state: &NetState,
    data: &[O::Data],
    probes: usize,
    radius: f64,
    key: RngKey,
) -> Result<f64> {
    let mut best = 0.0_f64;
    for (i, (net, x)) in state.locals.iter().zip(data).enumerate() {
        let theta = net.to_flat();
        let mut rng = key.stream(domain::PROBE, i as u64, 1);
        let grad_at = |point: &DVector<f64>| -> Result<DVector<f64>> {
            let probe = net.with_flat(point)?;
            let mut r = key.stream(domain::EVAL, i as u64, 0);
            let (_, mut g) = obj.loss_grad(&probe, x, &mut r)?;
            g += scaled_by_inv_var(&(point - &state.prior.mu), &state.prior.sigma);
            Ok(g)
        };
        for _ in 0..probes {
            let a = &theta + crate::linalg::gaussian_vector(theta.len(), &mut rng).normalize() * radius;
            let b = &theta + crate::linalg::gaussian_vector(theta.len(), &mut rng).normalize() * radius;
            let dist = (&a - &b).norm();
            if dist > 0.0 {
                best = best.max((grad_at(&a)? - grad_at(&b)?).norm() / dist);
            }
        }
    }
    Ok(best)
}
