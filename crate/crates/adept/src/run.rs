//! Runs the experiments described by an [`ExperimentConfig`].

use std::path::Path;

use adept_core::ae::{init_autoencoder, AeClientData, AeObjective};
use adept_core::baselines::{reconstruction_error_ratio, run_net_baseline, run_pca_baseline, BaselineKind};
use adept_core::datagen::{gen_ae_data, gen_gaussian_population, gen_pca_data, sigma_star_for_snr, AeGenConfig, PcaGenConfig};
use adept_core::dgm::{init_denoiser, validation_loss, DgmObjective};
use adept_core::gaussian::{collaboration_improvement, monte_carlo_kl, xi_guarantee, GaussianPopulation};
use adept_core::linalg::Mat;
use adept_core::manifold::sample_stiefel_uniform;
use adept_core::nnet::OptimKind;
use adept_core::pca::{run_adept_pca, PcaClientData, PcaCoupling, PcaOptions, PcaState, SigmaRule};
use adept_core::pca_theory::{convergence_bound, pca_theory, sufficient_decrease_violations, theorem_step_sizes, PcaTheoryInputs};
use adept_core::personal::{train_nets, LrDecay, NetOptions, NetState, TrainMode};
use adept_core::prior::SigmaSchedule;
use adept_core::rng::{domain, RngKey};
use adept_core::runtime::Schedule;
use adept_core::trace::RoundTrace;
use nalgebra::DVector;
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::exec::Parallel;
use crate::output::{Results, Row, TraceRecord};
use crate::persist::{write_matrix, PersistError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical abort: {0}")]
    Numerical(#[from] adept_core::error::Error),
    #[error("theory monitor: {0}")]
    Monitor(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("output: {0}")]
    Output(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// 2 for configuration problems, 1 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type RunResult<T> = Result<T, RunError>;

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Results,
    pub trace: Vec<TraceRecord>,
}

fn layout(task: Task) -> (Vec<&'static str>, Vec<&'static str>) {
    match task {
        Task::Pca => (vec!["method", "sigma_star"], vec!["ratio", "sigma"]),
        Task::Ae => (vec!["method", "snr_db", "sigma_star"], vec!["energy", "sigma_mean"]),
        Task::DgmTrain => (vec!["method", "sigma_star_sq"], vec!["mean_val_loss", "max_val_loss", "sigma_mean"]),
        Task::DgmGaussian => (
            vec!["sigma_star_sq", "xi"],
            vec![
                "avg_kl_collab",
                "avg_kl_local",
                "factor_analytic",
                "kl_analytic",
                "se_diff",
                "sigma_hat_sq",
                "improves_analytic",
            ],
        ),
    }
}

fn point_name(task: Task) -> &'static str {
    layout(task).0[1]
}

/// Grid of configs, one per sweep value (or the config itself).
pub fn expand(cfg: &ExperimentConfig) -> RunResult<Vec<ExperimentConfig>> {
    match &cfg.sweep {
        None => Ok(vec![cfg.clone()]),
        Some(s) => s.values.iter().map(|v| Ok(cfg.with_param(&s.param, *v)?)).collect(),
    }
}

/// Runs every (grid point, seed) job on a pool of `threads` workers.
///
/// Jobs and clients are fanned out in parallel; their outputs are collected in
/// grid, seed and client order, so the result does not depend on `threads`.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize, dump: Option<&Path>) -> RunResult<RunOutput> {
    cfg.validate()?;
    let points = expand(cfg)?;
    let hash = cfg.hash();
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds.iter().map(move |s| (p, *s)))
        .collect();
    let parts: Vec<RunResult<(Vec<Row>, Vec<TraceRecord>)>> = crate::exec::with_threads(threads, || {
        jobs.par_iter()
            .map(|&(p, seed)| run_job(&points[p], p, seed, dump))
            .collect()
    })?;
    let (keys, values) = layout(cfg.task.task());
    let mut results = Results::new(&keys, &values, hash);
    let mut trace = Vec::new();
    for part in parts {
        let (rows, tr) = part?;
        results.rows.extend(rows);
        trace.extend(tr);
    }
    Ok(RunOutput { results, trace })
}

fn run_job(cfg: &ExperimentConfig, point: usize, seed: u64, dump: Option<&Path>) -> RunResult<(Vec<Row>, Vec<TraceRecord>)> {
    let dump = dump.map(|d| (d, point));
    match &cfg.task {
        TaskConfig::Pca { generator, hyper } => pca_job(cfg, generator, hyper, seed, dump),
        TaskConfig::Ae { generator, hyper } => ae_job(cfg, generator, hyper, seed, dump),
        TaskConfig::DgmTrain { generator, hyper } => dgm_job(cfg, generator, hyper, seed, dump),
        TaskConfig::DgmGaussian { generator, hyper } => gaussian_job(generator, hyper, seed),
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn trace_records(method: Method, point: f64, seed: u64, trace: &RoundTrace) -> Vec<TraceRecord> {
    let mut out = Vec::new();
    for row in &trace.rows {
        for (name, value) in trace.columns.iter().zip(&row.values) {
            out.push(TraceRecord {
                method: method.name().to_string(),
                point,
                seed,
                iter: row.iter,
                metric: name.to_string(),
                value: *value,
            });
        }
    }
    out
}

fn dump_mats(dump: Option<(&Path, usize)>, task: Task, seed: u64, mats: &[Mat], kind: &str) -> RunResult<()> {
    let Some((dir, point)) = dump else {
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| RunError::Output(format!("{}: {e}", dir.display())))?;
    for (i, m) in mats.iter().enumerate() {
        let base = dir.join(format!("{}_p{point}_s{seed}_{kind}{i}", task.name()));
        let meta = json!({ "task": task.name(), "point": point, "seed": seed, "client": i, "kind": kind });
        write_matrix(&base, m, meta)?;
    }
    Ok(())
}

fn baseline_kind(method: Method, finetune_rounds: usize) -> BaselineKind {
    match method {
        Method::Local => BaselineKind::Local,
        Method::Global => BaselineKind::GlobalFedAvg,
        _ => BaselineKind::FedAvgFinetune { finetune_rounds },
    }
}

fn pca_options(h: &PcaHyper) -> PcaOptions {
    let mut opts = PcaOptions::fixed(h.eta1, h.eta2, h.eta3);
    opts.schedule = SigmaSchedule {
        init: h.sigma0,
        freeze_rounds: h.freeze_rounds,
        lazy_start_round: h.freeze_rounds,
        omega: h.omega,
        ..SigmaSchedule::default()
    };
    opts.coupling = match h.coupling {
        Coupling::Alternating => PcaCoupling::Alternating,
        Coupling::Residual => PcaCoupling::Residual,
    };
    opts.sigma_rule = match h.sigma_update {
        SigmaUpdate::Gradient => SigmaRule::Gradient,
        SigmaUpdate::Exact => SigmaRule::Exact,
    };
    opts
}

/// Theorem step sizes, the listed update rules and hard σ-bound checks.
fn monitored_pca_options(h: &PcaHyper, data: &[PcaClientData], r: usize, key: RngKey) -> RunResult<(PcaOptions, f64)> {
    let inputs = PcaTheoryInputs::from_data(data, r, h.omega, h.xi, key.child(7))?;
    let (e1, e2, e3) = theorem_step_sizes(&pca_theory(&inputs)?);
    let mut opts = PcaOptions::fixed(e1, e2, e3);
    opts.schedule = SigmaSchedule {
        init: h.sigma0,
        omega: h.omega,
        ..SigmaSchedule::default()
    };
    opts.clamp_sigma = false;
    opts.enforce_bound = true;
    Ok((opts, e1.min(e2).min(e3)))
}

fn pca_job(
    cfg: &ExperimentConfig,
    g: &PcaGenerator,
    h: &PcaHyper,
    seed: u64,
    dump: Option<(&Path, usize)>,
) -> RunResult<(Vec<Row>, Vec<TraceRecord>)> {
    let gen = PcaGenConfig {
        d: g.d,
        r: g.r,
        m: g.m,
        n: g.n,
        n_eval: g.n_eval,
        sigma_star: g.sigma_star,
        sigma_eps: g.sigma_eps,
        seed,
    };
    let ds = gen_pca_data(&gen)?;
    dump_mats(dump, Task::Pca, seed, &ds.train, "client")?;
    let data = ds
        .train
        .iter()
        .map(|x| PcaClientData::from_samples(x, g.sigma_eps))
        .collect::<Result<Vec<_>, _>>()?;
    let key = RngKey::new(seed);
    let v0 = sample_stiefel_uniform(g.d, g.r, &mut key.stream(domain::INIT, 0, 0))?;
    let exec = Parallel;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for &method in &cfg.algorithms {
        let (models, tr, sigma) = match method {
            Method::Adept => {
                let (opts, min_eta) = if cfg.monitor_theory {
                    let (o, e) = monitored_pca_options(h, &data, g.r, key)?;
                    (o, Some(e))
                } else {
                    (pca_options(h), None)
                };
                let state = PcaState::from_global(v0.clone(), g.m, opts.schedule.init, h.xi)?;
                let (fin, tr) = run_adept_pca(state, &data, &opts, h.iters, key, &exec)?;
                if let Some(min_eta) = min_eta {
                    check_pca_monitors(&tr, min_eta, g.sigma_star, seed)?;
                }
                let sigma = fin.sigma();
                (fin.locals, tr, Some(sigma))
            }
            _ => {
                let kind = baseline_kind(method, h.finetune_rounds);
                let (models, tr) = run_pca_baseline(kind, &v0, &data, h.eta1, h.iters, key, &exec)?;
                (models, tr, None)
            }
        };
        let ratio = reconstruction_error_ratio(&models, &ds.u_star, &ds.eval)?;
        rows.push(Row {
            keys: vec![method.name().into(), fmt_num(g.sigma_star)],
            seed,
            values: vec![Some(ratio), sigma],
        });
        trace.extend(trace_records(method, g.sigma_star, seed, &tr));
    }
    Ok((rows, trace))
}

fn check_pca_monitors(tr: &RoundTrace, min_eta: f64, sigma_star: f64, seed: u64) -> RunResult<()> {
    let bad = sufficient_decrease_violations(tr, min_eta);
    if !bad.is_empty() {
        return Err(RunError::Monitor(format!(
            "sufficient decrease violated at iterations {bad:?} (sigma_star {sigma_star}, seed {seed})"
        )));
    }
    match convergence_bound(tr, min_eta) {
        Some((avg, bound)) if avg <= bound => Ok(()),
        Some((avg, bound)) => Err(RunError::Monitor(format!(
            "mean stationarity {avg} exceeds bound {bound} (sigma_star {sigma_star}, seed {seed})"
        ))),
        None => Err(RunError::Monitor("trace too short for the convergence bound".into())),
    }
}

fn optim(kind: Optimizer, momentum: f64) -> OptimKind {
    match kind {
        Optimizer::Sgd => OptimKind::Sgd,
        Optimizer::Momentum => OptimKind::Momentum { beta: momentum },
        Optimizer::Adam => OptimKind::adam(),
    }
}

/// The experimental network preset with the configured values applied.
pub fn net_options(h: &NetHyper, monitor: bool) -> NetOptions {
    let mut o = NetOptions::experimental();
    o.eta_theta = h.lr;
    o.eta_mu = h.eta_mu;
    o.eta_sigma = h.eta_sigma;
    o.theta_optim = optim(h.optimizer, h.momentum);
    o.mu_optim = optim(h.mu_optimizer, h.momentum);
    o.clip = h.clip;
    o.schedule = SigmaSchedule {
        init: h.sigma0,
        freeze_rounds: h.freeze_rounds,
        lazy_start_round: h.lazy_start_round,
        omega: h.omega,
        clip_inf: h.sigma_clip,
    };
    o.decay = h.decay_round.map(|round| LrDecay {
        round,
        factor: h.decay_factor,
    });
    if monitor {
        o.clamp_sigma = false;
        o.enforce_bound = true;
    }
    o
}

fn ae_job(
    cfg: &ExperimentConfig,
    g: &AeGenerator,
    h: &NetHyper,
    seed: u64,
    dump: Option<(&Path, usize)>,
) -> RunResult<(Vec<Row>, Vec<TraceRecord>)> {
    let sigma_star = sigma_star_for_snr(g.sigma_mu, g.snr_db);
    let ds = gen_ae_data(&AeGenConfig {
        latent_dim: g.latent_dim,
        out_dim: g.out_dim,
        sigma_mu: g.sigma_mu,
        sigma_star,
        noise_std: g.noise_std,
        m: g.m,
        n: g.n,
        n_test: g.n_test,
        seed,
    })?;
    dump_mats(dump, Task::Ae, seed, &ds.train, "client")?;
    let data = ds
        .train
        .iter()
        .map(|x| AeClientData::new(x.clone(), g.latent_dim))
        .collect::<Result<Vec<_>, _>>()?;
    let key = RngKey::new(seed);
    let net = init_autoencoder(g.out_dim, g.latent_dim, &mut key.stream(domain::INIT, 0, 0))?;
    let opts = net_options(h, cfg.monitor_theory);
    let state = NetState::shared_init(&net, g.m, h.sigma0, h.per_weight_sigma, h.xi)?;
    let sched = Schedule::new(h.rounds * h.tau, h.tau)?;
    let obj = AeObjective { test: Some(&ds.test) };
    let exec = Parallel;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for &method in &cfg.algorithms {
        let (fin, tr) = match method {
            Method::Adept => train_nets(&obj, state.clone(), &data, &opts, TrainMode::Adept, sched, key, &exec)?,
            _ => run_net_baseline(baseline_kind(method, h.finetune_rounds), &obj, state.clone(), &data, &opts, sched, key, &exec)?,
        };
        let energy = tr.last("metric");
        let sigma = (method == Method::Adept).then(|| fin.prior.sigma.mean());
        rows.push(Row {
            keys: vec![method.name().into(), fmt_num(g.snr_db), fmt_num(sigma_star)],
            seed,
            values: vec![energy, sigma],
        });
        trace.extend(trace_records(method, g.snr_db, seed, &tr));
    }
    Ok((rows, trace))
}

fn dgm_job(
    cfg: &ExperimentConfig,
    g: &DgmTrainGenerator,
    h: &NetHyper,
    seed: u64,
    dump: Option<(&Path, usize)>,
) -> RunResult<(Vec<Row>, Vec<TraceRecord>)> {
    let pop = GaussianPopulation {
        mu_star: DVector::from_vec(g.mu_star.clone()),
        sigma_star_sq: g.sigma_star_sq,
        sigma0_sq: g.sigma0_sq,
        n: g.n + g.n_val,
        m: g.m,
        t_horizon: f64::INFINITY,
    };
    let (_, xs) = gen_gaussian_population(&pop, seed)?;
    let train: Vec<Mat> = xs.iter().map(|x| x.columns(0, g.n).into_owned()).collect();
    let val: Vec<Mat> = xs.iter().map(|x| x.columns(g.n, g.n_val).into_owned()).collect();
    dump_mats(dump, Task::DgmTrain, seed, &train, "client")?;
    let key = RngKey::new(seed);
    let d = g.mu_star.len();
    let net = init_denoiser(d, h.hidden, &mut key.stream(domain::INIT, 0, 0))?;
    let obj = DgmObjective {
        gamma: h.gamma,
        validation: Some(&val),
        validation_key: key,
    };
    let opts = net_options(h, cfg.monitor_theory);
    let state = NetState::shared_init(&net, g.m, h.sigma0, h.per_weight_sigma, h.xi)?;
    let sched = Schedule::new(h.rounds * h.tau, h.tau)?;
    let exec = Parallel;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for &method in &cfg.algorithms {
        let (fin, tr) = match method {
            Method::Adept => train_nets(&obj, state.clone(), &train, &opts, TrainMode::Adept, sched, key, &exec)?,
            _ => run_net_baseline(baseline_kind(method, h.finetune_rounds), &obj, state.clone(), &train, &opts, sched, key, &exec)?,
        };
        let losses = fin
            .locals
            .iter()
            .enumerate()
            .map(|(i, net)| validation_loss(net, &val[i], h.gamma, key, i))
            .collect::<Result<Vec<f64>, _>>()?;
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sigma = (method == Method::Adept).then(|| fin.prior.sigma.mean());
        rows.push(Row {
            keys: vec![method.name().into(), fmt_num(g.sigma_star_sq)],
            seed,
            values: vec![Some(mean), Some(max), sigma],
        });
        trace.extend(trace_records(method, g.sigma_star_sq, seed, &tr));
    }
    Ok((rows, trace))
}

/// Resolved ξ for the Gaussian task.
pub fn resolve_xi(g: &GaussianGenerator, xi: XiSetting) -> f64 {
    match xi {
        XiSetting::Value(v) => v,
        XiSetting::Word(_) => xi_guarantee(g.mu_star.len(), g.sigma0_sq, g.n),
    }
}

fn gaussian_job(g: &GaussianGenerator, h: &GaussianHyper, seed: u64) -> RunResult<(Vec<Row>, Vec<TraceRecord>)> {
    let c = g.sigma0_sq / g.n as f64;
    let xi = resolve_xi(g, h.xi);
    let mut rows = Vec::new();
    for &mult in &g.sigma_star_sq_grid {
        let sigma_star_sq = mult * g.sigma0_sq / g.n as f64;
        let pop = GaussianPopulation {
            mu_star: DVector::from_vec(g.mu_star.clone()),
            sigma_star_sq,
            sigma0_sq: g.sigma0_sq,
            n: g.n,
            m: g.m_sim,
            t_horizon: g.t_horizon.unwrap_or(f64::INFINITY),
        };
        let mc = monte_carlo_kl(&pop, xi, RngKey::new(seed))?;
        let (improves, factor) = collaboration_improvement(mc.sigma_hat_sq, sigma_star_sq, g.sigma0_sq, g.n);
        rows.push(Row {
            keys: vec![fmt_num(sigma_star_sq), fmt_num(xi)],
            seed,
            values: vec![
                Some(mc.avg_kl_collab),
                Some(mc.avg_kl_local),
                Some(factor),
                Some(c - factor),
                Some(mc.se_diff),
                Some(mc.sigma_hat_sq),
                Some(if improves { 1.0 } else { 0.0 }),
            ],
        });
    }
    Ok((rows, Vec::new()))
}

/// Name of the swept/point column for trace output.
pub fn trace_point_name(task: Task) -> &'static str {
    point_name(task)
}

