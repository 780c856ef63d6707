//! Experiment configuration files.
//!
//! A config is a TOML document with a `task` key, optional `algorithms`, `seeds`
//! and `out` keys, and `[generator]`, `[hyper]` and `[sweep]` tables whose
//! allowed keys depend on the task. Every key has a default, unknown keys are
//! rejected, and validation errors name the offending key and its line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Pca,
    Ae,
    DgmTrain,
    DgmGaussian,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pca => "pca",
            Task::Ae => "ae",
            Task::DgmTrain => "dgm-train",
            Task::DgmGaussian => "dgm-gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adept,
    Local,
    Global,
    FedavgFinetune,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Adept, Method::Local, Method::Global, Method::FedavgFinetune];

    pub fn name(self) -> &'static str {
        match self {
            Method::Adept => "adept",
            Method::Local => "local",
            Method::Global => "global",
            Method::FedavgFinetune => "fedavg_finetune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Alternating,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaUpdate {
    Gradient,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum,
    Adam,
}

/// ξ as a number, or `"auto"` for the value that guarantees collaboration helps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XiSetting {
    Value(f64),
    Word(AutoWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoWord {
    Auto,
}

impl XiSetting {
    pub const AUTO: XiSetting = XiSetting::Word(AutoWord::Auto);
}

impl fmt::Display for XiSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiSetting::Value(v) => write!(f, "{v}"),
            XiSetting::Word(_) => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaGenerator {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub n_eval: usize,
    /// Entrywise std of the client basis perturbation.
    pub sigma_star: f64,
    pub sigma_eps: f64,
}

impl Default for PcaGenerator {
    fn default() -> Self {
        Self {
            d: 100,
            r: 20,
            m: 10,
            n: 20,
            n_eval: 200,
            sigma_star: 0.1,
            sigma_eps: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaHyper {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub iters: usize,
    pub sigma0: f64,
    pub xi: f64,
    pub omega: f64,
    pub freeze_rounds: usize,
    pub coupling: Coupling,
    pub sigma_update: SigmaUpdate,
    pub finetune_rounds: usize,
}

impl Default for PcaHyper {
    fn default() -> Self {
        Self {
            eta1: 0.01,
            eta2: 0.01,
            eta3: 0.001,
            iters: 300,
            sigma0: 1.0,
            xi: 1e-6,
            omega: 0.5,
            freeze_rounds: 30,
            coupling: Coupling::Residual,
            sigma_update: SigmaUpdate::Exact,
            finetune_rounds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeGenerator {
    pub latent_dim: usize,
    pub out_dim: usize,
    pub sigma_mu: f64,
    /// Heterogeneity as a signal-to-noise ratio `20 log10(σ_μ/σ*)`.
    pub snr_db: f64,
    pub noise_std: f64,
    pub m: usize,
    pub n: usize,
    pub n_test: usize,
}

impl Default for AeGenerator {
    fn default() -> Self {
        Self {
            latent_dim: 5,
            out_dim: 64,
            sigma_mu: 0.1,
            snr_db: 20.0,
            noise_std: 0.01,
            m: 50,
            n: 10,
            n_test: 100,
        }
    }
}

/// Hyper-parameters shared by the two network tasks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetHyper {
    pub lr: f64,
    pub eta_mu: f64,
    pub eta_sigma: f64,
    pub optimizer: Optimizer,
    pub mu_optimizer: Optimizer,
    pub momentum: f64,
    pub tau: usize,
    pub rounds: usize,
    pub sigma0: f64,
    pub xi: f64,
    pub omega: f64,
    pub clip: f64,
    pub sigma_clip: f64,
    pub freeze_rounds: usize,
    pub lazy_start_round: usize,
    /// First round at which the learning rates are multiplied by `decay_factor`.
    pub decay_round: Option<usize>,
    pub decay_factor: f64,
    pub per_weight_sigma: bool,
    pub finetune_rounds: usize,
    /// Denoiser only.
    pub gamma: u32,
    /// Denoiser only.
    pub hidden: usize,
}

impl NetHyper {
    fn ae_default() -> Self {
        Self {
            lr: 0.01,
            eta_mu: 0.01,
            eta_sigma: 0.001,
            optimizer: Optimizer::Momentum,
            mu_optimizer: Optimizer::Momentum,
            momentum: 0.9,
            tau: 1,
            rounds: 150,
            sigma0: 0.4,
            xi: 1e-6,
            omega: 0.5,
            clip: 1.0,
            sigma_clip: 10.0,
            freeze_rounds: 2,
            lazy_start_round: 2,
            decay_round: None,
            decay_factor: 0.1,
            per_weight_sigma: true,
            finetune_rounds: 20,
            gamma: 10,
            hidden: 32,
        }
    }

    fn dgm_default() -> Self {
        Self {
            lr: 1e-3,
            optimizer: Optimizer::Adam,
            mu_optimizer: Optimizer::Adam,
            tau: 5,
            rounds: 100,
            sigma0: 0.8,
            ..Self::ae_default()
        }
    }
}

/// `[hyper]` table of the network tasks as written; missing keys take task defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetHyper {
    lr: Option<f64>,
    eta_mu: Option<f64>,
    eta_sigma: Option<f64>,
    optimizer: Option<Optimizer>,
    mu_optimizer: Option<Optimizer>,
    momentum: Option<f64>,
    tau: Option<usize>,
    rounds: Option<usize>,
    sigma0: Option<f64>,
    xi: Option<f64>,
    omega: Option<f64>,
    clip: Option<f64>,
    sigma_clip: Option<f64>,
    freeze_rounds: Option<usize>,
    lazy_start_round: Option<usize>,
    decay_round: Option<usize>,
    decay_factor: Option<f64>,
    per_weight_sigma: Option<bool>,
    finetune_rounds: Option<usize>,
    gamma: Option<u32>,
    hidden: Option<usize>,
}

impl RawNetHyper {
    fn resolve(self, base: NetHyper, task: Task) -> Result<NetHyper, ConfigError> {
        if task == Task::Ae {
            if self.gamma.is_some() {
                return Err(invalid("hyper.gamma", "is not used by task ae"));
            }
            if self.hidden.is_some() {
                return Err(invalid("hyper.hidden", "is not used by task ae"));
            }
        }
        Ok(NetHyper {
            lr: self.lr.unwrap_or(base.lr),
            eta_mu: self.eta_mu.unwrap_or(base.eta_mu),
            eta_sigma: self.eta_sigma.unwrap_or(base.eta_sigma),
            optimizer: self.optimizer.unwrap_or(base.optimizer),
            mu_optimizer: self.mu_optimizer.unwrap_or(base.mu_optimizer),
            momentum: self.momentum.unwrap_or(base.momentum),
            tau: self.tau.unwrap_or(base.tau),
            rounds: self.rounds.unwrap_or(base.rounds),
            sigma0: self.sigma0.unwrap_or(base.sigma0),
            xi: self.xi.unwrap_or(base.xi),
            omega: self.omega.unwrap_or(base.omega),
            clip: self.clip.unwrap_or(base.clip),
            sigma_clip: self.sigma_clip.unwrap_or(base.sigma_clip),
            freeze_rounds: self.freeze_rounds.unwrap_or(base.freeze_rounds),
            lazy_start_round: self.lazy_start_round.unwrap_or(base.lazy_start_round),
            decay_round: self.decay_round.or(base.decay_round),
            decay_factor: self.decay_factor.unwrap_or(base.decay_factor),
            per_weight_sigma: self.per_weight_sigma.unwrap_or(base.per_weight_sigma),
            finetune_rounds: self.finetune_rounds.unwrap_or(base.finetune_rounds),
            gamma: self.gamma.unwrap_or(base.gamma),
            hidden: self.hidden.unwrap_or(base.hidden),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgmTrainGenerator {
    pub mu_star: Vec<f64>,
    pub sigma_star_sq: f64,
    pub sigma0_sq: f64,
    pub m: usize,
    pub n: usize,
    pub n_val: usize,
}

impl Default for DgmTrainGenerator {
    fn default() -> Self {
        Self {
            mu_star: vec![1.0, -0.5],
            sigma_star_sq: 0.02,
            sigma0_sq: 0.05,
            m: 20,
            n: 8,
            n_val: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianGenerator {
    pub mu_star: Vec<f64>,
    pub sigma0_sq: f64,
    pub n: usize,
    pub m_sim: usize,
    /// Diffusion horizon; omitted means infinite.
    pub t_horizon: Option<f64>,
    /// Heterogeneity levels `σ*²` in units of `σ₀²/n`.
    pub sigma_star_sq_grid: Vec<f64>,
}

impl Default for GaussianGenerator {
    fn default() -> Self {
        Self {
            mu_star: vec![0.5, 0.5],
            sigma0_sq: 1.0,
            n: 10,
            m_sim: 10_000,
            t_horizon: None,
            sigma_star_sq_grid: vec![0.0, 0.1, 0.5, 1.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianHyper {
    pub xi: XiSetting,
}

impl Default for GaussianHyper {
    fn default() -> Self {
        Self {
            xi: XiSetting::Value(1e-6),
        }
    }
}

/// A one-parameter grid; `param` names a generator key of the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

/// Task-specific generator and hyper-parameter tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskConfig {
    Pca {
        generator: PcaGenerator,
        hyper: PcaHyper,
    },
    Ae {
        generator: AeGenerator,
        hyper: NetHyper,
    },
    DgmTrain {
        generator: DgmTrainGenerator,
        hyper: NetHyper,
    },
    DgmGaussian {
        generator: GaussianGenerator,
        hyper: GaussianHyper,
    },
}

impl TaskConfig {
    pub fn task(&self) -> Task {
        match self {
            TaskConfig::Pca { .. } => Task::Pca,
            TaskConfig::Ae { .. } => Task::Ae,
            TaskConfig::DgmTrain { .. } => Task::DgmTrain,
            TaskConfig::DgmGaussian { .. } => Task::DgmGaussian,
        }
    }
}

/// A fully defaulted and validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub task: TaskConfig,
    pub algorithms: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Not part of the hash: moving the output must not change results.csv.
    #[serde(skip)]
    pub out: PathBuf,
    pub sweep: Option<SweepSpec>,
    pub monitor_theory: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{}{key}: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        key: String,
        reason: String,
        line: Option<usize>,
    },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
        line: None,
    }
}

#[derive(Deserialize)]
struct Probe {
    task: Option<toml::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct File<G, H> {
    #[allow(dead_code)]
    task: Task,
    algorithms: Option<Vec<Method>>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    generator: Option<G>,
    hyper: Option<H>,
    sweep: Option<SweepSpec>,
}

impl<G, H> File<G, H> {
    fn parts(self) -> (Vec<Method>, Vec<u64>, PathBuf, Option<SweepSpec>, Option<G>, Option<H>) {
        (
            self.algorithms.unwrap_or_else(|| Method::ALL.to_vec()),
            self.seeds.unwrap_or_else(|| vec![0]),
            self.out.unwrap_or_else(|| PathBuf::from("out")),
            self.sweep,
            self.generator,
            self.hyper,
        )
    }
}

fn parse<G: DeserializeOwned, H: DeserializeOwned>(src: &str) -> Result<File<G, H>, ConfigError> {
    toml::from_str(src).map_err(|e| ConfigError::Parse(format!("{e}")))
}

/// Parses and validates a config document.
pub fn parse_config(src: &str) -> Result<ExperimentConfig, ConfigError> {
    let probe: Probe = toml::from_str(src).map_err(|e| ConfigError::Parse(format!("{e}")))?;
    let task: Task = match probe.task {
        None => return Err(with_line(src, invalid("task", "missing; expected one of pca, ae, dgm-train, dgm-gaussian"))),
        Some(v) => v
            .try_into()
            .map_err(|_| with_line(src, invalid("task", "expected one of pca, ae, dgm-train, dgm-gaussian")))?,
    };
    let cfg = match task {
        Task::Pca => {
            let (algorithms, seeds, out, sweep, g, h) = parse::<PcaGenerator, PcaHyper>(src)?.parts();
            ExperimentConfig {
                task: TaskConfig::Pca {
                    generator: g.unwrap_or_default(),
                    hyper: h.unwrap_or_default(),
                },
                algorithms,
                seeds,
                out,
                sweep,
                monitor_theory: false,
            }
        }
        Task::Ae => {
            let (algorithms, seeds, out, sweep, g, h) = parse::<AeGenerator, RawNetHyper>(src)?.parts();
            let hyper = h.unwrap_or_default().resolve(NetHyper::ae_default(), task).map_err(|e| with_line(src, e))?;
            ExperimentConfig {
                task: TaskConfig::Ae {
                    generator: g.unwrap_or_default(),
                    hyper,
                },
                algorithms,
                seeds,
                out,
                sweep,
                monitor_theory: false,
            }
        }
        Task::DgmTrain => {
            let (algorithms, seeds, out, sweep, g, h) = parse::<DgmTrainGenerator, RawNetHyper>(src)?.parts();
            let hyper = h.unwrap_or_default().resolve(NetHyper::dgm_default(), task).map_err(|e| with_line(src, e))?;
            ExperimentConfig {
                task: TaskConfig::DgmTrain {
                    generator: g.unwrap_or_default(),
                    hyper,
                },
                algorithms,
                seeds,
                out,
                sweep,
                monitor_theory: false,
            }
        }
        Task::DgmGaussian => {
            let (algorithms, seeds, out, sweep, g, h) = parse::<GaussianGenerator, GaussianHyper>(src)?.parts();
            ExperimentConfig {
                task: TaskConfig::DgmGaussian {
                    generator: g.unwrap_or_default(),
                    hyper: h.unwrap_or_default(),
                },
                algorithms,
                seeds,
                out,
                sweep,
                monitor_theory: false,
            }
        }
    };
    cfg.validate().map_err(|e| with_line(src, e))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&src)
}

/// Default config for a task, as if the file held only `task = "..."`.
pub fn default_config(task: Task) -> ExperimentConfig {
    parse_config(&format!("task = \"{}\"\n", task.name())).expect("defaults are valid")
}

/// Finds the line (1-based) of `table.key` in a TOML source by a line scan.
pub fn locate(src: &str, key_path: &str) -> Option<usize> {
    let (table, key) = match key_path.split_once('.') {
        Some((t, k)) => (t, k.split('.').next().unwrap_or(k)),
        None => ("", key_path),
    };
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == key_path {
                return Some(i + 1);
            }
            continue;
        }
        if current != table {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn with_line(src: &str, e: ConfigError) -> ConfigError {
    match e {
        ConfigError::Invalid { key, reason, line: None } => {
            let line = locate(src, &key);
            ConfigError::Invalid { key, reason, line }
        }
        other => other,
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be finite and >= 0, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(key, format!("must be >= {min}, got {v}")))
    }
}

fn omega(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must lie in (0, 1), got {v}")))
    }
}

impl NetHyper {
    fn validate(&self) -> Result<(), ConfigError> {
        positive("hyper.lr", self.lr)?;
        nonnegative("hyper.eta_mu", self.eta_mu)?;
        nonnegative("hyper.eta_sigma", self.eta_sigma)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("hyper.momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        at_least("hyper.tau", self.tau, 1)?;
        at_least("hyper.rounds", self.rounds, 1)?;
        positive("hyper.sigma0", self.sigma0)?;
        nonnegative("hyper.xi", self.xi)?;
        omega("hyper.omega", self.omega)?;
        positive("hyper.clip", self.clip)?;
        positive("hyper.sigma_clip", self.sigma_clip)?;
        if self.lazy_start_round < self.freeze_rounds {
            return Err(invalid("hyper.lazy_start_round", "must be >= freeze_rounds"));
        }
        if let Some(r) = self.decay_round {
            at_least("hyper.decay_round", r, 1)?;
        }
        positive("hyper.decay_factor", self.decay_factor)?;
        at_least("hyper.finetune_rounds", self.finetune_rounds, 1)?;
        at_least("hyper.gamma", self.gamma as usize, 1)?;
        at_least("hyper.hidden", self.hidden, 1)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if self.algorithms.is_empty() && self.task.task() != Task::DgmGaussian {
            return Err(invalid("algorithms", "need at least one algorithm"));
        }
        match &self.task {
            TaskConfig::Pca { generator: g, hyper: h } => {
                at_least("generator.r", g.r, 1)?;
                if g.d < g.r {
                    return Err(invalid("generator.d", format!("must be >= r ({} < {})", g.d, g.r)));
                }
                at_least("generator.m", g.m, 1)?;
                at_least("generator.n", g.n, 1)?;
                at_least("generator.n_eval", g.n_eval, 1)?;
                nonnegative("generator.sigma_star", g.sigma_star)?;
                positive("generator.sigma_eps", g.sigma_eps)?;
                positive("hyper.eta1", h.eta1)?;
                nonnegative("hyper.eta2", h.eta2)?;
                nonnegative("hyper.eta3", h.eta3)?;
                at_least("hyper.iters", h.iters, 1)?;
                positive("hyper.sigma0", h.sigma0)?;
                nonnegative("hyper.xi", h.xi)?;
                omega("hyper.omega", h.omega)?;
                at_least("hyper.finetune_rounds", h.finetune_rounds, 1)?;
            }
            TaskConfig::Ae { generator: g, hyper: h } => {
                at_least("generator.latent_dim", g.latent_dim, 1)?;
                at_least("generator.out_dim", g.out_dim, 1)?;
                positive("generator.sigma_mu", g.sigma_mu)?;
                if !g.snr_db.is_finite() {
                    return Err(invalid("generator.snr_db", "must be finite"));
                }
                nonnegative("generator.noise_std", g.noise_std)?;
                at_least("generator.m", g.m, 1)?;
                at_least("generator.n", g.n, 1)?;
                at_least("generator.n_test", g.n_test, 1)?;
                h.validate()?;
            }
            TaskConfig::DgmTrain { generator: g, hyper: h } => {
                if g.mu_star.is_empty() {
                    return Err(invalid("generator.mu_star", "must be nonempty"));
                }
                nonnegative("generator.sigma_star_sq", g.sigma_star_sq)?;
                nonnegative("generator.sigma0_sq", g.sigma0_sq)?;
                at_least("generator.m", g.m, 1)?;
                at_least("generator.n", g.n, 1)?;
                at_least("generator.n_val", g.n_val, 1)?;
                h.validate()?;
            }
            TaskConfig::DgmGaussian { generator: g, hyper: h } => {
                if g.mu_star.is_empty() {
                    return Err(invalid("generator.mu_star", "must be nonempty"));
                }
                positive("generator.sigma0_sq", g.sigma0_sq)?;
                at_least("generator.n", g.n, 1)?;
                at_least("generator.m_sim", g.m_sim, 2)?;
                if let Some(t) = g.t_horizon {
                    positive("generator.t_horizon", t)?;
                }
                if g.sigma_star_sq_grid.is_empty() {
                    return Err(invalid("generator.sigma_star_sq_grid", "must be nonempty"));
                }
                for v in &g.sigma_star_sq_grid {
                    nonnegative("generator.sigma_star_sq_grid", *v)?;
                }
                if let XiSetting::Value(x) = h.xi {
                    nonnegative("hyper.xi", x)?;
                }
            }
        }
        if let Some(s) = &self.sweep {
            let allowed = sweep_params(self.task.task());
            if !allowed.contains(&s.param.as_str()) {
                return Err(invalid(
                    "sweep.param",
                    format!("`{}` cannot be swept for task {}; expected one of {}", s.param, self.task.task().name(), allowed.join(", ")),
                ));
            }
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "must be nonempty"));
            }
            for v in &s.values {
                if !v.is_finite() {
                    return Err(invalid("sweep.values", "must be finite"));
                }
                if s.param != "snr_db" {
                    nonnegative("sweep.values", *v)?;
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Copy with the generator key named by the sweep set to `value`.
    pub fn with_param(&self, param: &str, value: f64) -> Result<ExperimentConfig, ConfigError> {
        let mut out = self.clone();
        out.sweep = None;
        match (&mut out.task, param) {
            (TaskConfig::Pca { generator, .. }, "sigma_star") => generator.sigma_star = value,
            (TaskConfig::Ae { generator, .. }, "snr_db") => generator.snr_db = value,
            (TaskConfig::DgmTrain { generator, .. }, "sigma_star_sq") => generator.sigma_star_sq = value,
            (TaskConfig::DgmGaussian { generator, .. }, "sigma_star_sq") => {
                generator.sigma_star_sq_grid = vec![value * generator.n as f64 / generator.sigma0_sq]
            }
            _ => return Err(invalid("sweep.param", format!("`{param}` cannot be swept for this task"))),
        }
        out.validate()?;
        Ok(out)
    }
}

/// Generator keys that `sweep.param` may name.
pub fn sweep_params(task: Task) -> &'static [&'static str] {
    match task {
        Task::Pca => &["sigma_star"],
        Task::Ae => &["snr_db"],
        Task::DgmTrain | Task::DgmGaussian => &["sigma_star_sq"],
    }
}
