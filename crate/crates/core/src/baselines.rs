//! Local, global and FedAvg-plus-fine-tuning baselines.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Mat};
use crate::manifold::{polar_retract, tangent_project, StiefelPoint};
use crate::pca::{pca_data_gradient, pca_data_loss, reconstruction_error, PcaClientData};
use crate::personal::{train_nets, NetObjective, NetOptions, NetState, TrainMode};
use crate::rng::{RngKey, SimRng};
use crate::runtime::{mean_matrices, mean_scalars, run_rounds, Executor, FederatedTask, Schedule, StepCtx};
use crate::trace::RoundTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Local,
    GlobalFedAvg,
    FedAvgFinetune { finetune_rounds: usize },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineKind::FedAvgFinetune { finetune_rounds: 0 } => {
                Err(Error::invalid("finetune_rounds", "must be >= 1"))
            }
            _ => Ok(()),
        }
    }
}

pub const PCA_BASELINE_COLUMNS: [&str; 1] = ["loss"];

/// Riemannian gradient of one client's likelihood term at `u`.
fn riemannian_data_grad(u: &StiefelPoint, data: &PcaClientData) -> Result<Mat> {
    Ok(tangent_project(u, &pca_data_gradient(u, data)?)?.mat)
}

fn mean_data_loss(us: &[StiefelPoint], data: &[PcaClientData]) -> Result<f64> {
    let losses = us
        .iter()
        .zip(data)
        .map(|(u, d)| pca_data_loss(u, d))
        .collect::<Result<Vec<_>>>()?;
    mean_scalars(&losses)
}

struct PcaLocal<'a> {
    data: &'a [PcaClientData],
    eta: f64,
}

impl FederatedTask for PcaLocal<'_> {
    type Client = StiefelPoint;
    type Global = ();
    type Update = ();

    fn receive(&self, _c: &mut StiefelPoint, _g: &()) {}

    fn step(&self, ctx: StepCtx, u: &mut StiefelPoint, _g: &(), _rng: &mut SimRng) -> Result<Option<()>> {
        let g = riemannian_data_grad(u, &self.data[ctx.client])?;
        let next = polar_retract(u, &(g * -self.eta))?;
        if !all_finite(next.as_matrix()) {
            return Err(Error::NonFinite {
                what: "local principal components",
                iter: ctx.iter,
            });
        }
        *u = next;
        Ok(ctx.communicate.then_some(()))
    }

    fn aggregate(&self, _g: &mut (), _u: Vec<()>, _ctx: StepCtx) -> Result<()> {
        Ok(())
    }

    fn observe(&self, t: usize, _c: bool, clients: &[StiefelPoint], _g: &(), trace: &mut RoundTrace) -> Result<()> {
        trace.push(t, alloc::vec![mean_data_loss(clients, self.data)?]);
        Ok(())
    }
}

struct PcaGlobal<'a> {
    data: &'a [PcaClientData],
    eta: f64,
}

impl FederatedTask for PcaGlobal<'_> {
    type Client = ();
    type Global = StiefelPoint;
    type Update = Mat;

    fn receive(&self, _c: &mut (), _g: &StiefelPoint) {}

    fn step(&self, ctx: StepCtx, _c: &mut (), v: &StiefelPoint, _rng: &mut SimRng) -> Result<Option<Mat>> {
        riemannian_data_grad(v, &self.data[ctx.client]).map(Some)
    }

    fn aggregate(&self, v: &mut StiefelPoint, grads: Vec<Mat>, ctx: StepCtx) -> Result<()> {
        let refs: Vec<&Mat> = grads.iter().collect();
        let g = mean_matrices(&refs)?;
        let next = polar_retract(v, &(g * -self.eta))?;
        if !all_finite(next.as_matrix()) {
            return Err(Error::NonFinite {
                what: "global principal components",
                iter: ctx.iter,
            });
        }
        *v = next;
        Ok(())
    }

    fn observe(&self, t: usize, _c: bool, clients: &[()], v: &StiefelPoint, trace: &mut RoundTrace) -> Result<()> {
        let us: Vec<StiefelPoint> = clients.iter().map(|_| v.clone()).collect();
        trace.push(t, alloc::vec![mean_data_loss(&us, self.data)?]);
        Ok(())
    }
}

/// Independent retracted gradient descent on each client's likelihood.
pub fn pca_local<E: Executor>(
    init: Vec<StiefelPoint>,
    data: &[PcaClientData],
    eta: f64,
    iters: usize,
    key: RngKey,
    exec: &E,
) -> Result<(Vec<StiefelPoint>, RoundTrace)> {
    if init.len() != data.len() {
        return Err(Error::invalid("data", "need one dataset per client"));
    }
    let mut us = init;
    let mut trace = RoundTrace::new(&PCA_BASELINE_COLUMNS);
    trace.initial_loss = Some(mean_data_loss(&us, data)?);
    run_rounds(&PcaLocal { data, eta }, &mut us, &mut (), Schedule::new(iters, 1)?, key, exec, &mut trace)?;
    Ok((us, trace))
}

/// One shared `V` moved along the average of the clients' Riemannian gradients.
pub fn pca_global<E: Executor>(
    v0: StiefelPoint,
    data: &[PcaClientData],
    eta: f64,
    iters: usize,
    key: RngKey,
    exec: &E,
) -> Result<(StiefelPoint, RoundTrace)> {
    let mut clients = alloc::vec![(); data.len()];
    let mut v = v0;
    let mut trace = RoundTrace::new(&PCA_BASELINE_COLUMNS);
    let us: Vec<StiefelPoint> = data.iter().map(|_| v.clone()).collect();
    trace.initial_loss = Some(mean_data_loss(&us, data)?);
    run_rounds(&PcaGlobal { data, eta }, &mut clients, &mut v, Schedule::new(iters, 1)?, key, exec, &mut trace)?;
    Ok((v, trace))
}

fn append_trace(into: &mut RoundTrace, from: RoundTrace, offset: usize) {
    for row in from.rows {
        into.push(row.iter + offset, row.values);
    }
}

/// Runs a PCA baseline for `iters` iterations from the shared start `v0`.
/// Fine-tuning adds `finetune_rounds` local iterations after the global phase.
pub fn run_pca_baseline<E: Executor>(
    kind: BaselineKind,
    v0: &StiefelPoint,
    data: &[PcaClientData],
    eta: f64,
    iters: usize,
    key: RngKey,
    exec: &E,
) -> Result<(Vec<StiefelPoint>, RoundTrace)> {
    kind.validate()?;
    let m = data.len();
    match kind {
        BaselineKind::Local => pca_local(alloc::vec![v0.clone(); m], data, eta, iters, key, exec),
        BaselineKind::GlobalFedAvg => {
            let (v, trace) = pca_global(v0.clone(), data, eta, iters, key, exec)?;
            Ok((alloc::vec![v; m], trace))
        }
        BaselineKind::FedAvgFinetune { finetune_rounds } => {
            let (v, mut trace) = pca_global(v0.clone(), data, eta, iters, key, exec)?;
            let (us, tail) = pca_local(alloc::vec![v; m], data, eta, finetune_rounds, key.child(1), exec)?;
            append_trace(&mut trace, tail, iters);
            Ok((us, trace))
        }
    }
}

/// Network baselines: `Local` trains each client alone, `GlobalFedAvg` averages
/// weights every `τ` steps, fine-tuning continues locally for `finetune_rounds·τ` steps.
pub fn run_net_baseline<O: NetObjective, E: Executor>(
    kind: BaselineKind,
    obj: &O,
    state: NetState,
    data: &[O::Data],
    opts: &NetOptions,
    schedule: Schedule,
    key: RngKey,
    exec: &E,
) -> Result<(NetState, RoundTrace)> {
    kind.validate()?;
    match kind {
        BaselineKind::Local => train_nets(obj, state, data, opts, TrainMode::Local, schedule, key, exec),
        BaselineKind::GlobalFedAvg => train_nets(obj, state, data, opts, TrainMode::FedAvg, schedule, key, exec),
        BaselineKind::FedAvgFinetune { finetune_rounds } => {
            let (mid, mut trace) = train_nets(obj, state, data, opts, TrainMode::FedAvg, schedule, key, exec)?;
            let tail_sched = Schedule::new(finetune_rounds * schedule.tau, schedule.tau)?;
            let (out, tail) = train_nets(obj, mid, data, opts, TrainMode::Local, tail_sched, key.child(1), exec)?;
            append_trace(&mut trace, tail, schedule.iters);
            Ok((out, trace))
        }
    }
}

/// `Σ_i err(U_i, X_i) / Σ_i err(U_i*, X_i)` with `err` the mean squared residual
/// of projecting the held-out columns of `X_i`.
pub fn reconstruction_error_ratio(models: &[StiefelPoint], truth: &[StiefelPoint], eval: &[Mat]) -> Result<f64> {
    if models.len() != eval.len() || truth.len() != eval.len() || eval.is_empty() {
        return Err(Error::invalid("eval", "need one model, truth and eval set per client"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((u, t), x) in models.iter().zip(truth).zip(eval) {
        num += reconstruction_error(u, x)?;
        den += reconstruction_error(t, x)?;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroNormSample);
    }
    Ok(num / den)
}
