//! Synchronous federated round engine.
//!
//! Clients step independently (possibly on several workers); the server reduces
//! their updates in ascending client index, so the result does not depend on
//! scheduling.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::prior::Sigma;
use crate::rng::{RngKey, SimRng};
use crate::trace::RoundTrace;

/// Runs per-client closures. Results are always returned in client order.
pub trait Executor: Sync {
    fn for_each_client<C, T, F>(&self, clients: &mut [C], f: F) -> Vec<T>
    where
        C: Send,
        T: Send,
        F: Fn(usize, &mut C) -> T + Sync;

    fn map_indices<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs clients one after another in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each_client<C, T, F>(&self, clients: &mut [C], f: F) -> Vec<T>
    where
        C: Send,
        T: Send,
        F: Fn(usize, &mut C) -> T + Sync,
    {
        clients.iter_mut().enumerate().map(|(i, c)| f(i, c)).collect()
    }

    fn map_indices<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}

/// Runs clients in descending index order; used to check scheduling independence.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reversed;

impl Executor for Reversed {
    fn for_each_client<C, T, F>(&self, clients: &mut [C], f: F) -> Vec<T>
    where
        C: Send,
        T: Send,
        F: Fn(usize, &mut C) -> T + Sync,
    {
        let mut out: Vec<T> = clients.iter_mut().enumerate().rev().map(|(i, c)| f(i, c)).collect();
        out.reverse();
        out
    }

    fn map_indices<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let mut out: Vec<T> = (0..n).rev().map(f).collect();
        out.reverse();
        out
    }
}

/// Iteration count `T` and communication period `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub iters: usize,
    pub tau: usize,
}

impl Schedule {
    pub fn new(iters: usize, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::invalid("tau", "must be at least 1"));
        }
        Ok(Self { iters, tau })
    }

    pub fn communicates_at(&self, t: usize) -> bool {
        t % self.tau == 0
    }

    pub fn communications(&self) -> usize {
        self.iters / self.tau
    }

    /// 1-based communication round that iteration `t` belongs to.
    pub fn round_of(&self, t: usize) -> usize {
        (t - 1) / self.tau + 1
    }
}

/// Position of one client iteration inside the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCtx {
    pub client: usize,
    /// 1-based iteration index `t`.
    pub iter: usize,
    /// 1-based communication round.
    pub round: usize,
    /// `τ | t − 1`: the client has just received the global state.
    pub first_local: bool,
    /// `τ | t`: the client sends an update after this step.
    pub communicate: bool,
}

/// A federated algorithm expressed as client and server callbacks.
pub trait FederatedTask: Sync {
    type Client: Send;
    type Global: Sync;
    type Update: Send;

    /// Broadcast hook, called on every client when `τ | t − 1`.
    fn receive(&self, client: &mut Self::Client, global: &Self::Global);

    /// One local iteration. Must return an update exactly when `ctx.communicate`.
    fn step(
        &self,
        ctx: StepCtx,
        client: &mut Self::Client,
        global: &Self::Global,
        rng: &mut SimRng,
    ) -> Result<Option<Self::Update>>;

    /// Server reduction; `updates` are in ascending client order.
    fn aggregate(&self, global: &mut Self::Global, updates: Vec<Self::Update>, ctx: StepCtx) -> Result<()>;

    /// Called once per iteration after aggregation.
    fn observe(
        &self,
        _t: usize,
        _communicated: bool,
        _clients: &[Self::Client],
        _global: &Self::Global,
        _trace: &mut RoundTrace,
    ) -> Result<()> {
        Ok(())
    }
}

/// Executes `schedule.iters` iterations. Each client draws its randomness from
/// the `(key, client, t)` stream.
pub fn run_rounds<K, E>(
    task: &K,
    clients: &mut [K::Client],
    global: &mut K::Global,
    schedule: Schedule,
    key: RngKey,
    exec: &E,
    trace: &mut RoundTrace,
) -> Result<usize>
where
    K: FederatedTask,
    E: Executor,
{
    if clients.is_empty() {
        return Err(Error::invalid("clients", "need at least one client"));
    }
    let mut communications = 0;
    for t in 1..=schedule.iters {
        let first_local = (t - 1) % schedule.tau == 0;
        let communicate = schedule.communicates_at(t);
        let round = schedule.round_of(t);
        let shared: &K::Global = global;
        let results = exec.for_each_client(clients, |i, client| {
            if first_local {
                task.receive(client, shared);
            }
            let ctx = StepCtx {
                client: i,
                iter: t,
                round,
                first_local,
                communicate,
            };
            let mut rng = key.client_round(i, t);
            task.step(ctx, client, shared, &mut rng).map_err(|e| e.in_client(i))
        });
        let mut updates = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            match (r?, communicate) {
                (Some(u), true) => updates.push(u),
                (None, false) => {}
                _ => {
                    return Err(Error::invalid("task", "update must be returned exactly on communication steps")
                        .in_client(i))
                }
            }
        }
        if communicate {
            let ctx = StepCtx {
                client: 0,
                iter: t,
                round,
                first_local,
                communicate,
            };
            task.aggregate(global, updates, ctx)?;
            communications += 1;
        }
        task.observe(t, communicate, clients, global, trace)?;
    }
    Ok(communications)
}

/// Message broadcast by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage<M> {
    pub mu: M,
    pub sigma: Sigma,
    pub round: usize,
}

/// Client contribution to one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub mu: DVector<f64>,
    pub sigma: Sigma,
    pub metrics: BTreeMap<&'static str, f64>,
}

/// Exact mean of `μ_i` and `σ_i`, summed in ascending `client_id`.
pub fn aggregate_mean(updates: &[ClientUpdate]) -> Result<(DVector<f64>, Sigma)> {
    let first = updates.first().ok_or(Error::EmptyAggregate)?;
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);
    let mus: Vec<&DVector<f64>> = order.iter().map(|u| &u.mu).collect();
    let mu = mean_vectors(&mus)?;
    let sigma = match &first.sigma {
        Sigma::Scalar(_) => {
            let mut acc = 0.0;
            for u in &order {
                match u.sigma {
                    Sigma::Scalar(s) => acc += s,
                    _ => return Err(Error::invalid("sigma", "mixed scalar and per-weight updates")),
                }
            }
            Sigma::Scalar(acc / order.len() as f64)
        }
        Sigma::PerWeight(_) => {
            let mut vs = Vec::with_capacity(order.len());
            for u in &order {
                match &u.sigma {
                    Sigma::PerWeight(v) => vs.push(v),
                    _ => return Err(Error::invalid("sigma", "mixed scalar and per-weight updates")),
                }
            }
            Sigma::PerWeight(mean_vectors(&vs)?)
        }
    };
    Ok((mu, sigma))
}

/// Left-to-right mean of equally sized vectors.
pub fn mean_vectors(vs: &[&DVector<f64>]) -> Result<DVector<f64>> {
    let first = vs.first().ok_or(Error::EmptyAggregate)?;
    let mut acc = DVector::zeros(first.len());
    for v in vs {
        if v.len() != acc.len() {
            return Err(Error::ShapeMismatch {
                context: "mean_vectors",
                expected: (acc.len(), 1),
                got: (v.len(), 1),
            });
        }
        acc += *v;
    }
    Ok(acc / vs.len() as f64)
}

/// Left-to-right mean of equally shaped matrices.
pub fn mean_matrices(ms: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = ms.first().ok_or(Error::EmptyAggregate)?;
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for m in ms {
        crate::linalg::check_shape("mean_matrices", m, acc.shape())?;
        acc += *m;
    }
    Ok(acc / ms.len() as f64)
}

/// Left-to-right mean of scalars.
pub fn mean_scalars(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    struct Counter;

    impl FederatedTask for Counter {
        type Client = (f64, usize);
        type Global = (f64, Vec<usize>);
        type Update = f64;

        fn receive(&self, client: &mut (f64, usize), global: &(f64, Vec<usize>)) {
            client.0 = global.0;
        }

        fn step(
            &self,
            ctx: StepCtx,
            client: &mut (f64, usize),
            _global: &(f64, Vec<usize>),
            rng: &mut SimRng,
        ) -> Result<Option<f64>> {
            client.0 += rng.random::<f64>();
            client.1 += 1;
            Ok(ctx.communicate.then_some(client.0))
        }

        fn aggregate(&self, global: &mut (f64, Vec<usize>), updates: Vec<f64>, ctx: StepCtx) -> Result<()> {
            global.0 = mean_scalars(&updates)?;
            global.1.push(ctx.iter);
            Ok(())
        }

        fn observe(
            &self,
            t: usize,
            _c: bool,
            _clients: &[(f64, usize)],
            global: &(f64, Vec<usize>),
            trace: &mut RoundTrace,
        ) -> Result<()> {
            trace.push(t, alloc::vec![global.0]);
            Ok(())
        }
    }

    fn run<E: Executor>(exec: &E, m: usize, sched: Schedule) -> (RoundTrace, (f64, Vec<usize>), usize) {
        let mut clients = alloc::vec![(0.0, 0); m];
        let mut global = (0.0, Vec::new());
        let mut trace = RoundTrace::new(&["mu"]);
        let n = run_rounds(&Counter, &mut clients, &mut global, sched, RngKey::new(4), exec, &mut trace).unwrap();
        (trace, global, n)
    }

    #[test]
    fn aggregation_happens_on_multiples_of_tau() {
        let (_, global, n) = run(&Sequential, 3, Schedule::new(10, 3).unwrap());
        assert_eq!(global.1, alloc::vec![3, 6, 9]);
        assert_eq!(n, 3);
    }

    #[test]
    fn single_step_single_client() {
        let (trace, global, n) = run(&Sequential, 1, Schedule::new(1, 1).unwrap());
        assert_eq!((n, trace.len()), (1, 1));
        assert_eq!(global.1, alloc::vec![1]);
    }

    #[test]
    fn reversed_scheduling_is_bit_identical() {
        let s = Schedule::new(12, 4).unwrap();
        let (a, ga, _) = run(&Sequential, 5, s);
        let (b, gb, _) = run(&Reversed, 5, s);
        assert_eq!(a, b);
        assert_eq!(ga.0.to_bits(), gb.0.to_bits());
    }

    #[test]
    fn zero_iterations_do_nothing() {
        let (trace, global, n) = run(&Sequential, 2, Schedule::new(0, 1).unwrap());
        assert!(trace.is_empty());
        assert_eq!((global.0, n), (0.0, 0));
    }

    #[test]
    fn aggregate_mean_examples() {
        let u = |id, x: f64| ClientUpdate {
            client_id: id,
            mu: DVector::from_element(1, x),
            sigma: Sigma::Scalar(x + 1.0),
            metrics: BTreeMap::new(),
        };
        let (mu, s) = aggregate_mean(&[u(0, 0.0), u(1, 2.0)]).unwrap();
        assert_eq!(mu[0], 1.0);
        assert_eq!(s, Sigma::Scalar(2.0));
        let (mu, _) = aggregate_mean(&[u(0, 5.0)]).unwrap();
        assert_eq!(mu[0], 5.0);
        assert_eq!(aggregate_mean(&[]), Err(Error::EmptyAggregate));
    }

    #[test]
    fn mean_matches_pairwise_tree() {
        let mut rng = RngKey::new(2).stream(0, 0, 0);
        let vs: Vec<DVector<f64>> = (0..50)
            .map(|_| DVector::from_fn(7, |_, _| rng.random::<f64>() * 10.0 - 5.0))
            .collect();
        let refs: Vec<&DVector<f64>> = vs.iter().collect();
        let seq = mean_vectors(&refs).unwrap();
        fn tree(v: &[DVector<f64>]) -> DVector<f64> {
            if v.len() == 1 {
                v[0].clone()
            } else {
                let (a, b) = v.split_at(v.len() / 2);
                tree(a) + tree(b)
            }
        }
        let t = tree(&vs) / 50.0;
        assert!((seq - t).amax() < 1e-12);
    }
}
