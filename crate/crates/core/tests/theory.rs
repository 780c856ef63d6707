use adept_core::ae::{init_autoencoder, AeClientData, AeObjective};
use adept_core::dgm::{init_denoiser, DgmObjective};
use adept_core::linalg::gaussian_matrix;
use adept_core::manifold::sample_stiefel_uniform;
use adept_core::pca::*;
use adept_core::pca_theory::*;
use adept_core::personal::*;
use adept_core::prior::{max_sigma_step, sigma_lower_bound, validate_schedule, SigmaSchedule};
use adept_core::rng::{RngKey, SimRng};
use adept_core::runtime::{Schedule, Sequential};
use adept_core::trace::RoundTrace;
use rand::Rng;

struct PcaProblem {
    data: Vec<PcaClientData>,
    state: PcaState,
    r: usize,
    xi: f64,
}

fn pca_problem(rng: &mut SimRng) -> PcaProblem {
    let r = rng.random_range(1..4);
    let d = r + rng.random_range(1..8);
    let m = rng.random_range(1..5);
    let n = rng.random_range(3..20);
    let sigma_eps = rng.random_range(0.5..1.5);
    let v = sample_stiefel_uniform(d, r, rng).unwrap();
    let data = (0..m)
        .map(|_| {
            let x = gaussian_matrix(d, n, rng);
            PcaClientData::from_samples(&x, sigma_eps).unwrap()
        })
        .collect();
    let xi = rng.random_range(0.05..1.0);
    let sigma0 = rng.random_range(0.5..2.0);
    PcaProblem {
        data,
        state: PcaState::from_global(v, m, sigma0, xi).unwrap(),
        r,
        xi,
    }
}

fn sigma_column_respects(trace: &RoundTrace, column: &str, bound: f64) -> bool {
    trace.column(column).unwrap().iter().all(|s| *s >= bound - 1e-12)
}

#[test]
fn theorem_steps_give_monotone_descent_and_bounded_stationarity() {
    let mut rng = RngKey::new(31).stream(13, 0, 0);
    let omega = 0.5;
    for case in 0..100 {
        let p = pca_problem(&mut rng);
        let inputs = PcaTheoryInputs::from_data(&p.data, p.r, omega, p.xi, RngKey::new(case)).unwrap();
        let consts = pca_theory(&inputs).unwrap();
        let (e1, e2, e3) = theorem_step_sizes(&consts);
        let mut opts = PcaOptions::fixed(e1, e2, e3);
        opts.schedule.omega = omega;
        opts.clamp_sigma = false;
        opts.enforce_bound = true;
        let (_, trace) = run_adept_pca(p.state, &p.data, &opts, 50, RngKey::new(case), &Sequential).unwrap();
        let min_eta = e1.min(e2).min(e3);
        let bad = sufficient_decrease_violations(&trace, min_eta);
        assert!(bad.is_empty(), "case {case}: decrease violated at {bad:?}");
        let (avg, bound) = convergence_bound(&trace, min_eta).unwrap();
        assert!(avg <= bound, "case {case}: mean G {avg} above {bound}");
        let d_theta = p.data[0].dim() * p.r;
        let lb = sigma_lower_bound(omega, p.xi, d_theta).unwrap();
        assert!(sigma_column_respects(&trace, "sigma", lb), "case {case}");
    }
}

#[test]
fn pca_sigma_stays_above_bound_under_valid_schedules() {
    let mut rng = RngKey::new(32).stream(13, 1, 0);
    for case in 0..100 {
        let p = pca_problem(&mut rng);
        let d_theta = p.data[0].dim() * p.r;
        let omega = rng.random_range(0.05..0.95);
        let cap = max_sigma_step(omega, p.xi, d_theta).unwrap();
        let lb = sigma_lower_bound(omega, p.xi, d_theta).unwrap();
        let eta3 = cap * rng.random_range(0.0..=1.0);
        let schedule = SigmaSchedule {
            init: lb * rng.random_range(1.0..4.0),
            omega,
            ..SigmaSchedule::default()
        };
        assert!(validate_schedule(eta3, &schedule, p.xi, d_theta).unwrap());
        let mut opts = PcaOptions::fixed(1e-3, 1e-3, eta3);
        opts.schedule = schedule;
        opts.clamp_sigma = false;
        opts.enforce_bound = true;
        let state = PcaState::from_global(p.state.global().clone(), p.data.len(), schedule.init, p.xi).unwrap();
        let (_, trace) = run_adept_pca(state, &p.data, &opts, 200, RngKey::new(case), &Sequential).unwrap();
        assert!(sigma_column_respects(&trace, "sigma", lb), "case {case}");
    }
}

fn literal_net_opts(rng: &mut SimRng, xi: f64, d_theta: usize) -> (NetOptions, f64) {
    let omega = rng.random_range(0.05..0.95);
    let cap = max_sigma_step(omega, xi, d_theta).unwrap();
    let lb = sigma_lower_bound(omega, xi, d_theta).unwrap();
    let mut opts = NetOptions::literal(1e-3, 1e-3, cap * rng.random_range(0.0..=1.0));
    opts.schedule = SigmaSchedule {
        init: lb * rng.random_range(1.0..4.0),
        omega,
        ..SigmaSchedule::default()
    };
    opts.enforce_bound = true;
    opts.record_every_iter = true;
    assert!(validate_schedule(opts.eta_sigma, &opts.schedule, xi, d_theta).unwrap());
    (opts, lb)
}

#[test]
fn autoencoder_sigma_stays_above_bound_under_valid_schedules() {
    let mut rng = RngKey::new(33).stream(13, 2, 0);
    for case in 0..100 {
        let m = rng.random_range(1..4);
        let net = init_autoencoder(6, 2, &mut rng).unwrap();
        let data: Vec<AeClientData> = (0..m)
            .map(|_| AeClientData::new(gaussian_matrix(6, 5, &mut rng).map(|v| 0.5 + 0.1 * v), 2).unwrap())
            .collect();
        let xi = rng.random_range(0.01..1.0);
        let (opts, lb) = literal_net_opts(&mut rng, xi, net.n_params());
        let state = NetState::shared_init(&net, m, opts.schedule.init, false, xi).unwrap();
        let tau = rng.random_range(1..4);
        let sched = Schedule::new(200, tau).unwrap();
        let obj = AeObjective { test: None };
        let (_, trace) = train_nets(&obj, state, &data, &opts, TrainMode::Adept, sched, RngKey::new(case), &Sequential)
            .unwrap();
        assert!(sigma_column_respects(&trace, "sigma_min", lb), "case {case}");
    }
}

#[test]
fn denoiser_sigma_stays_above_bound_under_valid_schedules() {
    let mut rng = RngKey::new(34).stream(13, 3, 0);
    for case in 0..100 {
        let m = rng.random_range(1..4);
        let net = init_denoiser(2, 4, &mut rng).unwrap();
        let data: Vec<_> = (0..m).map(|_| gaussian_matrix(2, 6, &mut rng)).collect();
        let xi = rng.random_range(0.01..1.0);
        let (opts, lb) = literal_net_opts(&mut rng, xi, net.n_params());
        let state = NetState::shared_init(&net, m, opts.schedule.init, false, xi).unwrap();
        let obj = DgmObjective {
            gamma: 5,
            validation: None,
            validation_key: RngKey::new(0),
        };
        let sched = Schedule::new(200, 1).unwrap();
        let (_, trace) = train_nets(&obj, state, &data, &opts, TrainMode::Adept, sched, RngKey::new(case), &Sequential)
            .unwrap();
        assert!(sigma_column_respects(&trace, "sigma_min", lb), "case {case}");
    }
}
