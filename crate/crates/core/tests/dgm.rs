use adept_core::datagen::gen_gaussian_population;
use adept_core::dgm::*;
use adept_core::gaussian::GaussianPopulation;
use adept_core::linalg::Mat;
use adept_core::nnet::OptimKind;
use adept_core::personal::*;
use adept_core::rng::{domain, RngKey};
use adept_core::runtime::{Schedule, Sequential};
use nalgebra::DVector;

const GAMMA: u32 = 10;

fn toy(m: usize, n: usize, sigma_star_sq: f64, seed: u64) -> (Vec<Mat>, Vec<Mat>) {
    let pop = GaussianPopulation {
        mu_star: DVector::from_vec(vec![1.0, -0.5]),
        sigma_star_sq,
        sigma0_sq: 0.05,
        n: n + 200,
        m,
        t_horizon: f64::INFINITY,
    };
    let (_, xs) = gen_gaussian_population(&pop, seed).unwrap();
    let train = xs.iter().map(|x| x.columns(0, n).into_owned()).collect();
    let val = xs.iter().map(|x| x.columns(n, 200).into_owned()).collect();
    (train, val)
}

fn denoiser_opts() -> NetOptions {
    let mut opts = NetOptions::experimental();
    opts.theta_optim = OptimKind::adam();
    opts.mu_optim = OptimKind::adam();
    opts.eta_theta = 1e-3;
    opts.schedule.init = 0.8;
    opts
}

#[test]
fn single_client_denoiser_halves_validation_loss() {
    let (train, val) = toy(1, 256, 0.0, 3);
    let key = RngKey::new(3);
    let net = init_denoiser(2, 32, &mut key.stream(domain::INIT, 0, 0)).unwrap();
    let before = validation_loss(&net, &val[0], GAMMA, key, 0).unwrap();
    let mut opts = denoiser_opts();
    opts.prior_weight = 0.0;
    let obj = DgmObjective {
        gamma: GAMMA,
        validation: Some(&val),
        validation_key: key,
    };
    let state = NetState::shared_init(&net, 1, 0.8, false, 1e-6).unwrap();
    let sched = Schedule::new(200 * 5, 5).unwrap();
    let (out, _) = train_nets(&obj, state, &train, &opts, TrainMode::Local, sched, key, &Sequential).unwrap();
    let after = validation_loss(&out.locals[0], &val[0], GAMMA, key, 0).unwrap();
    assert!(after <= 0.5 * before, "validation loss {before} -> {after}");
}

#[test]
fn adept_denoiser_beats_local_on_most_clients() {
    let m = 20;
    let mut wins = 0;
    for seed in 1..=5 {
        let (train, val) = toy(m, 8, 0.02, seed);
        let key = RngKey::new(seed);
        let net = init_denoiser(2, 32, &mut key.stream(domain::INIT, 0, 0)).unwrap();
        let obj = DgmObjective {
            gamma: GAMMA,
            validation: Some(&val),
            validation_key: key,
        };
        let opts = denoiser_opts();
        let sched = Schedule::new(100 * 5, 5).unwrap();
        let state = NetState::shared_init(&net, m, 0.8, true, 1e-6).unwrap();
        let (adept, _) = run_adept_dgm(state.clone(), &train, &obj, &opts, sched, key, &Sequential).unwrap();
        let (local, _) = train_nets(&obj, state, &train, &opts, TrainMode::Local, sched, key, &Sequential).unwrap();
        wins += (0..m)
            .filter(|&i| {
                let a = validation_loss(&adept.locals[i], &val[i], GAMMA, key, i).unwrap();
                let l = validation_loss(&local.locals[i], &val[i], GAMMA, key, i).unwrap();
                a <= l
            })
            .count();
    }
    assert!(wins * 10 >= 7 * 5 * m, "ADEPT better on {wins}/{} client runs", 5 * m);
}
