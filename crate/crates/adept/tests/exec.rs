use adept::exec::{with_threads, Parallel};
use adept_core::linalg::gaussian_matrix;
use adept_core::manifold::sample_stiefel_uniform;
use adept_core::pca::*;
use adept_core::rng::RngKey;
use adept_core::runtime::{Executor, Sequential};

#[test]
fn parallel_keeps_client_order() {
    let mut clients: Vec<u64> = (0..257).collect();
    let out = with_threads(4, || Parallel.for_each_client(&mut clients, |i, c| {
        *c += 1;
        i as u64 * 10
    }))
    .unwrap();
    assert_eq!(out, (0..257).map(|i| i * 10).collect::<Vec<_>>());
    assert_eq!(clients, (1..258).collect::<Vec<_>>());
    let sq = with_threads(3, || Parallel.map_indices(100, |i| i * i)).unwrap();
    assert_eq!(sq, (0..100).map(|i| i * i).collect::<Vec<_>>());
}

#[test]
fn parallel_matches_sequential_bitwise() {
    let mut rng = RngKey::new(9).stream(1, 0, 0);
    let (d, r) = (10, 2);
    let data: Vec<_> = (0..6)
        .map(|_| PcaClientData::from_samples(&gaussian_matrix(d, 8, &mut rng), 0.5).unwrap())
        .collect();
    let v0 = sample_stiefel_uniform(d, r, &mut rng).unwrap();
    let opts = PcaOptions::fixed(0.01, 0.01, 0.001);
    let run = |par: bool| {
        let state = PcaState::from_global(v0.clone(), data.len(), 1.0, 1e-3).unwrap();
        let (s, t) = if par {
            with_threads(4, || run_adept_pca(state, &data, &opts, 25, RngKey::new(3), &Parallel)).unwrap()
        } else {
            run_adept_pca(state, &data, &opts, 25, RngKey::new(3), &Sequential)
        }
        .unwrap();
        let mut bits: Vec<u64> = s.prior.mu.as_matrix().iter().map(|v| v.to_bits()).collect();
        bits.extend(t.column("loss").unwrap().iter().map(|v| v.to_bits()));
        bits
    };
    assert_eq!(run(true), run(false));
}
