use adept_core::linalg::{frob, Mat};
use adept_core::manifold::*;
use adept_core::rng::RngKey;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12).prop_flat_map(|r| (r..r + 15, Just(r)))
}

fn point(d: usize, r: usize, seed: u64) -> StiefelPoint {
    sample_stiefel_uniform(d, r, &mut RngKey::new(seed).stream(9, 0, 0)).unwrap()
}

fn ambient(d: usize, r: usize, seed: u64) -> Mat {
    adept_core::linalg::gaussian_matrix(d, r, &mut RngKey::new(seed).stream(9, 1, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retraction_stays_orthonormal((d, r) in dims(), seed in any::<u64>(), scale in 1e-3f64..10.0) {
        let base = point(d, r, seed);
        let xi = tangent_project(&base, &(ambient(d, r, seed) * scale)).unwrap();
        let out = polar_retract(&base, &xi.mat).unwrap();
        prop_assert!(out.orthonormality_error() < 1e-8);
    }

    #[test]
    fn projection_is_idempotent((d, r) in dims(), seed in any::<u64>()) {
        let v = point(d, r, seed);
        let once = tangent_project(&v, &ambient(d, r, seed)).unwrap();
        let twice = tangent_project(&v, &once.mat).unwrap();
        prop_assert!(frob(&(twice.mat - &once.mat)) <= 1e-10 * (1.0 + frob(&once.mat)));
        prop_assert!(once.skew_residual() < 1e-10 * (1.0 + once.norm()));
    }

    #[test]
    fn polar_factor_is_on_manifold_and_fixes_points((d, r) in dims(), seed in any::<u64>()) {
        let m = ambient(d, r, seed);
        let p = polar_factor(&m).unwrap();
        prop_assert!(p.orthonormality_error() < 1e-8);
        let u = point(d, r, seed);
        let q = polar_factor(u.as_matrix()).unwrap();
        prop_assert!(frob(&(q.as_matrix() - u.as_matrix())) < 1e-10);
    }

    #[test]
    fn polar_factor_is_nearest_among_sampled_points((d, r) in dims(), seed in any::<u64>()) {
        let m = ambient(d, r, seed);
        let p = polar_factor(&m).unwrap();
        let best = frob(&(&m - p.as_matrix()));
        for k in 0..8 {
            let other = point(d, r, seed.wrapping_add(k + 1));
            prop_assert!(best <= frob(&(&m - other.as_matrix())) + 1e-10);
        }
    }

    #[test]
    fn distance_vanishes_on_self_and_is_nonnegative((d, r) in dims(), seed in any::<u64>()) {
        let v = point(d, r, seed);
        let u = point(d, r, seed ^ 0x55);
        prop_assert!(stiefel_distance(&v, &v).unwrap() < 1e-10);
        prop_assert!(stiefel_distance(&v, &u).unwrap() >= 0.0);
    }
}

#[test]
fn retraction_error_is_second_order() {
    let key = RngKey::new(17);
    let mut rng = key.stream(9, 2, 0);
    for trial in 0..10 {
        let base = sample_stiefel_uniform(20, 4, &mut rng).unwrap();
        let dir = random_tangent(&base, 1.0, &mut rng);
        let scales: Vec<f64> = (0..8).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let errs: Vec<f64> = scales.iter().map(|s| retraction_error(&base, &(&dir.mat * *s)).unwrap()).collect();
        let slope = log_log_slope(&scales, &errs);
        assert!((slope - 2.0).abs() <= 0.1, "trial {trial}: slope {slope}");
        let halving = errs[0] / errs[1];
        assert!((halving - 4.0).abs() < 0.2, "trial {trial}: halving ratio {halving}");
    }
}

#[test]
fn haar_samples_are_rotation_invariant_in_mean() {
    let mut rng = RngKey::new(3).stream(9, 3, 0);
    let mut acc = Mat::zeros(6, 6);
    let reps = 4000;
    for _ in 0..reps {
        let u = sample_stiefel_uniform(6, 2, &mut rng).unwrap();
        acc += u.as_matrix() * u.as_matrix().transpose();
    }
    let mean = acc / reps as f64;
    // E[UUᵀ] = (r/d) I for Haar U.
    let expect = Mat::identity(6, 6) * (2.0 / 6.0);
    assert!(frob(&(mean - expect)) < 0.03);
}
