use okdmd::linalg::{Mat, DEFAULT_RANK_TOL};
use okdmd::synthgen::{generate_dataset, GenConfig, GridSpec};
use okdmd::snapshots::SnapshotSet;
use okdmd::{Error, KernelSpec};
use okdmd_harness::oracle_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rows: usize, cols: usize, seed: u64, scale: f64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn desk() -> (SnapshotSet, SnapshotSet) {
    generate_dataset(GridSpec::new(4).unwrap(), &GenConfig::default()).unwrap()
}

#[test]
fn log_kernel_matches_explicit_operator_across_ranks() {
    let (train, test) = desk();
    let m = train.m();
    for k in [1, 2, 5, m / 2, m - 1, m] {
        let rep = oracle_check(&train, &test.x, KernelSpec::Logarithmic, k, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.max_residual() <= 1e-8, "k={k}: {rep}");
        assert!(rep.state_residual.is_some());
    }
}

#[test]
fn full_rank_model_is_the_unconstrained_fit() {
    let (train, test) = desk();
    let m = train.m();
    let rep = oracle_check(&train, &test.x, KernelSpec::Logarithmic, m, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(rep.k_eff, m);
    let r = rep.unconstrained_residual.expect("no truncation at k = m");
    assert!(r <= 1e-8, "{rep}");
}

#[test]
fn truncated_model_reports_no_unconstrained_residual() {
    let (train, test) = desk();
    let rep = oracle_check(&train, &test.x, KernelSpec::Logarithmic, 3, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(rep.k_eff, 3);
    assert!(rep.unconstrained_residual.is_none());
}

#[test]
fn linear_kernel_recovers_linear_dynamics() {
    let a = uniform(8, 8, 11, 0.3);
    let x = uniform(8, 6, 12, 1.0);
    let y = &a * &x;
    let train = SnapshotSet::new(x, y).unwrap();
    let probes = uniform(8, 4, 13, 1.0);
    for k in 1..=6 {
        let rep = oracle_check(&train, &probes, KernelSpec::Linear, k, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.max_residual() <= 1e-10, "k={k}: {rep}");
    }
}

#[test]
fn quadratic_polynomial_kernel_on_a_small_state() {
    let x = uniform(3, 5, 21, 0.5);
    let y = x.map(|v| v + 0.2 * v * v);
    let train = SnapshotSet::new(x, y).unwrap();
    let probes = uniform(3, 2, 22, 0.5);
    let kernel = KernelSpec::Polynomial { gamma: 2 };
    for k in [1, 3, 5] {
        let rep = oracle_check(&train, &probes, kernel, k, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.feature_dim, kernel.feature_dim(3).unwrap());
        assert!(rep.max_residual() <= 1e-8, "k={k}: {rep}");
    }
}

#[test]
fn refuses_kernels_without_a_usable_feature_map() {
    let (train, test) = desk();
    let gauss = oracle_check(&train, &test.x, KernelSpec::Gaussian { sigma: 0.05 }, 2, DEFAULT_RANK_TOL);
    assert!(matches!(gauss, Err(Error::Capability(_))));
    let poly = oracle_check(&train, &test.x, KernelSpec::Polynomial { gamma: 4 }, 2, DEFAULT_RANK_TOL);
    assert!(matches!(poly, Err(Error::Capacity { .. })));
}
