//! Randomized invariants of the numerical building blocks.

use nalgebra::DVector;
use okdmd::linalg::{eig, pseudo_inverse, svd, sym_eig, symmetrize, to_complex, Mat, DEFAULT_RANK_TOL};
use okdmd::preimage::PreimageProblem;
use okdmd::synthgen::{divergence, quadratic_step, laplacian, sample_initial, GridSpec};
use okdmd::KernelSpec;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v) * scale)
}

fn sized_matrix(max: usize) -> impl Strategy<Value = Mat> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| matrix(r, c, 1.0))
}

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (1u32..=3).prop_map(|gamma| KernelSpec::Polynomial { gamma }),
        (0.2..2.0f64).prop_map(|sigma| KernelSpec::Gaussian { sigma }),
        Just(KernelSpec::Logarithmic),
        Just(KernelSpec::Linear),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(a in sized_matrix(64)) {
        let s = svd(&a).unwrap();
        let scale = a.norm().max(1e-300);
        prop_assert!((s.reconstruct() - &a).norm() <= 1e-12 * scale);
        let k = s.sigma.len();
        prop_assert!((s.u.transpose() * &s.u - Mat::identity(k, k)).norm() <= 1e-12 * k as f64);
        prop_assert!((s.v.transpose() * &s.v - Mat::identity(k, k)).norm() <= 1e-12 * k as f64);
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.sigma.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn pseudo_inverse_satisfies_moore_penrose(
        (l, r) in (1usize..8, 1usize..8, 1usize..5).prop_flat_map(|(m, n, k)| (matrix(m, k, 1.0), matrix(k, n, 1.0)))
    ) {
        let a = &l * &r;
        prop_assume!(a.norm() > 1e-6);
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        let ap = &a * &p;
        let pa = &p * &a;
        let tol = 1e-10;
        prop_assert!((&ap * &a - &a).norm() <= tol * a.norm());
        prop_assert!((&pa * &p - &p).norm() <= tol * p.norm().max(1.0));
        prop_assert!((&ap - ap.transpose()).norm() <= tol * ap.norm().max(1.0));
        prop_assert!((&pa - pa.transpose()).norm() <= tol * pa.norm().max(1.0));
    }

    #[test]
    fn eigenpairs_have_small_residuals_and_sum_to_the_trace(a in (1usize..12).prop_flat_map(|n| matrix(n, n, 1.0))) {
        let e = eig(&a).unwrap();
        let ca = to_complex(&a);
        let scale = a.norm().max(1e-300);
        for (i, lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(i);
            prop_assert!((&ca * v - v * *lam).norm() <= 1e-10 * scale);
            prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
        }
        let tr: f64 = e.values.iter().map(|l| l.re).sum();
        prop_assert!((tr - a.trace()).abs() <= 1e-10 * scale);
        let im: f64 = e.values.iter().map(|l| l.im).sum();
        prop_assert!(im.abs() <= 1e-10 * scale);
    }

    #[test]
    fn gram_matrices_are_symmetric_psd(kernel in kernels(), x in (1usize..6, 1usize..10).prop_flat_map(|(p, m)| matrix(p, m, 0.5))) {
        let g = kernel.gram(&x, &x).unwrap();
        prop_assert!((&g - g.transpose()).norm() <= 1e-14 * g.norm().max(1.0));
        let dec = sym_eig(&symmetrize(&g)).unwrap();
        let top = dec.values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(dec.values.iter().all(|v| *v >= -1e-12 * top.max(1e-300)));
    }

    #[test]
    fn kernels_satisfy_cauchy_schwarz(kernel in kernels(), y in prop::collection::vec(-0.5..0.5f64, 4), z in prop::collection::vec(-0.5..0.5f64, 4)) {
        let hyz = kernel.eval(&y, &z).unwrap();
        let hyy = kernel.eval(&y, &y).unwrap();
        let hzz = kernel.eval(&z, &z).unwrap();
        prop_assert!(hyz * hyz <= hyy * hzz * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn explicit_features_reproduce_the_kernel(
        gamma in 1u32..=3,
        y in prop::collection::vec(-2.0..2.0f64, 1..4),
        seed in any::<u64>()
    ) {
        let kernel = KernelSpec::Polynomial { gamma };
        let z: Vec<f64> = y.iter().enumerate().map(|(i, v)| ((seed >> (i * 8)) % 97) as f64 / 48.5 - 1.0 + 0.1 * v).collect();
        let h = kernel.eval(&y, &z).unwrap();
        let py = kernel.feature_map(&y).unwrap();
        let pz = kernel.feature_map(&z).unwrap();
        prop_assert_eq!(py.len(), kernel.feature_dim(y.len()).unwrap());
        let dot: f64 = py.iter().zip(&pz).map(|(a, b)| a * b).sum();
        prop_assert!((dot - h).abs() <= 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn preimage_gradient_matches_finite_differences(
        kernel in kernels(),
        y in matrix(3, 4, 0.3),
        g in prop::collection::vec(-1.0..1.0f64, 4),
        z in prop::collection::vec(-0.3..0.3f64, 3)
    ) {
        let prob = PreimageProblem::new(DVector::from_vec(g), &y, kernel).unwrap();
        let (_, grad) = prob.objective_and_gradient(&z).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let (mut up, mut dn) = (z.clone(), z.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (prob.objective_and_gradient(&up).unwrap().0 - prob.objective_and_gradient(&dn).unwrap().0) / (2.0 * h);
            prop_assert!((fd - grad[i]).abs() <= 1e-6 * grad.norm().max(1.0), "component {} fd {} analytic {}", i, fd, grad[i]);
        }
    }

    #[test]
    fn initial_fields_are_divergence_free(n in 2usize..20, seed in any::<u64>(), modes in prop::option::of(1usize..40)) {
        let grid = GridSpec::new(n).unwrap();
        let x = sample_initial(grid, 1.0 / 3.0, modes, seed);
        let worst = divergence(grid, &x).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(worst <= 1e-10 * x.norm().max(1e-300));
    }

    #[test]
    fn quadratic_step_matches_a_scalar_loop(n in 2usize..7, v in prop::collection::vec(-0.5..0.5f64, 2 * 7 * 7), alpha in 0.0..1.0f64) {
        let grid = GridSpec::new(n).unwrap();
        let p = grid.p();
        let x = DVector::from_column_slice(&v[..p]);
        let l = laplacian(grid);
        let got = quadratic_step(&x, alpha, &l);
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let at = |ii: usize, jj: usize| x[grid.index(c, ii % n, jj % n)];
                    let lap = at(i + 1, j) + at(i + n - 1, j) + at(i, j + 1) + at(i, j + n - 1) - 4.0 * at(i, j);
                    let xi = at(i, j);
                    let want = (xi + 1.0) * (xi + 1.0) + alpha * lap - 1.0;
                    prop_assert!((got[grid.index(c, i, j)] - want).abs() <= 1e-14);
                }
            }
        }
    }
}
