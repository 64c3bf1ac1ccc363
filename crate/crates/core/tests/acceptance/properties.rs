use proptest::prelude::*;

use qdiffusion::channel::{build_kraus_set, default_kraus_order, kraus_evolve, ChannelTime};
use qdiffusion::fock::{
    annihilation_matrix, creation_matrix, density_from_vector, max_abs_diff, ordered_gaussian_kernel, state_vector,
    trace_distance, FockCutoff, OrderedKernelParams, StateSpec,
};
use qdiffusion::special::hermite2;
use qdiffusion::{CMatrix, CVector, Complex64};

fn complex_in(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_filter_map("inside disk", move |(a, b)| {
        let z = Complex64::new(a, b);
        (z.norm() <= r).then_some(z)
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Σ_{j,k} μ^j ν^k/(j! k!) A†^j (1+λ)^N A^k` by explicit matrix powers.
fn kernel_double_sum(lam: Complex64, mu: Complex64, nu: Complex64, dim: usize) -> CMatrix {
    let cut = FockCutoff::new(dim).unwrap();
    let a = annihilation_matrix(cut);
    let ad = creation_matrix(cut);
    let ratio = Complex64::new(1.0, 0.0) + lam;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(dim, (0..dim).map(|n| ratio.powi(n as i32))));
    let mut ad_pow = CMatrix::identity(dim, dim);
    let mut out = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut a_pow = CMatrix::identity(dim, dim);
        for k in 0..dim {
            let coef = mu.powi(j as i32) * nu.powi(k as i32) / (factorial(j) * factorial(k));
            out += (&ad_pow * &d * &a_pow) * coef;
            a_pow = &a_pow * &a;
        }
        ad_pow = &ad_pow * &ad;
    }
    out
}

fn random_state(amps: &[(f64, f64)]) -> CVector {
    let v = CVector::from_iterator(amps.len(), amps.iter().map(|&(a, b)| Complex64::new(a, b)));
    let n = v.norm();
    v.unscale(n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_factorization_matches_double_sum(
        lam in complex_in(0.9),
        mu in complex_in(1.0),
        nu in complex_in(1.0),
        dim in 2usize..=16,
    ) {
        let p = OrderedKernelParams::linear(lam, mu, nu);
        let fast = ordered_gaussian_kernel(&p, FockCutoff::new(dim).unwrap());
        let slow = kernel_double_sum(lam, mu, nu, dim);
        prop_assert!(max_abs_diff(&fast, &slow) <= 1e-10);
    }

    #[test]
    fn hermite2_symmetry(m in 0usize..=10, n in 0usize..=10, xn in -8i32..=8, yn in -8i32..=8) {
        let x = Complex64::new(xn as f64 / 4.0, 0.0);
        let y = Complex64::new(0.5, yn as f64 / 8.0);
        prop_assert_eq!(hermite2(m, n, x, y).unwrap(), hermite2(n, m, y, x).unwrap());
    }

    #[test]
    fn kraus_sum_preserves_trace_of_low_lying_states(
        amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        tau in 0.05f64..1.0,
    ) {
        prop_assume!(amps.iter().any(|&(a, b)| a.abs() + b.abs() > 1e-3));
        let dim = 48;
        let mut v = CVector::zeros(dim);
        v.rows_mut(0, 6).copy_from(&random_state(&amps));
        let rho0 = density_from_vector(&v, "random").unwrap();
        let t = ChannelTime::new(tau).unwrap();
        let ks = build_kraus_set(t, default_kraus_order(t, dim), FockCutoff::new(dim).unwrap()).unwrap();
        let out = kraus_evolve(&rho0, &ks).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() <= 1e-9);
        prop_assert!((out.trace().im).abs() <= 1e-15);
    }

    #[test]
    fn channel_is_a_semigroup(z in complex_in(1.2), t1 in 0.05f64..0.5, t2 in 0.05f64..0.5) {
        let dim = 48;
        let cut = FockCutoff::new(dim).unwrap();
        let rho0 = density_from_vector(&state_vector(&StateSpec::Coherent { z }, cut).unwrap(), "c").unwrap();
        let step = |rho: &qdiffusion::fock::DensityMatrix, tau: f64| {
            let t = ChannelTime::new(tau).unwrap();
            kraus_evolve(rho, &build_kraus_set(t, default_kraus_order(t, dim), cut).unwrap()).unwrap()
        };
        let d = trace_distance(&step(&step(&rho0, t1), t2), &step(&rho0, t1 + t2)).unwrap();
        prop_assert!(d <= 1e-6);
    }
}
