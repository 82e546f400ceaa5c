use lhring::bath::{alpha_t, spectral_density, validity_function, BathSpec, Convention};
use lhring::model::{coupling_spectrum, from_momentum, hamiltonian_matrix, to_momentum, MomentumGrid, RingModel};
use lhring::noise::{discretize_bath, sample_path, FftNoise, NoiseGrid};
use lhring::observables::{momentum_populations, momentum_populations_density};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

fn amplitudes(max: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..=max)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn random_model() -> impl Strategy<Value = RingModel> {
    (1usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(-3.0..3.0f64, m),
            prop::collection::vec(-2.0..2.0f64, m * m),
            prop::collection::vec(0.0..1.0f64, m),
            -3.0..3.0f64,
            0.0..2.0f64,
        )
            .prop_map(move |(omega, raw, gamma, omega_rc, kappa)| {
                let j = Array2::from_shape_fn((m, m), |(p, q)| raw[p.min(q) * m + p.max(q)]);
                RingModel::new(0.2, omega, j, gamma, omega_rc, kappa, true).unwrap()
            })
    })
}

#[test]
fn kronecker_delta_on_every_small_ring() {
    for m in 1..=64 {
        let g = MomentumGrid::new(m, 0.2);
        for a in 0..m {
            for b in 0..m {
                let s: Complex64 = (0..m).map(|j| g.phase(a, j).conj() * g.phase(b, j)).sum::<Complex64>() / m as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s - want).norm() < 1e-12, "m={m} ({a},{b}) {s}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parseval_and_round_trip(a in amplitudes(64)) {
        let g = MomentumGrid::new(a.len(), 0.2);
        let spec = to_momentum(&a, &g).unwrap();
        let norm: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        prop_assert!((spec.populations.iter().sum::<f64>() - norm).abs() < 1e-12);
        let back = from_momentum(&spec.amplitudes, &g).unwrap();
        for (x, y) in a.iter().zip(&back) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_couplings_live_at_zero_momentum(m in 1usize..64, gamma in 0.0..2.0f64) {
        let g = MomentumGrid::new(m, 0.2);
        let s = coupling_spectrum(&vec![gamma; m], &g).unwrap();
        for (k, x) in s.iter().enumerate() {
            if k == g.q0_index() {
                prop_assert!((x - gamma).norm() < 1e-12);
            } else {
                prop_assert!(x.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_apart_from_the_sink(model in random_model()) {
        let mut h = hamiltonian_matrix(&model);
        let rc = model.rc_index().unwrap();
        h[[rc, rc]] += Complex64::new(0.0, model.kappa);
        let n = model.dim();
        for p in 0..n {
            for q in 0..n {
                prop_assert_eq!(h[[p, q]], h[[q, p]].conj());
            }
        }
    }

    #[test]
    fn spectral_density_is_odd(w in -500.0..500.0f64, g in 0.0..1.0f64, gamma in 0.1..200.0f64) {
        let spec = BathSpec::new(vec![g], vec![gamma], 0.25 / gamma, Convention::TwoGamma).unwrap();
        prop_assert_eq!(spectral_density(-w, 0, &spec), -spectral_density(w, 0, &spec));
        prop_assert!(spectral_density(w.abs(), 0, &spec) >= 0.0);
    }

    #[test]
    fn correlation_modulus_decays(g in 0.0..1.0f64, gamma in 0.1..200.0f64, bg in 0.01..5.0f64) {
        let spec = BathSpec::new(vec![g], vec![gamma], bg / gamma, Convention::TwoGamma).unwrap();
        prop_assert!(alpha_t(0.0, 0, &spec).unwrap().re >= 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let a = alpha_t(k as f64 * 0.1 / gamma, 0, &spec).unwrap().norm();
            prop_assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn validity_functions_grow_in_time(n in 0usize..20, s in 0.0..20.0f64, gamma in 0.1..200.0f64) {
        let mut prev = 0.0;
        for k in 0..=200 {
            let f = validity_function(n, k as f64 * 0.05, s, gamma).unwrap();
            prop_assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn density_momentum_matches_trajectory_bilinears(
        ens in (2usize..10).prop_flat_map(|m| prop::collection::vec(prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), m), 1..20))
    ) {
        let m = ens[0].len();
        let g = MomentumGrid::new(m, 0.2);
        let traj: Vec<Vec<Complex64>> =
            ens.iter().map(|v| v.iter().map(|&(re, im)| Complex64::new(re, im)).collect()).collect();
        let nm = traj.len() as f64;
        let rho = Array2::from_shape_fn((m, m), |(p, q)| traj.iter().map(|a| a[p] * a[q].conj()).sum::<Complex64>() / nm);
        let from_rho = momentum_populations_density(&rho, &g);
        let mut mean = vec![0.0; m];
        for a in &traj {
            for (x, p) in mean.iter_mut().zip(momentum_populations(a, &g)) {
                *x += p / nm;
            }
        }
        let pops: f64 = (0..m).map(|j| rho[[j, j]].re).sum();
        for (x, y) in from_rho.iter().zip(&mean) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(*x >= -1e-9);
        }
        prop_assert!((from_rho.iter().sum::<f64>() - pops).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mode_weights_are_nonnegative_and_paths_reproducible(
        g in 0.0..1.0f64, gamma in 1.0..100.0f64, bg in 0.05..2.0f64, seed in 0u64..1000, traj in 0u64..1000
    ) {
        let spec = BathSpec::new(vec![g; 2], vec![gamma; 2], bg / gamma, Convention::DrudeLorentz).unwrap();
        let modes = discretize_bath(&spec, 200, 20.0 * gamma).unwrap();
        prop_assert!(modes.w_plus.iter().chain(&modes.w_minus).flatten().all(|&w| w >= 0.0));
        let grid = NoiseGrid { h: 1e-3, len: 200 };
        let a = sample_path(&modes, grid, seed, traj).unwrap();
        let b = sample_path(&modes, grid, seed, traj).unwrap();
        prop_assert_eq!(&a.z, &b.z);
        let f = FftNoise::new(&spec, grid, 200, 20.0 * gamma).unwrap();
        prop_assert_eq!(f.sample(seed, traj).z, f.sample(seed, traj).z);
        prop_assert!(a.z.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
}
