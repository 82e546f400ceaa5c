//! Closed forms checked against independent evaluations and frozen reference values.

use lhring::bath::{memory_kernel, post_markov_validity, validity_function, BathSpec, Convention};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simpson<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn quad<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[test]
fn kernels_match_quadrature_for_random_baths() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..100 {
        let g = rng.random_range(0.0..1.0);
        let gamma: f64 = rng.random_range(0.5..200.0);
        let beta = rng.random_range(0.05..2.0) / gamma;
        for conv in [Convention::DrudeLorentz, Convention::TwoGamma] {
            let spec = BathSpec::new(vec![g], vec![gamma], beta, conv).unwrap();
            for k in 0..=10 {
                let t = k as f64 / gamma;
                for n in 0..=1u32 {
                    let closed = memory_kernel(n, t, 0, &spec).unwrap();
                    let integrand = |s: f64| s.powi(n as i32) * spec.correlation(s, 0);
                    let scale = spec.prefactor(0).norm() / gamma.powi(n as i32 + 1);
                    let numeric = quad(integrand, 0.0, t, 1e-14 * scale.max(1e-300));
                    let err = (closed - numeric).norm();
                    assert!(
                        err <= 1e-10 * numeric.norm().max(1.0),
                        "case {case} {conv:?} n={n} t={t}: {closed} vs {numeric}"
                    );
                }
            }
        }
    }
}

#[test]
fn first_order_kernel_reference_value() {
    // extended-precision quadrature of int_0^0.5 s alpha(s) ds at g=0.3, gamma=10, beta=0.025
    let two = BathSpec::new(vec![0.3], vec![10.0], 0.025, Convention::TwoGamma).unwrap();
    let want = Complex64::new(0.2302973563213169273808440902706662690817, 0.05757433908032923184521102256766656727041);
    assert!((memory_kernel(1, 0.5, 0, &two).unwrap() - want).norm() < 1e-10);
    let dl = two.clone().with_convention(Convention::DrudeLorentz);
    let want = Complex64::new(0.2302973563213169273808440902706662690817, -0.02878716954016461592260551128383328363521);
    assert!((memory_kernel(1, 0.5, 0, &dl).unwrap() - want).norm() < 1e-10);
    let want = Complex64::new(2.383828927202194878968073483784443781803, 0.5959572318005487197420183709461109454507);
    assert!((memory_kernel(0, 0.5, 0, &two).unwrap() - want).norm() < 1e-10);
}

/// `gamma_lower(n+1, x)` for integer `n`: power series below `x = n + 1`, else
/// `n! (1 - e^{-x} sum_{k<=n} x^k / k!)`.
fn lower_gamma_integer(n: usize, x: f64) -> f64 {
    let a = n as f64 + 1.0;
    if x < a {
        let (mut term, mut sum, mut k) = (1.0 / a, 1.0 / a, 1.0);
        while term > 1e-17 * sum {
            term *= x / (a + k);
            sum += term;
            k += 1.0;
        }
        return x.powf(a) * (-x).exp() * sum;
    }
    let (mut term, mut sum, mut fact) = (1.0, 1.0, 1.0);
    for k in 1..=n {
        term *= x / k as f64;
        sum += term;
        fact *= k as f64;
    }
    fact * -((-x).exp() * sum - 1.0)
}

#[test]
fn validity_function_matches_integer_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let s: f64 = rng.random_range(0.0..10.0);
        let gamma: f64 = rng.random_range(0.5..200.0);
        let t = rng.random_range(0.0..10.0);
        let n = rng.random_range(0..12usize);
        let want = (s / gamma).powi(n as i32) * lower_gamma_integer(n, t * gamma) / gamma;
        let got = validity_function(n, t, s, gamma).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-300, "n={n} t={t}: {got} vs {want}");
    }
}

#[test]
fn validity_reference_tables() {
    let markov = [0.01, 0.0005, 0.00005, 0.0000075, 0.0000015, 0.000000375];
    let slow = [
        0.993262053000914532903364,
        4.797861590027435987100919,
        43.76739902584594293561166,
        551.2305635269787206492366,
        8392.600724021813828361275,
        144014.7544376013310934455,
    ];
    let early = [
        0.2591817793182821257083918,
        0.1846815655688338582282187,
        0.1799746591544734884970858,
        0.1993583925163047793068973,
        0.2367756081248994027062555,
        0.2938018398206910006974412,
    ];
    for (gamma, t, want) in [(100.0, 5.0, &markov), (1.0, 5.0, &slow), (1.0, 0.3, &early)] {
        for (n, w) in want.iter().enumerate() {
            let f = validity_function(n, t, 5.0, gamma).unwrap();
            assert!((f - w).abs() <= 1e-10 * w, "gamma={gamma} t={t} n={n}: {f} vs {w}");
        }
    }
    assert!(post_markov_validity(5.0, 100.0, 5.0, 5).unwrap().verdict);
    assert!(!post_markov_validity(5.0, 1.0, 5.0, 5).unwrap().verdict);
}

#[test]
fn validity_order_limit_at_long_times() {
    // (0.1)^n n! is flat from 9 to 10 and rises after
    assert!(post_markov_validity(1.0, 10.0, 1e3, 9).unwrap().verdict);
    assert!(!post_markov_validity(1.0, 10.0, 1e3, 11).unwrap().verdict);
}
