use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use speckle_core::correlation::{
    c12_from_tally, compare_curves, radii_range, riemann_lebesgue_slope, run_sweep, wigner_transform,
    CorrelationCurve, Engine, SweepEngine, Wavefront,
};
use speckle_core::medium::{Dimension, ScatteringMedium, TransportCoefficients};
use speckle_core::scene::{Domain, Face, Scene, ShiftField};
use speckle_core::transport::McParams;

fn signal(n: usize, phase: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let x = j as f64 / n as f64;
            Complex64::new((2.0 * PI * x).cos() + 0.3, (4.0 * PI * x + phase).sin())
        })
        .collect()
}

/// Direct double sum over the half-offset grid, no FFT.
fn wigner_direct(u: &[Complex64], v: &[Complex64], dx: f64, eps: f64, x: usize, l: usize) -> Complex64 {
    let n = u.len();
    let dy = 2.0 * dx / eps;
    (0..n)
        .map(|m| {
            let kl = 2.0 * PI * l as f64 / (n as f64 * dy);
            let a = u[(x + n - m) % n] * v[(x + m) % n].conj();
            a * Complex64::from_polar(dy / (2.0 * PI), kl * m as f64 * dy)
        })
        .sum()
}

#[test]
fn wigner_matches_direct_sum_and_marginal() {
    let n = 128;
    let (dx, eps) = (1.0 / n as f64, 0.5);
    let (u, v) = (signal(n, 0.0), signal(n, 0.7));
    let w = wigner_transform(&u, &v, &[n], dx, eps).unwrap();
    for (x, l) in [(0, 0), (5, 3), (64, 100), (127, 127)] {
        let d = wigner_direct(&u, &v, dx, eps, x, l);
        assert!((w.values[x * n + l] - d).norm() < 1e-10, "x={x} l={l}");
    }
    for (x, m) in w.marginal().iter().enumerate() {
        assert!((m - u[x] * v[x].conj()).norm() < 1e-10);
    }
}

#[test]
fn wigner_2d_marginal() {
    let n = 16;
    let u: Vec<Complex64> = (0..n * n).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
    let w = wigner_transform(&u, &u, &[n, n], 0.1, 1.0).unwrap();
    for (x, m) in w.marginal().iter().enumerate() {
        assert!((m - Complex64::new(u[x].norm_sqr(), 0.0)).norm() < 1e-10);
    }
    assert!(wigner_transform(&u[..n * 8], &u[..n * 8], &[n, 8], 0.1, 1.0).is_err());
}

#[test]
fn riemann_lebesgue_decay_rates() {
    let f = |mu: f64| (2.0 * mu).exp();
    let s2 = riemann_lebesgue_slope(Dimension::D2, f, 10.0, 1000.0, 41);
    let s3 = riemann_lebesgue_slope(Dimension::D3, f, 10.0, 1000.0, 41);
    assert!((s2 + 0.5).abs() <= 0.05, "{s2}");
    assert!((s3 + 1.0).abs() <= 0.05, "{s3}");
}

fn square() -> Scene {
    Scene::new(Domain::unit_square_centered(), vec![Face::Left], vec![Face::Right], vec![], ShiftField::none(), FRAC_PI_2)
        .unwrap()
}

#[test]
fn diffusion_sweep_decreases_from_the_unshifted_value() {
    let coeffs = TransportCoefficients::synthetic(Dimension::D2, 100.0, 0.0).unwrap();
    let radii = radii_range(0.05, 0.45, 0.1).unwrap();
    let wave = Wavefront { center: [0.0; 3], thickness: 0.1 };
    let c = run_sweep(&square(), &radii, wave, &SweepEngine::Diffusion { coefficients: &coeffs, grid_spacing: 0.04, source_level: 1.0 })
        .unwrap();
    assert_eq!(c.engine, Engine::Diffusion);
    assert!(c.c12.iter().all(|&v| (0.0..1.0).contains(&v)));
    assert!(c.c12.windows(2).all(|w| w[1] < w[0]), "{:?}", c.c12);
}

#[test]
fn mc_sweep_reports_errors_and_agrees_loosely() {
    let medium = ScatteringMedium::synthetic(Dimension::D2, 20.0, 0.0).unwrap();
    let radii = vec![0.1, 0.3];
    let wave = Wavefront { center: [0.0; 3], thickness: 0.1 };
    let mc = run_sweep(&square(), &radii, wave, &SweepEngine::Mc { medium: &medium, params: McParams::new(20_000, 4) }).unwrap();
    let err = mc.stat_error.as_ref().unwrap();
    assert!(err.iter().all(|&e| e > 0.0));
    assert_eq!(mc.seed, Some(4));
    let fake = CorrelationCurve { radii: radii.clone(), c12: mc.c12.clone(), engine: Engine::Diffusion, stat_error: None, seed: None };
    assert!(compare_curves(&mc, &fake, 0.0).unwrap().iter().all(|r| r.agrees));
    let shifted = CorrelationCurve { radii: vec![0.1, 0.4], ..fake };
    assert!(compare_curves(&mc, &shifted, 0.1).is_err());
}

#[test]
fn unshifted_mc_tally_is_fully_correlated() {
    let medium = ScatteringMedium::synthetic(Dimension::D2, 10.0, 0.3).unwrap();
    let t = speckle_core::transport::run_transport(&square(), &medium, &McParams::new(5_000, 1)).unwrap();
    let e = c12_from_tally(&t).unwrap();
    assert_eq!(e.value, 1.0);
    assert!(e.std_error < 1e-12);
}
