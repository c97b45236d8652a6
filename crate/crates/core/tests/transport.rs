use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use speckle_core::medium::{Dimension, ScatteringMedium};
use speckle_core::scene::{Disk, Domain, Face, RadialProfile, Region, Scene, ShiftField, ShiftRegime};
use speckle_core::transport::{run_transport, run_transport_shifts, LaunchLaw, McParams};

fn square(illuminated: Vec<Face>, measured: Vec<Face>, aperture: f64) -> Scene {
    Scene::new(Domain::unit_square_centered(), illuminated, measured, vec![], ShiftField::none(), aperture).unwrap()
}

fn all_faces_scene() -> Scene {
    square(vec![Face::Left], vec![Face::Right, Face::Bottom, Face::Top], FRAC_PI_2)
}

#[test]
fn every_packet_leaves_without_absorbers() {
    // The illuminated face cannot also be measured, so exits through it are
    // "other" exits; together they must account for every launch.
    let medium = ScatteringMedium::synthetic(Dimension::D2, 20.0, 0.5).unwrap();
    let t = run_transport(&all_faces_scene(), &medium, &McParams::new(20_000, 5)).unwrap();
    assert_eq!(t.total_exits(), t.n_launched);
    assert_eq!(t.absorbed + t.discarded, 0);
    assert_eq!(t.sum_w12, Complex64::new(t.sum_w11, 0.0));
}

#[test]
fn tallies_do_not_depend_on_worker_count() {
    let medium = ScatteringMedium::synthetic(Dimension::D2, 30.0, 0.0).unwrap();
    let shift = ShiftField::new(
        ShiftRegime::Moderate,
        vec![Region::annulus([0.0; 3], 0.2, 0.5)],
        3.0,
        RadialProfile::Bump,
    )
    .unwrap();
    let scene = square(vec![Face::Left], vec![Face::Right], FRAC_PI_2).with_shift(shift).unwrap();
    let one = run_transport(&scene, &medium, &McParams::new(10_000, 77)).unwrap();
    let three = run_transport(&scene, &medium, &McParams::new(10_000, 77).workers(3)).unwrap();
    assert_eq!(one.sum_w12, three.sum_w12);
    assert_eq!(one.sum_w11, three.sum_w11);
    assert_eq!(one.sum_w12_re_sq, three.sum_w12_re_sq);
    let other_seed = run_transport(&scene, &medium, &McParams::new(10_000, 78)).unwrap();
    assert_ne!(one.sum_w12, other_seed.sum_w12);
}

#[test]
fn multi_shift_pass_matches_separate_runs() {
    let medium = ScatteringMedium::synthetic(Dimension::D2, 25.0, 0.2).unwrap();
    let base = square(vec![Face::Left], vec![Face::Right], FRAC_PI_2);
    let shifts = vec![
        ShiftField::new(ShiftRegime::Large, vec![Region::annulus([0.0; 3], 0.1, 0.3)], 1.0, RadialProfile::Bump)
            .unwrap(),
        ShiftField::new(ShiftRegime::Moderate, vec![Region::annulus([0.0; 3], 0.0, 0.4)], 2.0, RadialProfile::Bump)
            .unwrap(),
        ShiftField::none(),
    ];
    let params = McParams::new(5_000, 12);
    let joint = run_transport_shifts(&base, &shifts, &medium, &params).unwrap();
    for (s, j) in shifts.iter().zip(&joint) {
        let single = run_transport(&base.with_shift(s.clone()).unwrap(), &medium, &params).unwrap();
        assert_eq!(single.sum_w12, j.sum_w12);
        assert_eq!(single.sum_w11, j.sum_w11);
    }
}

#[test]
fn ballistic_transmission_follows_beer_lambert() {
    // Narrow aperture and a collimated beam: to leading order only packets that
    // never scatter are collected. With X_s covering the path interior, the
    // cross weight survives only along those ballistic paths.
    let sigma = 1.5;
    let medium = ScatteringMedium::synthetic(Dimension::D2, sigma, 0.0).unwrap();
    let shift =
        ShiftField::new(ShiftRegime::Large, vec![Region::annulus([0.0; 3], 0.0, 0.98)], 1.0, RadialProfile::Bump)
            .unwrap();
    let scene = square(vec![Face::Left], vec![Face::Right], 0.05).with_shift(shift).unwrap();
    let n = 100_000u64;
    let t = run_transport(&scene, &medium, &McParams::new(n, 3).launch(LaunchLaw::CollimatedNormal)).unwrap();
    let p = (-2.0 * sigma).exp();
    let expected = p * n as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((t.sum_w12.re - expected).abs() < 3.0 * sd, "{} vs {expected} ± {sd}", t.sum_w12.re);
    assert_eq!(t.sum_w12.im, 0.0);
    assert!(t.sum_w11 >= t.sum_w12.re);
}

#[test]
fn absorbers_capture_packets() {
    let medium = ScatteringMedium::synthetic(Dimension::D2, 20.0, 0.0).unwrap();
    let scene = Scene::new(
        Domain::unit_square_centered(),
        vec![Face::Left],
        vec![Face::Right, Face::Top, Face::Bottom],
        vec![Disk::new([0.0, 0.0, 0.0], 0.3)],
        ShiftField::none(),
        FRAC_PI_2,
    )
    .unwrap();
    let t = run_transport(&scene, &medium, &McParams::new(20_000, 8)).unwrap();
    assert!(t.absorbed > 0);
    assert_eq!(t.total_exits() + t.absorbed, t.n_launched);
}

#[test]
fn three_dimensional_cube_conserves_packets() {
    let domain = Domain::new(Dimension::D3, [-1.0; 3], [1.0; 3]).unwrap();
    let scene = Scene::new(
        domain,
        vec![Face::Left],
        vec![Face::Right, Face::Top, Face::Bottom, Face::Back, Face::Front],
        vec![Disk::new([0.0; 3], 0.3)],
        ShiftField::none(),
        FRAC_PI_2,
    )
    .unwrap();
    let medium = ScatteringMedium::synthetic(Dimension::D3, 10.0, 0.6).unwrap();
    let t = run_transport(&scene, &medium, &McParams::new(5_000, 1)).unwrap();
    assert_eq!(t.total_exits() + t.absorbed, t.n_launched);
    assert_eq!(t.discarded, 0);
}

#[test]
fn lambertian_launch_mean_cosine() {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use speckle_core::transport::launch_packet;
    let scene = square(vec![Face::Left], vec![Face::Right], FRAC_PI_2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200_000;
    let mean: f64 = (0..n).map(|_| launch_packet(&scene, LaunchLaw::Lambertian, &mut rng).direction[0]).sum::<f64>()
        / n as f64;
    // E[cos θ] = π/4 under the cosine law on the half circle.
    assert!((mean - std::f64::consts::FRAC_PI_4).abs() < 3e-3, "{mean}");
}
