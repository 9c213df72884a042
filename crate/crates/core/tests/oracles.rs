use std::f64::consts::PI;

use hartree_wkb::direct::{evolve_direct, initial_wave};
use hartree_wkb::grenier::{evolve_grenier, integrate_grenier, GrenierOptions, WkbState};
use hartree_wkb::physics::{gaussian_bump, DataRecipe, PhysicsParams, WkbData};
use hartree_wkb::spectral::riesz_potential;
use hartree_wkb::{Error, Field, Grid};
use num_complex::Complex64;
use statrs::function::erf::erf;

/// Zero-mean periodic Coulomb potential of a unit point charge on the cubic
/// torus, at the charge, minus `1/r`, in units of `1/L`.
const CUBIC_MADELUNG: f64 = -2.837_297_479_480_62;

/// Normalized Gaussian density `Q e^{-r²/w²} / (π^{3/2} w³)` with `w² = 1/2`,
/// i.e. `|a₀|²` for a unit bump of width 1.
fn coulomb_setup(points: usize, length: f64) -> (Grid, Field, f64, f64) {
    let grid = Grid::new(3, points, length).unwrap();
    let rho = gaussian_bump(&grid, 1.0, 1.0).abs_sq();
    let w2 = 0.5;
    let q = PI.powf(1.5) * w2 * w2.sqrt();
    (grid, rho, q, w2)
}

fn free_coulomb(q: f64, w: f64, r: f64) -> f64 {
    if r < 1e-12 {
        2.0 * q / (w * PI.sqrt())
    } else {
        q * erf(r / w) / r
    }
}

/// `(rel error vs free-space oracle, rel error vs torus-corrected oracle)`
/// over `|x - c| <= radius`.
fn coulomb_errors(points: usize, length: f64, radius: f64) -> (f64, f64) {
    let (grid, rho, q, w2) = coulomb_setup(points, length);
    let v = riesz_potential(&rho, 1.0).unwrap();
    let c = grid.center();
    let l = length;
    let offset = q * ((PI / 2.0 + CUBIC_MADELUNG) / l + PI * w2 / l.powi(3));
    let (mut free_err, mut torus_err) = (0.0f64, 0.0f64);
    for idx in 0..grid.len() {
        let r2 = grid.periodic_distance_sq(idx, &c);
        let r = r2.sqrt();
        if r > radius {
            continue;
        }
        let free = free_coulomb(q, w2.sqrt(), r);
        let torus = free + offset + 2.0 * PI / 3.0 * q * r2 / l.powi(3);
        let got = v.values()[idx].re;
        free_err = free_err.max((got - free).abs() / free.abs());
        torus_err = torus_err.max((got - torus).abs() / torus.abs());
    }
    (free_err, torus_err)
}

#[test]
fn coulomb_of_gaussian_matches_torus_corrected_oracle() {
    let (free, torus) = coulomb_errors(64, 16.0, 2.0);
    assert!(torus <= 1e-3, "torus-corrected error {torus:e}");
    assert!(free > 1e-2, "free-space error {free:e} should show the periodic offset");
}

#[test]
fn torus_residual_depends_only_on_radius_over_length() {
    let (free16, torus16) = coulomb_errors(64, 16.0, 3.0);
    let (free32, torus32) = coulomb_errors(128, 32.0, 6.0);
    assert!((free16 / free32 - 1.0).abs() < 0.05, "{free16} vs {free32}");
    assert!((torus16 / torus32 - 1.0).abs() < 0.05, "{torus16} vs {torus32}");
    let (_, inner) = coulomb_errors(64, 16.0, 1.5);
    let ratio = torus16 / inner;
    assert!(ratio > 16.0 && ratio < 64.0, "ratio {ratio}");
}

#[test]
fn riesz_potential_is_linear() {
    let grid = Grid::new(3, 16, 6.0).unwrap();
    let f = gaussian_bump(&grid, 1.0, 1.0);
    let g = Field::from_real_fn(&grid, |x| (x[0] * 2.0 * PI / 6.0).cos() * (x[1] * 2.0 * PI / 6.0).sin());
    let (a, b) = (Complex64::new(0.7, -0.2), Complex64::new(-1.3, 0.4));
    let lhs = riesz_potential(&f.scale(a).add(&g.scale(b)).unwrap(), 1.0).unwrap();
    let rhs = riesz_potential(&f, 1.0)
        .unwrap()
        .scale(a)
        .add(&riesz_potential(&g, 1.0).unwrap().scale(b))
        .unwrap();
    let err = lhs.sub(&rhs).unwrap().max_abs() / rhs.max_abs();
    assert!(err < 1e-13, "{err:e}");
}

fn recipe() -> DataRecipe {
    DataRecipe::GaussianBump {
        amplitude: 1.0,
        width: 1.0,
        phase_amplitude: 0.3,
        phase_width: 1.0,
    }
}

#[test]
fn direct_solver_is_gauge_covariant() {
    let grid = Grid::new(3, 64, 10.0).unwrap();
    let data = recipe().build(&grid).unwrap();
    let theta = Complex64::from_polar(1.0, 0.9);
    let rotated = data.scaled(theta);
    let p = PhysicsParams::new(0.4, 1.0, 1.0, 3).unwrap();
    let u = evolve_direct(&data, &p, 0.1, 0.02, &[0.1]).unwrap();
    let v = evolve_direct(&rotated, &p, 0.1, 0.02, &[0.1]).unwrap();
    let err = v.last().sub(&u.last().scale(theta)).unwrap().max_abs();
    assert!(err < 1e-13, "{err:e}");
}

#[test]
fn initial_wave_is_amplitude_times_phase() {
    let grid = Grid::new(3, 32, 10.0).unwrap();
    let data = recipe().build(&grid).unwrap();
    let p = PhysicsParams::new(0.2, 1.0, 1.0, 3).unwrap();
    let u0 = initial_wave(&data, &p).unwrap();
    let a = data.amplitude(0);
    for ((u, a), phi) in u0.values().iter().zip(a.values()).zip(data.phase0.values()) {
        let want = a * Complex64::from_polar(1.0, phi.re / 0.2);
        assert!((u - want).norm() < 1e-14);
    }
}

#[test]
fn homogeneous_data_stays_constant_in_phase_amplitude_form() {
    let grid = Grid::new(3, 16, 8.0).unwrap();
    let data = DataRecipe::Homogeneous { re: 0.6, im: -0.3 }.build(&grid).unwrap();
    let p = PhysicsParams::new(0.3, -1.0, 1.0, 3).unwrap();
    let s0 = WkbState::initial(&data, 0.3).unwrap();
    let run = evolve_grenier(&s0.a, &s0.v, &p, 0.2, 0.05, &[0.1, 0.2]).unwrap();
    for s in &run.snapshots {
        assert!(s.a.sub(&s0.a).unwrap().max_abs() < 1e-14);
        assert!(s.v.components().iter().all(|c| c.max_abs() < 1e-14));
    }
}

#[test]
fn focusing_large_data_trips_before_non_finite_values() {
    let grid = Grid::new(3, 64, 10.0).unwrap();
    let data = DataRecipe::GaussianBump {
        amplitude: 3.0,
        width: 1.0,
        phase_amplitude: 0.3,
        phase_width: 1.0,
    }
    .build(&grid)
    .unwrap();
    let p = PhysicsParams::new(0.1, -1.0, 1.0, 3).unwrap();
    let s0 = WkbState::initial(&data, 0.1).unwrap();
    let run = integrate_grenier(&s0.a, &s0.v, &p, 2.0, 0.01, &[2.0], &GrenierOptions::default()).unwrap();
    let trip = run.trip.clone().expect("guard should trip");
    assert!(trip.time < 2.0 && trip.last_valid_time < trip.time);
    assert!(run
        .diagnostics
        .iter()
        .all(|d| d.monitor.value.is_finite() && d.mass.is_finite()));
    let strict = evolve_grenier(&s0.a, &s0.v, &p, 2.0, 0.01, &[2.0]);
    assert!(matches!(strict, Err(Error::GuardTrip { .. })));
}

#[test]
fn under_resolved_data_is_refused() {
    let grid = Grid::new(3, 16, 10.0).unwrap();
    let data = recipe().build(&grid).unwrap();
    let p = PhysicsParams::new(0.05, 1.0, 1.0, 3).unwrap();
    let r = evolve_direct(&data, &p, 0.1, 0.01, &[0.1]);
    assert!(matches!(r, Err(Error::Resolution(_))), "{r:?}");
}

#[test]
fn wkb_data_rejects_mixed_grids() {
    let g1 = Grid::new(3, 8, 4.0).unwrap();
    let g2 = Grid::new(3, 8, 5.0).unwrap();
    let r = WkbData::new(vec![Field::zeros(&g1)], Field::zeros(&g2), None);
    assert!(r.is_err());
}
