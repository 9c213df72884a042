//! Quick built-in checks run by `hartree-wkb selftest`.

use num_complex::Complex64;

use super::config::parse_config;
use crate::direct::evolve_direct;
use crate::field::Field;
use crate::grenier::{evolve_grenier, WkbState};
use crate::grid::Grid;
use crate::io::{decode_snapshots, encode_snapshots, format_float};
use crate::physics::{check_gamma, gaussian_bump, DataRecipe, PhysicsParams, WkbData};
use crate::spectral::{forward, inverse, RieszKernel};

/// Configuration used by `selftest` when none is given.
pub const DEFAULT_CONFIG: &str = "format_version = 1
subcommand = \"selftest\"

[physics]
dim = 3
gamma = 1.0
lambda = 1.0
epsilon = 0.5

[grid]
points = 16
box_length = 8.0

[data]
recipe = \"gaussian-bump\"
amplitude = 1.0
width = 1.0
phase_amplitude = 0.3
phase_width = 1.0
";

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value.is_finite() && value <= limit,
        value,
    }
}

fn grid() -> Grid {
    Grid::new(3, 16, 8.0).expect("valid grid")
}

fn fft_round_trip() -> f64 {
    let f = gaussian_bump(&grid(), 1.0, 1.0).map(|z| z * Complex64::new(1.0, 0.5));
    let back = inverse(&forward(&f));
    f.sub(&back).expect("same grid").max_abs()
}

/// A lattice plane wave is an eigenfunction of the Riesz multiplier.
fn plane_wave_multiplier() -> f64 {
    let g = grid();
    let k = 2.0 * g.dk();
    let f = Field::from_fn(&g, |x| Complex64::from_polar(1.0, k * x[0] + 0.5 * k * x[2]));
    let kernel = RieszKernel::new(&g, 1.0).expect("valid exponent");
    let image = kernel.apply(&f).expect("same grid");
    let ratio = image.values()[0] / f.values()[0];
    image
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a / b - ratio).norm() / ratio.norm())
        .fold(0.0, f64::max)
}

fn gamma_bound() -> f64 {
    let inside = check_gamma(3, 1.0).is_ok() && check_gamma(5, 3.0).is_ok();
    let outside = check_gamma(3, 2.0).is_err() && check_gamma(3, 0.0).is_err();
    if inside && outside {
        0.0
    } else {
        1.0
    }
}

fn config_round_trip() -> f64 {
    let Ok(cfg) = parse_config(DEFAULT_CONFIG) else {
        return 1.0;
    };
    match parse_config(&cfg.to_canonical()) {
        Ok(again) if again == cfg => 0.0,
        _ => 1.0,
    }
}

fn csv_fidelity() -> f64 {
    let samples = [
        0.1,
        1.0 / 3.0,
        -2.5e-300,
        f64::MIN_POSITIVE,
        f64::MAX,
        std::f64::consts::PI,
        5e-324,
    ];
    let bad = samples
        .iter()
        .filter(|&&x| format_float(x).parse::<f64>().ok() != Some(x))
        .count();
    bad as f64
}

fn snapshot_round_trip() -> f64 {
    let f = gaussian_bump(&grid(), 0.7, 1.3).map(|z| z * Complex64::new(0.3, -1.0));
    match encode_snapshots(std::slice::from_ref(&f)).and_then(|b| decode_snapshots(&b)) {
        Ok(back) if back == vec![f] => 0.0,
        _ => 1.0,
    }
}

fn direct_mass() -> f64 {
    let recipe = DataRecipe::GaussianBump {
        amplitude: 1.0,
        width: 1.0,
        phase_amplitude: 0.3,
        phase_width: 1.0,
    };
    let run = (|| {
        let data = recipe.build(&Grid::new(3, 32, 8.0)?)?;
        let p = PhysicsParams::new(0.5, 1.0, 1.0, 3)?;
        evolve_direct(&data, &p, 0.05, 0.01, &[0.0, 0.05])
    })();
    run.map_or(f64::INFINITY, |r| r.mass_drift())
}

/// Constant amplitude with zero velocity is a fixed point.
fn homogeneous_fixed_point() -> f64 {
    let run = (|| {
        let g = grid();
        let data = WkbData::new(
            vec![Field::constant(&g, Complex64::new(0.8, 0.2))],
            Field::zeros(&g),
            None,
        )?;
        let p = PhysicsParams::new(0.5, 1.0, 1.0, 3)?;
        let s0 = WkbState::initial(&data, 0.5)?;
        let run = evolve_grenier(&s0.a, &s0.v, &p, 0.1, 0.05, &[0.1])?;
        Ok::<f64, crate::error::Error>(run.last().a.sub(&s0.a)?.max_abs())
    })();
    run.unwrap_or(f64::INFINITY)
}

pub fn run_checks() -> Vec<Check> {
    vec![
        check("fft_round_trip", fft_round_trip(), 1e-13),
        check("plane_wave_multiplier", plane_wave_multiplier(), 1e-12),
        check("gamma_bound", gamma_bound(), 0.0),
        check("config_round_trip", config_round_trip(), 0.0),
        check("csv_fidelity", csv_fidelity(), 0.0),
        check("snapshot_round_trip", snapshot_round_trip(), 0.0),
        check("direct_mass", direct_mass(), 1e-12),
        check("homogeneous_fixed_point", homogeneous_fixed_point(), 1e-12),
    ]
}
