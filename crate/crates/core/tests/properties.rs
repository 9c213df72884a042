use hartree_wkb::cli::config::parse_config;
use hartree_wkb::direct::evolve_direct;
use hartree_wkb::grenier::{evolve_grenier, WkbState};
use hartree_wkb::io::{decode_snapshots, encode_snapshots, format_float, CsvTable};
use hartree_wkb::norms::{norm, sobolev_norm, NormKind};
use hartree_wkb::physics::{DataRecipe, PhysicsParams};
use hartree_wkb::spectral::{forward, inverse};
use hartree_wkb::{Error, Field, Grid};
use num_complex::Complex64;
use proptest::prelude::*;

fn field_strategy(dim: usize, points: usize) -> impl Strategy<Value = Field> {
    let n = points.pow(dim as u32);
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), n).prop_map(move |v| {
        let grid = Grid::new(dim, points, 3.0).unwrap();
        Field::from_values(&grid, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
    })
}

fn config_text(eps: f64, gamma: f64, lambda: f64, points: usize, length: f64, sweep: &[f64]) -> String {
    let mut text = format!(
        "format_version = 1\n\n[physics]\ndim = 3\ngamma = {gamma:?}\nlambda = {lambda:?}\nepsilon = {eps:?}\n\n\
         [grid]\npoints = {points}\nbox_length = {length:?}\n\n[data]\nrecipe = \"homogeneous\"\nre = 1.5\nim = -0.25\n"
    );
    if !sweep.is_empty() {
        let list: Vec<String> = sweep.iter().map(|x| format!("{x:?}")).collect();
        text.push_str(&format!("\n[sweep]\nepsilons = {}\n", list.join(", ")));
    }
    text
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_rows_render_one_line_each(rows in prop::collection::vec(any::<f64>(), 0..20)) {
        let mut t = CsvTable::new(&["x"]);
        for &r in &rows {
            t.push(vec![r.into()]).unwrap();
        }
        let text = t.render();
        prop_assert_eq!(text.lines().count(), rows.len() + 1);
        prop_assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn snapshots_round_trip(a in field_strategy(2, 8), b in field_strategy(2, 8)) {
        let bytes = encode_snapshots(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(bytes.len(), 64 + 2 * 64 * 16);
        prop_assert_eq!(decode_snapshots(&bytes).unwrap(), vec![a, b]);
    }

    #[test]
    fn transforms_are_inverse_and_isometric(f in field_strategy(3, 4)) {
        let back = inverse(&forward(&f));
        let scale = f.max_abs().max(1.0);
        prop_assert!(back.sub(&f).unwrap().max_abs() <= 1e-13 * scale);
        let l2 = norm(&f, NormKind::L2).unwrap().value;
        let h0 = sobolev_norm(&f, 0.0).value;
        prop_assert!((l2 - h0).abs() <= 1e-12 * l2.max(1.0));
    }

    #[test]
    fn canonical_config_is_a_fixed_point(
        eps in 0.01f64..=1.0,
        gamma in 0.05f64..=1.0,
        lambda in -3.0f64..3.0,
        log_points in 2u32..6,
        length in 0.5f64..40.0,
        first in 0.5f64..1.0,
        count in 0usize..5,
    ) {
        let sweep: Vec<f64> = (0..count).map(|k| first / 2f64.powi(k as i32)).collect();
        let cfg = parse_config(&config_text(eps, gamma, lambda, 1 << log_points, length, &sweep)).unwrap();
        let text = cfg.to_canonical();
        let again = parse_config(&text).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_canonical(), text);
    }

    #[test]
    fn gamma_outside_range_is_rejected(dim in 3usize..8, excess in 0.0f64..3.0) {
        let gamma = dim as f64 - 2.0 + 1e-6 + excess;
        let text = format!(
            "format_version = 1\n[physics]\ndim = {dim}\ngamma = {gamma:?}\nlambda = 1.0\n\
             [grid]\npoints = 4\nbox_length = 1.0\n[data]\nrecipe = \"homogeneous\"\nre = 1.0\nim = 0.0\n"
        );
        match parse_config(&text) {
            Err(Error::Config(m)) => prop_assert!(m.iter().any(|s| s.contains("γ ≤ n−2")), "{:?}", m),
            other => prop_assert!(false, "accepted: {:?}", other.map(|_| ())),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn direct_solver_conserves_mass(
        amplitude in 0.2f64..2.0,
        phase in -0.5f64..0.5,
        eps in 0.3f64..1.0,
        lambda in prop_oneof![Just(-1.0), Just(1.0)],
    ) {
        let grid = Grid::new(3, 64, 10.0).unwrap();
        let data = DataRecipe::GaussianBump {
            amplitude,
            width: 1.0,
            phase_amplitude: phase,
            phase_width: 1.0,
        }
        .build(&grid)
        .unwrap();
        let p = PhysicsParams::new(eps, lambda, 1.0, 3).unwrap();
        let run = evolve_direct(&data, &p, 0.1, 0.025, &[0.0, 0.05, 0.1]).unwrap();
        prop_assert!(run.mass_drift() <= 1e-12, "{}", run.mass_drift());
    }

    #[test]
    fn velocity_stays_curl_free(
        amplitude in 0.2f64..1.5,
        phase in -0.5f64..0.5,
        lambda in prop_oneof![Just(-1.0), Just(1.0)],
    ) {
        let grid = Grid::new(3, 64, 10.0).unwrap();
        let data = DataRecipe::GaussianBump {
            amplitude,
            width: 1.0,
            phase_amplitude: phase,
            phase_width: 1.0,
        }
        .build(&grid)
        .unwrap();
        let p = PhysicsParams::new(0.2, lambda, 1.0, 3).unwrap();
        let s0 = WkbState::initial(&data, 0.2).unwrap();
        let run = evolve_grenier(&s0.a, &s0.v, &p, 0.1, 0.025, &[0.05, 0.1]).unwrap();
        prop_assert!(run.max_curl() <= 1e-10, "{}", run.max_curl());
        prop_assert!(run.mass_drift() <= 1e-7, "{}", run.mass_drift());
    }
}
