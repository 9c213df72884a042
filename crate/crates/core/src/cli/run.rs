//! Subcommand pipelines. Every run writes its tables as CSV, `report.json`
//! (deterministic) and `timing.json` (wall clock only).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Subcommand};
use super::selftest;
use crate::cascade::{solve_hierarchy, vector_l2};
use crate::direct::evolve_direct;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grenier::{
    delta_limit_study, integrate_grenier, reconstruct_phase, GrenierOptions, GuardEvent, WkbState,
};
use crate::io::{write_snapshots, write_text, Cell, CsvTable};
use crate::norms::{norm, NormKind};
use crate::physics::PhysicsParams;
use crate::spectral::gradient;
use crate::validation::{
    convergence_fit, dt_sweep, energy_order_table, epsilon_sweep, scaling_experiment,
    ConvergenceTable, Fit, SweepSettings,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelledEvent {
    pub label: String,
    pub event: GuardEvent,
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub subcommand: Subcommand,
    /// Canonical echo of the configuration.
    pub config: String,
    pub exit_code: i32,
    pub steps: usize,
    pub fits: BTreeMap<String, Fit>,
    pub guard_events: Vec<LabelledEvent>,
    pub failures: Vec<String>,
    pub results: Value,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_seconds: f64,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    snapshots: bool,
}

impl Outputs {
    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        write_text(&self.dir.join(name), &table.render())?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn fields(&mut self, name: &str, fields: &[Field]) -> Result<()> {
        if self.snapshots && !fields.is_empty() {
            write_snapshots(&self.dir.join(name), fields)?;
            self.files.push(name.to_string());
        }
        Ok(())
    }
}

fn json_text(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

/// Runs `sub` and writes its outputs to `out_dir`. Pipeline errors are
/// recorded in the report (with their exit code) rather than returned.
pub fn run(config: &ExperimentConfig, sub: Subcommand, out_dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
        snapshots: config.output.snapshots.unwrap_or(false),
    };
    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: sub,
        config: config.to_canonical(),
        exit_code: 0,
        steps: 0,
        fits: BTreeMap::new(),
        guard_events: Vec::new(),
        failures: Vec::new(),
        results: Value::Null,
        files: Vec::new(),
    };
    let result = match sub {
        Subcommand::Direct => run_direct(config, &mut out, &mut report),
        Subcommand::Grenier => run_grenier(config, &mut out, &mut report),
        Subcommand::Wkb => run_wkb(config, &mut out, &mut report),
        Subcommand::Converge => run_converge(config, &mut out, &mut report),
        Subcommand::DeltaStudy => run_delta(config, &mut out, &mut report),
        Subcommand::Scaling => run_scaling(config, &mut out, &mut report),
        Subcommand::Selftest => run_selftest(&mut out, &mut report),
    };
    if let Err(e) = result {
        if matches!(e, Error::Io { .. }) {
            return Err(e);
        }
        report.exit_code = e.exit_code();
        report.failures.push(e.to_string());
    }
    report.files = out.files.clone();
    write_text(&out_dir.join("report.json"), &json_text(&report))?;
    let timing = Timing {
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_text(&out_dir.join("timing.json"), &json_text(&timing))?;
    Ok(report)
}

fn required(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(vec![format!("missing `{key}` in [numerics]")]))
}

/// `0, s, 2s, …, T` with the configured spacing, or `[0, T]`.
fn sample_times(c: &ExperimentConfig, t: f64) -> Vec<f64> {
    match c.numerics.sample_spacing {
        Some(s) => {
            let n = (t / s).round() as usize;
            (0..=n).map(|k| if k == n { t } else { k as f64 * s }).collect()
        }
        None => vec![0.0, t],
    }
}

fn slope_table(table: &ConvergenceTable) -> Result<CsvTable> {
    let mut csv = CsvTable::new(&["parameter", "err_l2", "err_hs", "slope_running"]);
    let slopes = table.running_slopes(0);
    for (row, slope) in table.rows.iter().zip(slopes) {
        csv.push(vec![
            row.parameter.into(),
            row.errors[0].into(),
            row.errors[1].into(),
            slope.into(),
        ])?;
    }
    Ok(csv)
}

fn record_fits(report: &mut RunReport, name: &str, table: &ConvergenceTable) {
    for (kind, fit) in ["l2", "hs"].iter().zip(&table.fits) {
        report.fits.insert(format!("{name}_{kind}"), *fit);
    }
}

fn run_direct(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let p = c.physics_at(None)?;
    let t = required(c.numerics.t_final, "t_final")?;
    let times = sample_times(c, t);
    let gap = times.get(1).copied().unwrap_or(t);
    let dt = match c.numerics.direct_dt {
        Some(dt) => dt,
        None => c.dt_policy().step_for(p.epsilon, grid.spacing(), gap).0,
    };
    let run = evolve_direct(&data, &p, t, dt, &times)?;
    report.steps = run.steps;
    let (m0, e0) = (run.diagnostics[0].mass, run.diagnostics[0].energy);
    let mut table = CsvTable::new(&["time", "mass", "energy", "mass_drift", "energy_drift"]);
    for d in &run.diagnostics {
        table.push(vec![
            d.time.into(),
            d.mass.into(),
            d.energy.into(),
            ((d.mass - m0).abs() / m0.abs()).into(),
            ((d.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)).into(),
        ])?;
    }
    out.csv("direct_diagnostics.csv", &table)?;
    let mut results = json!({
        "dt": dt,
        "steps": run.steps,
        "mass_drift": run.mass_drift(),
        "energy_drift": run.energy_drift(),
        "resolution": run.resolution,
    });
    if let Some(factors) = &c.numerics.dt_factors {
        let dts: Vec<f64> = factors.iter().map(|f| f * dt).collect();
        let rows = dt_sweep(&data, &p, t, &dts)?;
        let fit_table = energy_order_table(&rows)?;
        let slopes = fit_table.running_slopes(0);
        let mut csv = CsvTable::new(&["dt", "mass_drift", "energy_drift", "slope_running"]);
        for (r, s) in rows.iter().zip(slopes) {
            csv.push(vec![r.dt.into(), r.mass_drift.into(), r.energy_drift.into(), s.into()])?;
        }
        out.csv("direct_dt.csv", &csv)?;
        report.fits.insert("energy_dt".into(), fit_table.fits[0]);
        results["dt_rows"] = serde_json::to_value(&rows).expect("serializable");
    }
    let fields: Vec<Field> = run.snapshots.iter().map(|(_, f)| f.clone()).collect();
    out.fields("direct_snapshots.hwkb", &fields)?;
    report.results = results;
    Ok(())
}

fn label(lambda: f64, eps: f64) -> String {
    format!("lambda{lambda}_eps{eps}")
}

fn run_grenier(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let t = required(c.numerics.t_final, "t_final")?;
    let dt = required(c.numerics.dt, "dt")?;
    let times = sample_times(c, t);
    let guard = c.guard();
    let options = GrenierOptions {
        guard,
        delta: c.numerics.delta.unwrap_or(0.0),
    };
    let mut window = CsvTable::new(&[
        "lambda",
        "epsilon",
        "completed",
        "t_reached",
        "max_monitor_ratio",
        "max_grad_v",
        "margin",
        "mass_drift",
        "max_curl",
        "phase_mismatch",
    ]);
    let mut common = t;
    let mut min_margin = f64::INFINITY;
    let mut max_grad: f64 = 0.0;
    let mut runs = Vec::new();
    for &lambda in &c.lambdas() {
        for &eps in &c.epsilons() {
            let name = label(lambda, eps);
            let p = PhysicsParams::new(eps, lambda, c.physics.gamma, c.physics.dim)?;
            let s0 = WkbState::initial(&data, eps)?;
            let run = match integrate_grenier(&s0.a, &s0.v, &p, t, dt, &times, &options) {
                Ok(r) => r,
                Err(e) if matches!(e.exit_code(), 4 | 5) => {
                    if report.exit_code == 0 {
                        report.exit_code = e.exit_code();
                    }
                    report.failures.push(format!("{name}: {e}"));
                    common = 0.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            report.steps += run.steps;
            let mut steps = CsvTable::new(&[
                "step",
                "time",
                "monitor",
                "monitor_ratio",
                "mass",
                "curl",
                "grad_v_max",
                "v_max",
            ]);
            let m0 = run.diagnostics[0].monitor.value;
            for (k, d) in run.diagnostics.iter().enumerate() {
                steps.push(vec![
                    k.into(),
                    d.monitor.t.into(),
                    d.monitor.value.into(),
                    (d.monitor.value / m0).into(),
                    d.mass.into(),
                    d.curl.into(),
                    d.grad_v_max.into(),
                    d.v_max.into(),
                ])?;
            }
            out.csv(&format!("grenier_steps_{name}.csv"), &steps)?;
            let ratio = run.max_monitor_ratio();
            let grad = run
                .diagnostics
                .iter()
                .map(|d| d.grad_v_max)
                .fold(0.0, f64::max);
            let reached = run.trip.as_ref().map_or(t, |e| e.last_valid_time);
            let mismatch = if run.completed() {
                let phases = reconstruct_phase(&run.snapshots, &data.phase0, &p)?;
                let mut worst: f64 = 0.0;
                for (snap, (_, phi)) in run.snapshots.iter().zip(&phases) {
                    let scale = vector_l2(&snap.v)?;
                    if scale > 0.0 {
                        worst = worst.max(vector_l2(&gradient(phi)?.sub(&snap.v)?)? / scale);
                    }
                }
                worst
            } else {
                f64::NAN
            };
            let margin = guard.threshold / ratio;
            window.push(vec![
                lambda.into(),
                eps.into(),
                run.completed().into(),
                reached.into(),
                ratio.into(),
                grad.into(),
                margin.into(),
                run.mass_drift().into(),
                run.max_curl().into(),
                mismatch.into(),
            ])?;
            common = common.min(reached);
            min_margin = min_margin.min(margin);
            max_grad = max_grad.max(grad);
            if let Some(e) = &run.trip {
                report.guard_events.push(LabelledEvent {
                    label: name.clone(),
                    event: e.clone(),
                });
                if report.exit_code == 0 {
                    report.exit_code = 3;
                }
            }
            let amps: Vec<Field> = run.snapshots.iter().map(|s| s.a.clone()).collect();
            out.fields(&format!("grenier_amplitude_{name}.hwkb"), &amps)?;
            runs.push(json!({
                "lambda": lambda,
                "epsilon": eps,
                "completed": run.completed(),
                "t_reached": reached,
                "max_monitor_ratio": ratio,
                "max_grad_v": grad,
                "mass_drift": run.mass_drift(),
                "max_curl": run.max_curl(),
                "phase_mismatch": mismatch,
            }));
        }
    }
    out.csv("grenier_window.csv", &window)?;
    report.results = json!({
        "common_window": common,
        "all_completed": report.guard_events.is_empty() && report.failures.is_empty(),
        "min_margin": min_margin,
        "max_grad_v": max_grad,
        "runs": runs,
    });
    Ok(())
}

fn run_wkb(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let p = c.physics_at(Some(c.physics.epsilon.unwrap_or(1.0)))?;
    let t = required(c.numerics.t_final, "t_final")?;
    let dt = required(c.numerics.dt, "dt")?;
    let times = sample_times(c, t);
    let depth = c.numerics.depth.unwrap_or(super::config::defaults::DEPTH);
    let h = solve_hierarchy(&data, &p, depth, t, dt, &times, &c.guard())?;
    report.steps = h.steps;
    let mut table = CsvTable::new(&["level", "time", "b_l2", "w_l2", "phi_l2", "phase_gradient_mismatch"]);
    let mut worst = Vec::new();
    let mut fields = Vec::new();
    for level in &h.levels {
        let mismatch = level.phase_gradient_mismatch()?;
        for (i, &time) in level.times.iter().enumerate() {
            table.push(vec![
                level.k.into(),
                time.into(),
                norm(&level.b[i], NormKind::L2)?.value.into(),
                vector_l2(&level.w[i])?.into(),
                norm(&level.phi[i], NormKind::L2)?.value.into(),
                mismatch[i].into(),
            ])?;
        }
        worst.push(mismatch.iter().copied().fold(0.0, f64::max));
        fields.extend(level.b.iter().cloned());
    }
    out.csv("levels.csv", &table)?;
    out.fields("wkb_levels.hwkb", &fields)?;
    report.results = json!({
        "depth": h.order,
        "dt": h.dt,
        "level_mismatch": worst,
        "diagnostics": h.diagnostics.last(),
    });
    Ok(())
}

fn first_failure_code(report: &mut RunReport, code: i32) {
    if report.exit_code == 0 {
        report.exit_code = code;
    }
}

fn run_converge(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let epsilons = c.epsilons();
    let p = c.physics_at(epsilons.first().copied())?;
    let n = &c.numerics;
    let settings = SweepSettings {
        t_final: required(n.t_final, "t_final")?,
        dt_policy: c.dt_policy(),
        grenier_dt: required(n.dt, "dt")?,
        sample_spacing: required(n.sample_spacing, "sample_spacing")?,
        s_prime: n.s_prime.unwrap_or(super::config::defaults::S_PRIME),
        regularity: n.regularity.unwrap_or(super::config::defaults::REGULARITY),
        guard: c.guard(),
        depth: n.depth.unwrap_or(super::config::defaults::DEPTH),
    };
    let orders = n.orders.clone().unwrap_or_else(|| vec![0, 1]);
    let sweep = epsilon_sweep(&data, &p, &epsilons, &orders, &settings, true)?;
    for f in &sweep.failures {
        report.failures.push(format!("epsilon {}: {}", f.epsilon, f.reason));
        first_failure_code(report, f.code);
    }

    let mut sweep_csv = CsvTable::new(&[
        "epsilon",
        "direct_dt",
        "direct_self",
        "direct_mass_drift",
        "grenier_self",
        "cross",
        "phase_mismatch",
        "grenier_mass_drift",
        "max_curl",
        "max_monitor_ratio",
    ]);
    for r in &sweep.rows {
        let g = r.grenier.as_ref().expect("sweep ran the phase/amplitude solver");
        sweep_csv.push(vec![
            r.epsilon.into(),
            r.direct_dt.into(),
            r.direct_self.into(),
            r.direct_mass_drift.into(),
            g.grenier_self.into(),
            g.cross.into(),
            g.phase_mismatch.into(),
            g.mass_drift.into(),
            g.max_curl.into(),
            g.max_monitor_ratio.into(),
        ])?;
    }
    out.csv("sweep.csv", &sweep_csv)?;
    let mut levels = CsvTable::new(&["level", "phase_gradient_mismatch", "velocity_l2"]);
    for (k, (m, v)) in sweep.level_mismatch.iter().zip(&sweep.level_velocity).enumerate() {
        levels.push(vec![k.into(), (*m).into(), (*v).into()])?;
    }
    out.csv("levels.csv", &levels)?;

    let mut tables: Vec<(String, Result<ConvergenceTable>)> = orders
        .iter()
        .map(|&o| (format!("wkb_order{o}"), sweep.wkb_table(o)))
        .collect();
    tables.push(("amplitude_order0".into(), sweep.amplitude_table(0)));
    if settings.depth >= 1 {
        tables.push(("amplitude_order1".into(), sweep.amplitude_table(1)));
    }
    for (name, table) in tables {
        match table {
            Ok(t) => {
                out.csv(&format!("{name}.csv"), &slope_table(&t)?)?;
                record_fits(report, &name, &t);
            }
            Err(e) => {
                report.failures.push(format!("{name}: {e}"));
                first_failure_code(report, 1);
            }
        }
    }
    report.results = serde_json::to_value(&sweep).expect("serializable");
    Ok(())
}

fn run_delta(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let p = c.physics_at(None)?;
    let t = required(c.numerics.t_final, "t_final")?;
    let dt = required(c.numerics.dt, "dt")?;
    let deltas = c.sweep.deltas.clone().unwrap_or_default();
    let s_prime = c.numerics.s_prime.unwrap_or(super::config::defaults::S_PRIME);
    let s0 = WkbState::initial(&data, p.epsilon)?;
    let study = delta_limit_study(&s0.a, &s0.v, &p, t, dt, &deltas, s_prime, &c.guard())?;
    let mut table = CsvTable::new(&["delta", "deviation", "tripped"]);
    for r in &study.rows {
        table.push(vec![
            r.delta.into(),
            r.deviation.unwrap_or(f64::NAN).into(),
            r.trip.is_some().into(),
        ])?;
        if let Some(e) = &r.trip {
            report.guard_events.push(LabelledEvent {
                label: format!("delta{}", r.delta),
                event: e.clone(),
            });
        }
    }
    out.csv("delta_study.csv", &table)?;
    let (ds, devs): (Vec<f64>, Vec<f64>) = study
        .rows
        .iter()
        .filter_map(|r| r.deviation.filter(|d| *d > 0.0).map(|d| (r.delta, d)))
        .unzip();
    match convergence_fit(&ds, &devs) {
        Ok(fit) => {
            report.fits.insert("delta".into(), fit);
        }
        Err(e) => report.failures.push(format!("delta fit: {e}")),
    }
    report.results = json!({
        "monotone": study.is_monotone(0.1),
        "reference_delta": study.reference_delta,
        "s_prime": study.s_prime,
        "rows": study.rows,
    });
    Ok(())
}

fn run_scaling(c: &ExperimentConfig, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let grid = c.grid()?;
    let data = c.data.build(&grid)?;
    let cfg = c.scaling_config()?;
    let r = scaling_experiment(&cfg, &data)?;
    for f in &r.failures {
        report.failures.push(format!("epsilon {}: {}", f.epsilon, f.reason));
        first_failure_code(report, f.code);
    }
    let mut header: Vec<String> = [
        "h",
        "epsilon",
        "t_h",
        "initial_hs",
        "initial_l2",
        "identity_hs_error",
        "identity_l2_error",
        "oscillatory_fraction",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(cfg.k_values.iter().map(|k| format!("hk_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvTable::new(&header_refs);
    for row in &r.rows {
        let mut cells: Vec<Cell> = vec![
            row.h.into(),
            row.epsilon.into(),
            row.t_h.into(),
            row.initial_hs.into(),
            row.initial_l2.into(),
            row.identity_hs_error.into(),
            row.identity_l2_error.into(),
            row.oscillatory_fraction.into(),
        ];
        cells.extend(row.hk.iter().map(|&x| Cell::from(x)));
        table.push(cells)?;
    }
    out.csv("scaling.csv", &table)?;
    let mut header: Vec<String> = vec!["h_from".into(), "h_to".into()];
    header.extend(cfg.k_values.iter().map(|k| format!("ratio_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut ratios = CsvTable::new(&header_refs);
    for (i, ratio) in r.ratios.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![r.rows[i].h.into(), r.rows[i + 1].h.into()];
        cells.extend(ratio.iter().map(|&x| Cell::from(x)));
        ratios.push(cells)?;
    }
    out.csv("ratios.csv", &ratios)?;
    report.results = json!({
        "grows_above_threshold": r.grows_above_threshold(&cfg.k_values),
        "report": r,
    });
    Ok(())
}

fn run_selftest(out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let checks = selftest::run_checks();
    let mut table = CsvTable::new(&["check", "passed", "value"]);
    for ch in &checks {
        table.push(vec![ch.name.into(), ch.passed.into(), ch.value.into()])?;
        if !ch.passed {
            report.failures.push(format!("{} failed (value {})", ch.name, ch.value));
        }
    }
    out.csv("selftest.csv", &table)?;
    if !report.failures.is_empty() {
        report.exit_code = 1;
    }
    report.results = json!({
        "passed": checks.iter().filter(|c| c.passed).count(),
        "total": checks.len(),
    });
    Ok(())
}
