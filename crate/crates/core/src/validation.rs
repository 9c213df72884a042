//! Convergence fits, ε sweeps against the direct solver, conservation audits
//! and the rescaling experiment.

use serde::Serialize;

use crate::cascade::{amplitude_expansion, assemble_wkb, solve_hierarchy, vector_l2, Hierarchy};
use crate::direct::{evolve_direct, initial_wave, mass, DirectRun, DtPolicy};
use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::grenier::{
    evolve_grenier_with, recompose, reconstruct_phase, GrenierOptions, GrenierRun, GuardConfig,
    WkbState,
};
use crate::grid::Grid;
use crate::norms::{homogeneous_sobolev_norm, norm, sobolev_norm, NormKind};
use crate::physics::{check_gamma, PhysicsParams, WkbData};
use crate::spectral::{forward, gradient};

/// Least-squares line through `(log p, log e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log-space misfit.
    pub residual: f64,
}

pub fn convergence_fit(parameters: &[f64], errors: &[f64]) -> Result<Fit> {
    if parameters.len() != errors.len() {
        return Err(Error::Structural(format!(
            "{} parameters for {} errors",
            parameters.len(),
            errors.len()
        )));
    }
    if parameters.len() < 3 {
        return Err(Error::Domain(format!(
            "a fit needs at least 3 rows, got {}",
            parameters.len()
        )));
    }
    if let Some(bad) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("errors must be positive and finite, got {bad}")));
    }
    if let Some(bad) = parameters.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Domain(format!("parameters must be positive, got {bad}")));
    }
    let x: Vec<f64> = parameters.iter().map(|p| p.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("parameters are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(Fit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub parameter: f64,
    /// One entry per norm of the table.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub parameter: String,
    pub norms: Vec<NormKind>,
    pub rows: Vec<ConvergenceRow>,
    /// Fit per norm, in the order of `norms`.
    pub fits: Vec<Fit>,
}

impl ConvergenceTable {
    pub fn new(parameter: &str, norms: Vec<NormKind>, rows: Vec<ConvergenceRow>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Domain(format!(
                "a convergence table needs at least 3 rows, got {}",
                rows.len()
            )));
        }
        if rows.windows(2).any(|w| !(w[1].parameter < w[0].parameter)) {
            return Err(Error::Domain(format!(
                "{parameter} values must be strictly decreasing"
            )));
        }
        if rows.iter().any(|r| r.errors.len() != norms.len()) {
            return Err(Error::Structural("row width differs from the norm list".into()));
        }
        let params: Vec<f64> = rows.iter().map(|r| r.parameter).collect();
        let fits = (0..norms.len())
            .map(|c| {
                let col: Vec<f64> = rows.iter().map(|r| r.errors[c]).collect();
                convergence_fit(&params, &col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvergenceTable {
            parameter: parameter.to_string(),
            norms,
            rows,
            fits,
        })
    }

    pub fn fitted_slope(&self) -> f64 {
        self.fits[0].slope
    }

    pub fn fit_residual(&self) -> f64 {
        self.fits[0].residual
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.errors[c]).collect()
    }

    /// Slope between each row and its predecessor in column `c`; NaN for the
    /// first row.
    pub fn running_slopes(&self, c: usize) -> Vec<f64> {
        let mut out = vec![f64::NAN];
        for w in self.rows.windows(2) {
            out.push((w[1].errors[c] / w[0].errors[c]).ln() / (w[1].parameter / w[0].parameter).ln());
        }
        out
    }
}

/// Time horizon and numerics shared by every row of an ε sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub t_final: f64,
    pub dt_policy: DtPolicy,
    /// Step of the phase/amplitude solver and of the hierarchy.
    pub grenier_dt: f64,
    /// Spacing of the snapshots used for the phase quadrature.
    pub sample_spacing: f64,
    /// Sobolev index of the `H^{s'}` residual column.
    pub s_prime: f64,
    /// Regularity index `s` of the amplitude-expansion norms `H^{s-2}` and `H^{s-4}`.
    pub regularity: f64,
    pub guard: GuardConfig,
    /// Deepest hierarchy level.
    pub depth: usize,
}

impl SweepSettings {
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let n = (self.t_final / self.sample_spacing).round();
        if !(self.sample_spacing > 0.0)
            || (n * self.sample_spacing - self.t_final).abs() > 1e-9 * self.t_final.max(1.0)
        {
            return Err(Error::Structural(format!(
                "sample spacing {} does not divide T = {}",
                self.sample_spacing, self.t_final
            )));
        }
        Ok((0..=n as usize).map(|k| k as f64 * self.sample_spacing).collect())
    }
}

/// Everything measured for one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub direct_dt: f64,
    /// `‖u_dt - u_{dt/2}‖_{L²} / ‖u₀‖_{L²}` of the direct solver.
    pub direct_self: f64,
    pub direct_mass_drift: f64,
    /// `[L², H^{s'}]` residual of the assembly, per order.
    pub wkb: Vec<[f64; 2]>,
    pub grenier: Option<GrenierRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrenierRow {
    /// Self-convergence of the recomposed wave between `dt` and `dt/2`.
    pub grenier_self: f64,
    /// `‖a e^{iφ/ε} - u_direct‖_{L²} / ‖u₀‖_{L²}` at `T`.
    pub cross: f64,
    /// `max_t ‖∇φ^ε - v^ε‖_{L²} / ‖v^ε‖_{L²}`.
    pub phase_mismatch: f64,
    pub mass_drift: f64,
    pub max_curl: f64,
    pub max_monitor_ratio: f64,
    /// `‖a^ε - b₀‖` in `[L², H^{s-2}]`.
    pub amplitude0: [f64; 2],
    /// `‖a^ε - b₀ - εb₁‖` in `[L², H^{s-4}]`.
    pub amplitude1: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub epsilon: f64,
    /// Process exit code of the underlying error.
    pub code: i32,
    pub reason: String,
}

impl RowFailure {
    fn new(epsilon: f64, e: &Error) -> RowFailure {
        RowFailure {
            epsilon,
            code: e.exit_code(),
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSweep {
    pub settings: SweepSettings,
    pub orders: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<RowFailure>,
    /// `max_t ‖∇φ_k - w_k‖_{L²}` per level.
    pub level_mismatch: Vec<f64>,
    /// `max_t ‖w_k‖_{L²}` per level.
    pub level_velocity: Vec<f64>,
}

fn row_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Resolution(_) | Error::BlowUp { .. } | Error::GuardTrip { .. }
    )
}

fn rel_l2(a: &Field, b: &Field, reference: f64) -> Result<f64> {
    Ok(norm(&a.sub(b)?, NormKind::L2)?.value / reference)
}

fn pair(f: &Field, s: f64) -> Result<[f64; 2]> {
    Ok([norm(f, NormKind::L2)?.value, sobolev_norm(f, s).value])
}

fn direct_pair(
    data: &WkbData,
    params: &PhysicsParams,
    settings: &SweepSettings,
) -> Result<(DirectRun, DirectRun, f64)> {
    let t = settings.t_final;
    let (dt, _) = settings
        .dt_policy
        .step_for(params.epsilon, data.grid().spacing(), t);
    let coarse = evolve_direct(data, params, t, dt, &[t])?;
    let fine = evolve_direct(data, params, t, 0.5 * dt, &[t])?;
    Ok((coarse, fine, dt))
}

fn recomposed(run: &GrenierRun, data: &WkbData, params: &PhysicsParams) -> Result<(Field, f64)> {
    let phases = reconstruct_phase(&run.snapshots, &data.phase0, params)?;
    let mut mismatch: f64 = 0.0;
    for (snap, (_, phi)) in run.snapshots.iter().zip(&phases) {
        let g = gradient(phi)?.sub(&snap.v)?;
        let scale = vector_l2(&snap.v)?;
        if scale > 0.0 {
            mismatch = mismatch.max(vector_l2(&g)? / scale);
        }
    }
    let last = phases.last().expect("at least one snapshot");
    Ok((recompose(&run.last().a, &last.1, params.epsilon)?, mismatch))
}

fn grenier_row(
    data: &WkbData,
    params: &PhysicsParams,
    settings: &SweepSettings,
    h: &Hierarchy,
    u_direct: &Field,
    u0_norm: f64,
) -> Result<GrenierRow> {
    let times = settings.sample_times()?;
    let t = settings.t_final;
    let s0 = WkbState::initial(data, params.epsilon)?;
    let options = GrenierOptions {
        guard: settings.guard,
        delta: 0.0,
    };
    let coarse = evolve_grenier_with(&s0.a, &s0.v, params, t, settings.grenier_dt, &times, &options)?;
    let fine = evolve_grenier_with(
        &s0.a,
        &s0.v,
        params,
        t,
        0.5 * settings.grenier_dt,
        &times,
        &options,
    )?;
    let (uc, _) = recomposed(&coarse, data, params)?;
    let (uf, mismatch) = recomposed(&fine, data, params)?;
    let ti = times.len() - 1;
    let a = &fine.last().a;
    let s = settings.regularity;
    let d0 = a.sub(&h.levels[0].b[ti])?;
    let amplitude1 = if h.order >= 1 {
        let d1 = a.sub(&amplitude_expansion(h, params.epsilon, 1, ti)?)?;
        [norm(&d1, NormKind::L2)?.value, sobolev_norm(&d1, s - 4.0).value]
    } else {
        [f64::NAN; 2]
    };
    Ok(GrenierRow {
        grenier_self: rel_l2(&uc, &uf, u0_norm)?,
        cross: rel_l2(&uf, u_direct, u0_norm)?,
        phase_mismatch: mismatch,
        mass_drift: fine.mass_drift(),
        max_curl: fine.max_curl(),
        max_monitor_ratio: fine.max_monitor_ratio(),
        amplitude0: [norm(&d0, NormKind::L2)?.value, sobolev_norm(&d0, s - 2.0).value],
        amplitude1,
    })
}

/// Runs the direct solver (and optionally the phase/amplitude solver) for
/// each ε against one ε-independent hierarchy.
pub fn epsilon_sweep(
    data: &WkbData,
    params: &PhysicsParams,
    epsilons: &[f64],
    orders: &[usize],
    settings: &SweepSettings,
    with_grenier: bool,
) -> Result<EpsilonSweep> {
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("epsilons must be strictly decreasing".into()));
    }
    if let Some(&o) = orders.iter().find(|&&o| o + 1 > settings.depth) {
        return Err(Error::Domain(format!(
            "order {o} needs hierarchy depth {}, configured {}",
            o + 1,
            settings.depth
        )));
    }
    let times = settings.sample_times()?;
    let h = solve_hierarchy(
        data,
        params,
        settings.depth,
        settings.t_final,
        settings.grenier_dt,
        &times,
        &settings.guard,
    )?;
    let mut level_mismatch = Vec::new();
    let mut level_velocity = Vec::new();
    for level in &h.levels {
        level_mismatch.push(level.phase_gradient_mismatch()?.into_iter().fold(0.0, f64::max));
        let mut vmax: f64 = 0.0;
        for w in &level.w {
            vmax = vmax.max(vector_l2(w)?);
        }
        level_velocity.push(vmax);
    }
    let ti = times.len() - 1;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &eps in epsilons {
        let p = params.with_epsilon(eps)?;
        let result = (|| -> Result<SweepRow> {
            let u0_norm = norm(&initial_wave(data, &p)?, NormKind::L2)?.value;
            let (coarse, fine, dt) = direct_pair(data, &p, settings)?;
            let u = fine.last();
            let mut wkb = Vec::with_capacity(orders.len());
            for &o in orders {
                let w = assemble_wkb(&h, eps, o, ti)?;
                wkb.push(pair(&u.sub(&w)?, settings.s_prime)?);
            }
            let grenier = if with_grenier {
                Some(grenier_row(data, &p, settings, &h, u, u0_norm)?)
            } else {
                None
            };
            Ok(SweepRow {
                epsilon: eps,
                direct_dt: dt,
                direct_self: rel_l2(coarse.last(), u, u0_norm)?,
                direct_mass_drift: fine.mass_drift(),
                wkb,
                grenier,
            })
        })();
        match result {
            Ok(r) => rows.push(r),
            Err(e) if row_failure(&e) => failures.push(RowFailure::new(eps, &e)),
            Err(e) => return Err(e),
        }
    }
    Ok(EpsilonSweep {
        settings: settings.clone(),
        orders: orders.to_vec(),
        rows,
        failures,
        level_mismatch,
        level_velocity,
    })
}

impl EpsilonSweep {
    fn table(&self, name: &str, norms: Vec<NormKind>, pick: impl Fn(&SweepRow) -> Option<[f64; 2]>) -> Result<ConvergenceTable> {
        let rows = self
            .rows
            .iter()
            .filter_map(|r| pick(r).map(|e| ConvergenceRow {
                parameter: r.epsilon,
                errors: e.to_vec(),
            }))
            .collect();
        ConvergenceTable::new(name, norms, rows)
    }

    /// Residual of the order-`order` assembly against the direct solver.
    pub fn wkb_table(&self, order: usize) -> Result<ConvergenceTable> {
        let c = self
            .orders
            .iter()
            .position(|&o| o == order)
            .ok_or_else(|| Error::Domain(format!("order {order} was not measured")))?;
        self.table(
            "epsilon",
            vec![NormKind::L2, NormKind::Hs(self.settings.s_prime)],
            |r| Some(r.wkb[c]),
        )
    }

    /// `a^ε - Σ_{k≤order} ε^k b_k` for `order` 0 or 1.
    pub fn amplitude_table(&self, order: usize) -> Result<ConvergenceTable> {
        let s = self.settings.regularity;
        match order {
            0 => self.table("epsilon", vec![NormKind::L2, NormKind::Hs(s - 2.0)], |r| {
                r.grenier.as_ref().map(|g| g.amplitude0)
            }),
            1 => self.table("epsilon", vec![NormKind::L2, NormKind::Hs(s - 4.0)], |r| {
                r.grenier.as_ref().map(|g| g.amplitude1)
            }),
            _ => Err(Error::Domain(format!("amplitude table of order {order}"))),
        }
    }
}

/// Residual table of the order-`order` assembly over `epsilons`.
pub fn wkb_error_study(
    data: &WkbData,
    params: &PhysicsParams,
    epsilons: &[f64],
    order: usize,
    settings: &SweepSettings,
) -> Result<ConvergenceTable> {
    epsilon_sweep(data, params, epsilons, &[order], settings, false)?.wkb_table(order)
}

/// Maximum relative drifts across a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationReport {
    pub mass_drift: f64,
    pub energy_drift: Option<f64>,
    /// `max_t ‖curl v‖ / ‖∇v‖`, for velocity runs.
    pub curl_drift: Option<f64>,
}

fn max_rel_drift(values: &[f64]) -> f64 {
    let v0 = values[0];
    let scale = if v0 != 0.0 { v0.abs() } else { 1.0 };
    values.iter().map(|v| (v - v0).abs() / scale).fold(0.0, f64::max)
}

/// Mass and energy drift across direct-solver snapshots.
pub fn conservation_audit(snapshots: &[Field], params: &PhysicsParams) -> Result<ConservationReport> {
    if snapshots.len() < 2 {
        return Err(Error::Domain("an audit needs at least two snapshots".into()));
    }
    let masses: Vec<f64> = snapshots.iter().map(mass).collect();
    let energies = snapshots
        .iter()
        .map(|u| crate::direct::energy(u, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConservationReport {
        mass_drift: max_rel_drift(&masses),
        energy_drift: Some(max_rel_drift(&energies)),
        curl_drift: None,
    })
}

/// Amplitude-mass and curl drift across phase/amplitude snapshots.
pub fn conservation_audit_states(states: &[WkbState]) -> Result<ConservationReport> {
    if states.len() < 2 {
        return Err(Error::Domain("an audit needs at least two snapshots".into()));
    }
    let masses: Vec<f64> = states.iter().map(|s| mass(&s.a)).collect();
    let mut curl: f64 = 0.0;
    for s in states {
        curl = curl.max(curl_ratio(&s.v)?);
    }
    Ok(ConservationReport {
        mass_drift: max_rel_drift(&masses),
        energy_drift: None,
        curl_drift: Some(curl),
    })
}

/// `‖∂_i v_j - ∂_j v_i‖_{L²} / ‖∇v‖_{L²}`.
pub fn curl_ratio(v: &VectorField) -> Result<f64> {
    let n = v.grid().dim();
    let grads = v
        .components()
        .iter()
        .map(gradient)
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut curl = 0.0;
    for j in 0..n {
        for i in 0..n {
            total += norm(grads[j].component(i), NormKind::L2)?.value.powi(2);
            if i < j {
                let c = grads[j].component(i).sub(grads[i].component(j))?;
                curl += norm(&c, NormKind::L2)?.value.powi(2);
            }
        }
    }
    Ok(if total > 0.0 { (curl / total).sqrt() } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtRow {
    pub dt: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

/// Direct-solver drifts for each step size.
pub fn dt_sweep(data: &WkbData, params: &PhysicsParams, t_final: f64, dts: &[f64]) -> Result<Vec<DtRow>> {
    dts.iter()
        .map(|&dt| {
            let run = evolve_direct(data, params, t_final, dt, &[0.0, t_final])?;
            let snaps: Vec<Field> = run.snapshots.iter().map(|(_, f)| f.clone()).collect();
            let report = conservation_audit(&snaps, params)?;
            Ok(DtRow {
                dt,
                mass_drift: report.mass_drift,
                energy_drift: run.energy_drift(),
            })
        })
        .collect()
}

/// Energy drift against `dt`.
pub fn energy_order_table(rows: &[DtRow]) -> Result<ConvergenceTable> {
    ConvergenceTable::new(
        "dt",
        vec![NormKind::L2],
        rows.iter()
            .map(|r| ConvergenceRow {
                parameter: r.dt,
                errors: vec![r.energy_drift],
            })
            .collect(),
    )
}

/// Rescaling experiment: target exponents at `(dim, gamma)` and a
/// semiclassical solve in the surrogate dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingConfig {
    pub s: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub dim: usize,
    pub h_values: Vec<f64>,
    pub k_values: Vec<f64>,
    /// Fixed macroscopic time; found by bisection when absent.
    pub tau: Option<f64>,
    pub log_damping: bool,
    pub surrogate_dim: usize,
    pub surrogate_gamma: f64,
    /// Phase deviation that defines `τ`.
    pub phase_deviation: f64,
    /// Bisection bracket `[0, tau_max]` and tolerance.
    pub tau_max: f64,
    pub tau_tolerance: f64,
    /// Steps of each level-0 run inside the bisection.
    pub tau_steps: usize,
    /// Lower bound for the oscillatory energy fraction.
    pub oscillation_threshold: f64,
    pub dt_policy: DtPolicy,
}

impl ScalingConfig {
    pub fn critical_index(&self) -> f64 {
        self.gamma / 2.0 - 1.0
    }

    /// `ε(h) = h^{γ/2-1-s}`.
    pub fn epsilon_exponent(&self) -> f64 {
        self.critical_index() - self.s
    }

    /// `s / (γ/2 - s)`: indices above it blow up.
    pub fn k_threshold(&self) -> f64 {
        self.s / (self.gamma / 2.0 - self.s)
    }

    pub fn epsilon_for(&self, h: f64) -> f64 {
        h.powf(self.epsilon_exponent())
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.dim < 5 {
            errs.push(format!("the rescaling statement needs n ≥ 5, got {}", self.dim));
        }
        let lo = (self.dim as f64 / 2.0 - 2.0).max(2.0);
        if !(self.gamma > lo && self.gamma <= self.dim as f64 - 2.0) {
            errs.push(format!(
                "γ must satisfy max(n/2−2,2) < γ ≤ n−2 (n = {}), got {}",
                self.dim, self.gamma
            ));
        }
        if !(self.s > 0.0 && self.s < self.critical_index()) {
            errs.push(format!(
                "s must satisfy 0 < s < γ/2 − 1 = {}, got {}",
                self.critical_index(),
                self.s
            ));
        }
        if self.h_values.is_empty()
            || self.h_values.iter().any(|h| !(*h > 0.0 && *h <= 1.0))
            || self.h_values.windows(2).any(|w| !(w[1] < w[0]))
        {
            errs.push("h values must be strictly decreasing in (0, 1]".into());
        }
        if self.log_damping && self.h_values.iter().any(|&h| h >= 1.0) {
            errs.push("logarithmic damping needs h < 1".into());
        }
        if let Err(e) = check_gamma(self.surrogate_dim, self.surrogate_gamma) {
            errs.push(format!("surrogate: {e}"));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                errs.push(format!("τ must be positive, got {t}"));
            }
        } else if !(self.tau_max > 0.0 && self.tau_tolerance > 0.0 && self.tau_steps >= 2) {
            errs.push("τ bisection needs tau_max > 0, tau_tolerance > 0, tau_steps ≥ 2".into());
        }
        if self.tau_steps % 2 != 0 {
            errs.push("tau_steps must be even".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub h: f64,
    pub epsilon: f64,
    pub t_h: f64,
    /// `‖ψ^h(t^h)‖_{H^k}` per `k`.
    pub hk: Vec<f64>,
    pub initial_hs: f64,
    pub initial_l2: f64,
    /// Relative errors of the two initial-norm identities.
    pub identity_hs_error: f64,
    pub identity_l2_error: f64,
    pub oscillatory_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub tau: f64,
    pub epsilon_exponent: f64,
    pub k_threshold: f64,
    pub rows: Vec<ScalingRow>,
    pub failures: Vec<RowFailure>,
    /// `ratios[i][j]`: `H^{k_j}` of row `i+1` over row `i`.
    pub ratios: Vec<Vec<f64>>,
    pub oscillation_ok: bool,
}

impl ScalingReport {
    /// True when every `k` above threshold grows across every consecutive pair.
    pub fn grows_above_threshold(&self, k_values: &[f64]) -> bool {
        !self.ratios.is_empty()
            && k_values.iter().enumerate().all(|(j, &k)| {
                k <= self.k_threshold || self.ratios.iter().all(|r| r[j] > 1.0)
            })
    }
}

/// Largest `|φ(t) - φ(0)|` over the support of `a₀` at level 0, and the
/// largest `|w₀(t)|`.
fn level0_phase_shift(data: &WkbData, params: &PhysicsParams, t: f64, steps: usize) -> Result<(f64, f64)> {
    let dt = t / steps as f64;
    let times = [0.0, 0.5 * t, t];
    let h = solve_hierarchy(data, params, 0, t, dt, &times, &GuardConfig::default())?;
    let level = &h.levels[0];
    let a0 = data.amplitude(0);
    let cut = 1e-3 * a0.max_abs();
    let phi = &level.phi[2];
    let mut dev: f64 = 0.0;
    for (idx, a) in a0.values().iter().enumerate() {
        if a.norm() >= cut {
            dev = dev.max((phi.values()[idx].re - data.phase0.values()[idx].re).abs());
        }
    }
    Ok((dev, level.w[2].max_magnitude()))
}

/// Earliest `τ` with phase shift at least `cfg.phase_deviation`.
pub fn find_tau(data: &WkbData, params: &PhysicsParams, cfg: &ScalingConfig) -> Result<f64> {
    let (top, _) = level0_phase_shift(data, params, cfg.tau_max, cfg.tau_steps)?;
    if top < cfg.phase_deviation {
        return Err(Error::Domain(format!(
            "phase shift {top:.4e} at tau_max = {} stays below {}",
            cfg.tau_max, cfg.phase_deviation
        )));
    }
    let (mut lo, mut hi) = (0.0, cfg.tau_max);
    while hi - lo > cfg.tau_tolerance {
        let mid = 0.5 * (lo + hi);
        let (dev, _) = level0_phase_shift(data, params, mid, cfg.tau_steps)?;
        if dev >= cfg.phase_deviation {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Energy fraction of `u` in modes with `|ξ| ≥ cutoff`.
fn high_mode_fraction(u: &Field, cutoff: f64) -> f64 {
    let s = forward(u);
    let grid = u.grid();
    let k2 = grid.k_squared();
    let (mut hi, mut total) = (0.0, 0.0);
    for (c, &k) in s.coeffs().iter().zip(k2) {
        let e = c.norm_sqr();
        total += e;
        if k.sqrt() >= cutoff {
            hi += e;
        }
    }
    if total > 0.0 {
        hi / total
    } else {
        0.0
    }
}

/// `h^{s-n/2} f(x/h)` sampled on the box of length `hL`.
fn rescaled(f: &Field, h: f64, s: f64) -> Result<Field> {
    let g = f.grid();
    let grid = Grid::new(g.dim(), g.points(), h * g.box_length())?;
    let c = h.powf(s - g.dim() as f64 / 2.0);
    let values = f.values().iter().map(|z| z * c).collect();
    let out = Field::from_values(&grid, values)?;
    Ok(if f.is_real() { out.real_part() } else { out })
}

/// Runs the surrogate solve for each `h` and measures `ψ^h(t^h)`.
pub fn scaling_experiment(cfg: &ScalingConfig, data: &WkbData) -> Result<ScalingReport> {
    cfg.validate()?;
    if data.grid().dim() != cfg.surrogate_dim {
        return Err(Error::Structural(format!(
            "data dimension {} differs from surrogate dimension {}",
            data.grid().dim(),
            cfg.surrogate_dim
        )));
    }
    let a0 = data.amplitude(0);
    let base = WkbData::new(vec![a0.clone()], Field::zeros(data.grid()), None)?;
    let limit = PhysicsParams::new(1.0, cfg.lambda, cfg.surrogate_gamma, cfg.surrogate_dim)?;
    let tau = match cfg.tau {
        Some(t) => t,
        None => find_tau(&base, &limit, cfg)?,
    };
    let (_, w_max) = level0_phase_shift(&base, &limit, tau, cfg.tau_steps.max(2))?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &h in &cfg.h_values {
        let eps = cfg.epsilon_for(h);
        let damp = if cfg.log_damping { 1.0 / h.ln().abs() } else { 1.0 };
        let result = (|| -> Result<ScalingRow> {
            let data_h = base.scaled(num_complex::Complex64::new(damp, 0.0));
            let p = limit.with_epsilon(eps)?;
            let (dt, _) = cfg.dt_policy.step_for(eps, data_h.grid().spacing(), tau);
            let run = evolve_direct(&data_h, &p, tau, dt, &[tau])?;
            let u = run.last();
            let psi = rescaled(u, h, cfg.s)?;
            let hk = cfg.k_values.iter().map(|&k| sobolev_norm(&psi, k).value).collect();
            let a_h = data_h.amplitude(0);
            let psi0 = rescaled(&a_h, h, cfg.s)?;
            let initial_hs = homogeneous_sobolev_norm(&psi0, cfg.s);
            let initial_l2 = norm(&psi0, NormKind::L2)?.value;
            let ref_hs = homogeneous_sobolev_norm(&a_h, cfg.s);
            let ref_l2 = h.powf(cfg.s) * norm(&a_h, NormKind::L2)?.value;
            Ok(ScalingRow {
                h,
                epsilon: eps,
                t_h: tau * eps * h * h,
                hk,
                initial_hs,
                initial_l2,
                identity_hs_error: (initial_hs - ref_hs).abs() / ref_hs,
                identity_l2_error: (initial_l2 - ref_l2).abs() / ref_l2,
                oscillatory_fraction: high_mode_fraction(u, 0.5 * w_max / eps),
            })
        })();
        match result {
            Ok(r) => rows.push(r),
            Err(e) if row_failure(&e) => failures.push(RowFailure::new(eps, &e)),
            Err(e) => return Err(e),
        }
    }
    let ratios = rows
        .windows(2)
        .map(|w| w[1].hk.iter().zip(&w[0].hk).map(|(b, a)| b / a).collect())
        .collect();
    let oscillation_ok = rows
        .iter()
        .all(|r| r.oscillatory_fraction >= cfg.oscillation_threshold);
    Ok(ScalingReport {
        tau,
        epsilon_exponent: cfg.epsilon_exponent(),
        k_threshold: cfg.k_threshold(),
        rows,
        failures,
        ratios,
        oscillation_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law_fits_exactly() {
        let p = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = p.iter().map(|x: &f64| 3.0 * x.powf(1.7)).collect();
        let fit = convergence_fit(&p, &e).unwrap();
        assert!((fit.slope - 1.7).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
        let flat = convergence_fit(&p, &[2.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_fit_stays_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = [0.4, 0.2, 0.1, 0.05];
        for _ in 0..200 {
            let e: Vec<f64> = p
                .iter()
                .map(|x: &f64| 0.8 * x.powi(2) * (1.0 + rng.gen_range(-0.05..0.05)))
                .collect();
            let fit = convergence_fit(&p, &e).unwrap();
            assert!((fit.slope - 2.0).abs() <= 0.15, "slope {}", fit.slope);
        }
    }

    #[test]
    fn fit_rejects_nonpositive_errors() {
        assert!(convergence_fit(&[0.4, 0.2, 0.1], &[1.0, 0.0, 1.0]).is_err());
        assert!(convergence_fit(&[0.4, 0.2], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn table_requires_decreasing_parameters() {
        let rows = |ps: &[f64]| {
            ps.iter()
                .map(|&p| ConvergenceRow {
                    parameter: p,
                    errors: vec![p],
                })
                .collect::<Vec<_>>()
        };
        assert!(ConvergenceTable::new("e", vec![NormKind::L2], rows(&[0.1, 0.2, 0.3])).is_err());
        let t = ConvergenceTable::new("e", vec![NormKind::L2], rows(&[0.3, 0.2, 0.1])).unwrap();
        assert!((t.fitted_slope() - 1.0).abs() < 1e-12);
        let run = t.running_slopes(0);
        assert!(run[0].is_nan() && (run[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_snapshot_audit_is_zero() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.2, 1.0, 1.0, 3).unwrap();
        let u = crate::physics::gaussian_bump(&grid, 1.0, 1.0);
        let r = conservation_audit(&[u.clone(), u], &p).unwrap();
        assert_eq!(r.mass_drift, 0.0);
        assert_eq!(r.energy_drift, Some(0.0));
    }

    #[test]
    fn homogeneous_sweep_is_exact() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let data = WkbData::new(
            vec![Field::constant(&grid, Complex64::new(0.7, 0.1))],
            Field::zeros(&grid),
            None,
        )
        .unwrap();
        let p = PhysicsParams::new(0.4, 1.0, 1.0, 3).unwrap();
        let settings = SweepSettings {
            t_final: 0.1,
            dt_policy: DtPolicy { constant: 0.1 },
            grenier_dt: 0.025,
            sample_spacing: 0.05,
            s_prime: 1.0,
            regularity: 4.0,
            guard: GuardConfig::default(),
            depth: 2,
        };
        let sweep = epsilon_sweep(&data, &p, &[0.4, 0.2, 0.1], &[0, 1], &settings, true).unwrap();
        for row in &sweep.rows {
            assert!(row.wkb.iter().all(|e| e[0] < 1e-9), "{:?}", row.wkb);
            let g = row.grenier.as_ref().unwrap();
            assert!(g.cross < 1e-9 && g.amplitude0[0] < 1e-12);
        }
    }

    #[test]
    fn scaling_thresholds() {
        let cfg = ScalingConfig {
            s: 0.25,
            gamma: 3.0,
            lambda: 1.0,
            dim: 5,
            h_values: vec![0.5, 0.25],
            k_values: vec![1.0],
            tau: Some(0.1),
            log_damping: false,
            surrogate_dim: 3,
            surrogate_gamma: 1.0,
            phase_deviation: 0.5,
            tau_max: 1.0,
            tau_tolerance: 1e-3,
            tau_steps: 4,
            oscillation_threshold: 0.2,
            dt_policy: DtPolicy { constant: 0.1 },
        };
        cfg.validate().unwrap();
        assert!((cfg.epsilon_exponent() - 0.25).abs() < 1e-15);
        assert!((cfg.k_threshold() - 0.2).abs() < 1e-15);
        let bad = ScalingConfig { s: 0.6, dim: 3, ..cfg };
        match bad.validate() {
            Err(Error::Config(v)) => assert!(v.len() >= 2),
            other => panic!("{other:?}"),
        }
    }
}
