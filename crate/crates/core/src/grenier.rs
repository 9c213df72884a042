//! The phase/amplitude system in velocity form,
//!
//! ```text
//! a_t + v·∇a + ½ a ∇·v = i(ε/2) Δa
//! v_t + v·∇v + λ ∇(|x|^{-γ} ∗ |a|²) = 0,
//! ```
//!
//! its mollified variant, phase reconstruction and recomposition of the wave
//! function `u = a e^{iφ/ε}`.
//!
//! The integrator keeps `(â, v̂)` in spectral space, dealiased to the
//! two-thirds band, and advances it with integrating-factor RK4; the
//! dispersive term of the amplitude equation is integrated exactly.

use std::borrow::Cow;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::direct::{segment_steps, spectral_extent, SPECTRAL_TAIL};
use crate::error::{Error, Result};
use crate::field::{Field, Spectrum, VectorField};
use crate::grid::{Grid, PAR_CHUNK};
use crate::integrator::{if_rk4_step, Propagator};
use crate::norms::sobolev_norm_spectrum;
use crate::physics::{PhysicsParams, WkbData};
use crate::spectral::{
    derivative_spectrum, dealias_spectrum, forward, forward_real_pair, gradient, inverse,
    inverse_real, inverse_real_pair, mollifier_symbol, RieszKernel,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitude, velocity and time.
#[derive(Debug, Clone, PartialEq)]
pub struct WkbState {
    pub a: Field,
    pub v: VectorField,
    pub time: f64,
}

impl WkbState {
    pub fn new(a: Field, v: VectorField, time: f64) -> Result<WkbState> {
        a.grid().check_same(v.grid())?;
        Ok(WkbState { a, v, time })
    }

    /// `(a₀^ε, ∇φ₀)` at `t = 0`.
    pub fn initial(data: &WkbData, epsilon: f64) -> Result<WkbState> {
        WkbState::new(data.initial_amplitude(epsilon)?, gradient(&data.phase0)?, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorM {
    pub t: f64,
    pub value: f64,
    pub s_used: f64,
}

/// Thresholds of the breakdown guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuardConfig {
    /// Sobolev index of `M(t)`; must exceed `n/2 + 1`.
    pub s: f64,
    /// Trip when `M(t) > threshold · M(0)`.
    pub threshold: f64,
    /// Trip when `‖∇v‖_∞` exceeds this.
    pub grad_cap: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            s: 4.0,
            threshold: 25.0,
            grad_cap: 20.0,
        }
    }
}

impl GuardConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let lo = dim as f64 / 2.0 + 1.0;
        if !(self.s > lo) {
            return Err(Error::Constraint(format!(
                "guard index s = {} must exceed n/2 + 1 = {lo}",
                self.s
            )));
        }
        if !(self.threshold > 1.0 && self.grad_cap > 0.0) {
            return Err(Error::Constraint(
                "guard threshold must exceed 1 and the gradient cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardEvent {
    pub time: f64,
    pub last_valid_time: f64,
    pub reason: String,
}

impl From<GuardEvent> for Error {
    fn from(e: GuardEvent) -> Error {
        Error::GuardTrip {
            time: e.time,
            last_valid_time: e.last_valid_time,
            reason: e.reason,
        }
    }
}

/// Per-step health record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub monitor: MonitorM,
    /// `‖a‖²_{L²}`.
    pub mass: f64,
    /// `‖curl v‖_{L²} / ‖∇v‖_{L²}` (zero when `∇v = 0`).
    pub curl: f64,
    pub grad_v_max: f64,
    pub v_max: f64,
}

/// Inverse transforms spectra of real fields, two per complex FFT.
pub(crate) fn inverse_reals(specs: &[&Spectrum]) -> Vec<Field> {
    let mut out = Vec::with_capacity(specs.len());
    for pair in specs.chunks(2) {
        match pair {
            [x, y] => {
                let (a, b) = inverse_real_pair(x, y).expect("spectra share one grid");
                out.push(a);
                out.push(b);
            }
            [x] => out.push(inverse_real(x)),
            _ => unreachable!(),
        }
    }
    out
}

pub(crate) fn forward_reals(fields: &[&Field]) -> Vec<Spectrum> {
    let mut out = Vec::with_capacity(fields.len());
    for pair in fields.chunks(2) {
        match pair {
            [x, y] => {
                let (a, b) = forward_real_pair(x, y).expect("fields share one grid");
                out.push(a);
                out.push(b);
            }
            [x] => out.push(forward(x)),
            _ => unreachable!(),
        }
    }
    out
}

fn collect_complex(grid: &Grid, f: impl Fn(usize) -> Complex64 + Sync + Send) -> Vec<Complex64> {
    (0..grid.len())
        .into_par_iter()
        .with_min_len(PAR_CHUNK)
        .map(f)
        .collect()
}

/// Dealiased transport and potential terms of the (mollified) system.
#[derive(Debug, Clone)]
pub(crate) struct Dynamics {
    grid: Grid,
    epsilon: f64,
    delta: f64,
    /// `J_δ` symbol, absent at `δ = 0`.
    mollifier: Option<Vec<f64>>,
    /// `J_δ` times the band mask.
    outer: Vec<f64>,
    band: Vec<f64>,
    /// `λ K̂ J_δ`, band-limited.
    potential: Vec<f64>,
    /// `λ K̂`, band-limited.
    plain_potential: Vec<f64>,
}

impl Dynamics {
    pub fn new(grid: &Grid, params: &PhysicsParams, delta: f64) -> Result<Dynamics> {
        let kernel = RieszKernel::new(grid, params.gamma)?;
        let j = mollifier_symbol(grid, delta)?;
        let band: Vec<f64> = (0..grid.len())
            .map(|idx| if grid.in_dealias_band(idx) { 1.0 } else { 0.0 })
            .collect();
        let symbol = kernel.symbol();
        let plain_potential: Vec<f64> = (0..grid.len())
            .map(|idx| params.lambda * symbol[idx] * band[idx])
            .collect();
        let (mollifier, outer, potential) = if delta == 0.0 {
            (None, band.clone(), plain_potential.clone())
        } else {
            let outer = j.iter().zip(&band).map(|(a, b)| a * b).collect();
            let potential = plain_potential.iter().zip(&j).map(|(a, b)| a * b).collect();
            (Some(j), outer, potential)
        };
        Ok(Dynamics {
            grid: grid.clone(),
            epsilon: params.epsilon,
            delta,
            mollifier,
            outer,
            band,
            potential,
            plain_potential,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn band(&self) -> &[f64] {
        &self.band
    }

    /// `λ K̂` restricted to the band.
    pub fn plain_potential(&self) -> &[f64] {
        &self.plain_potential
    }

    fn mollified<'a>(&self, s: &'a Spectrum) -> Cow<'a, Spectrum> {
        match &self.mollifier {
            None => Cow::Borrowed(s),
            Some(j) => Cow::Owned(s.apply_real(|idx| j[idx])),
        }
    }

    /// Generator `-i(ε/2)|ξ|² J_δ²` of the amplitude's dispersive flow.
    pub fn dispersion(&self, idx: usize) -> Complex64 {
        let k2 = self.grid.k_squared()[idx];
        let j2 = (-2.0 * self.delta * self.delta * k2).exp();
        Complex64::new(0.0, -0.5 * self.epsilon * k2 * j2)
    }

    pub fn propagator(&self, dt: f64) -> Option<Propagator> {
        if self.epsilon == 0.0 {
            None
        } else {
            Some(Propagator::new(self.grid.len(), dt, |idx| self.dispersion(idx)))
        }
    }

    /// `-(J(v·∇Ja) + ½ a ∇·Jv)` and `-(J(v·∇Jv) + λ∇J(K ∗ |a|²))`.
    pub fn nonlinear(&self, a: &Spectrum, v: &[Spectrum]) -> (Spectrum, Vec<Spectrum>) {
        let n = self.grid.dim();
        let ja = self.mollified(a);
        let jv: Vec<Cow<Spectrum>> = v.iter().map(|s| self.mollified(s)).collect();

        let a_phys = inverse(a);
        let grad_ja: Vec<Field> = (0..n)
            .map(|i| inverse(&derivative_spectrum(&ja, i)))
            .collect();

        let mut div = Spectrum::zeros(&self.grid);
        let mut dv = Vec::with_capacity(n * n);
        for (j, s) in jv.iter().enumerate() {
            for i in 0..n {
                let d = derivative_spectrum(s, i);
                if i == j {
                    div.axpy(Complex64::new(1.0, 0.0), &d)
                        .expect("components share one grid");
                }
                dv.push(d);
            }
        }
        let mut reals: Vec<&Spectrum> = v.iter().collect();
        reals.push(&div);
        reals.extend(dv.iter());
        let phys = inverse_reals(&reals);
        let (vp, rest) = phys.split_at(n);
        let (divp, dvp) = rest.split_at(1);
        let divp = divp[0].values();
        let vv: Vec<&[Complex64]> = vp.iter().map(|f| f.values()).collect();
        let gv: Vec<&[Complex64]> = grad_ja.iter().map(|f| f.values()).collect();
        let av = a_phys.values();

        let split = self.mollifier.is_some();
        let transport = collect_complex(&self.grid, |idx| {
            let mut acc = ZERO;
            for i in 0..n {
                acc += gv[i][idx] * vv[i][idx].re;
            }
            if !split {
                acc += av[idx] * (0.5 * divp[idx].re);
            }
            acc
        });
        let mut da = forward(&Field::complex_unchecked(&self.grid, transport));
        let outer = &self.outer;
        if split {
            let source = collect_complex(&self.grid, |idx| av[idx] * (0.5 * divp[idx].re));
            let s = forward(&Field::complex_unchecked(&self.grid, source));
            let band = &self.band;
            let sc = s.coeffs();
            da.coeffs_mut()
                .par_iter_mut()
                .enumerate()
                .with_min_len(PAR_CHUNK)
                .for_each(|(idx, c)| *c = -(*c * outer[idx] + sc[idx] * band[idx]));
        } else {
            da.coeffs_mut()
                .par_iter_mut()
                .enumerate()
                .with_min_len(PAR_CHUNK)
                .for_each(|(idx, c)| *c = -(*c * outer[idx]));
        }

        let mut fields: Vec<Field> = (0..n)
            .map(|j| {
                let values = collect_complex(&self.grid, |idx| {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += vv[i][idx].re * dvp[j * n + i].values()[idx].re;
                    }
                    Complex64::new(acc, 0.0)
                });
                Field::real_from_complex(&self.grid, values)
            })
            .collect();
        fields.push(a_phys.abs_sq());
        let refs: Vec<&Field> = fields.iter().collect();
        let mut specs = forward_reals(&refs);
        let rho = specs.pop().expect("density spectrum");
        let pot = &self.potential;
        let rc = rho.coeffs();
        let dvdt = specs
            .into_iter()
            .enumerate()
            .map(|(j, mut s)| {
                let k = self.grid.odd_derivative_symbol(j);
                s.coeffs_mut()
                    .par_iter_mut()
                    .enumerate()
                    .with_min_len(PAR_CHUNK)
                    .for_each(|(idx, c)| {
                        *c = -(*c * outer[idx] + Complex64::new(0.0, k[idx]) * (rc[idx] * pot[idx]))
                    });
                s
            })
            .collect();
        (da, dvdt)
    }

    /// `P(½|v|² + λ K ∗ |a|²)` from physical fields.
    pub fn phase_integrand(&self, a: &Field, v: &VectorField) -> Field {
        let half_v2 = v.magnitude_sq().scale_real(0.5);
        let (sv, sr) = forward_real_pair(&half_v2, &a.abs_sq()).expect("fields share one grid");
        let pot = &self.plain_potential;
        let band = &self.band;
        let rc = sr.coeffs();
        let s = sv.apply(|idx| Complex64::new(band[idx], 0.0));
        let s = Spectrum::new_unchecked(
            &self.grid,
            s.coeffs()
                .iter()
                .enumerate()
                .map(|(idx, c)| c + rc[idx] * pot[idx])
                .collect(),
        );
        inverse_real(&s)
    }
}

pub(crate) fn to_spectral(state: &WkbState) -> Vec<Spectrum> {
    let mut out = vec![dealias_spectrum(&forward(&state.a))];
    let comps: Vec<&Field> = state.v.components().iter().collect();
    out.extend(forward_reals(&comps).iter().map(dealias_spectrum));
    out
}

pub(crate) fn to_physical(u: &[Spectrum], time: f64) -> WkbState {
    let a = inverse(&u[0]);
    let refs: Vec<&Spectrum> = u[1..].iter().collect();
    let v = VectorField::new(inverse_reals(&refs)).expect("velocity components");
    WkbState { a, v, time }
}

/// Spectral `L²` norm squared, `L^{-n} Σ |f̂|²`.
fn l2_sq(s: &Spectrum) -> f64 {
    s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() / s.grid().volume()
}

pub(crate) fn diagnostics(u: &[Spectrum], time: f64, s: f64) -> StepDiagnostics {
    let grid = u[0].grid();
    let n = grid.dim();
    let a_hs = sobolev_norm_spectrum(&u[0], s);
    let mut grad = Vec::with_capacity(n * n);
    for vj in &u[1..] {
        for i in 0..n {
            grad.push(derivative_spectrum(vj, i));
        }
    }
    let grad_hs_sq: f64 = grad.iter().map(|d| sobolev_norm_spectrum(d, s).powi(2)).sum();
    let grad_l2_sq: f64 = grad.iter().map(l2_sq).sum();
    let mut curl_sq = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = grad[j * n + i].sub(&grad[i * n + j]).expect("shared grid");
            curl_sq += l2_sq(&c);
        }
    }
    let mut reals: Vec<&Spectrum> = u[1..].iter().collect();
    reals.extend(grad.iter());
    let phys = inverse_reals(&reals);
    let (v, g) = phys.split_at(n);
    let len = grid.len();
    let mut v_max_sq: f64 = 0.0;
    let mut g_max_sq: f64 = 0.0;
    for idx in 0..len {
        let vs: f64 = v.iter().map(|f| f.values()[idx].re.powi(2)).sum();
        let gs: f64 = g.iter().map(|f| f.values()[idx].re.powi(2)).sum();
        v_max_sq = v_max_sq.max(vs);
        g_max_sq = g_max_sq.max(gs);
    }
    StepDiagnostics {
        monitor: MonitorM {
            t: time,
            value: a_hs * a_hs + grad_hs_sq + v_max_sq,
            s_used: s,
        },
        mass: l2_sq(&u[0]),
        curl: if grad_l2_sq > 0.0 {
            (curl_sq / grad_l2_sq).sqrt()
        } else {
            0.0
        },
        grad_v_max: g_max_sq.sqrt(),
        v_max: v_max_sq.sqrt(),
    }
}

/// `M(t) = ‖a‖²_{H^s} + ‖∇v‖²_{H^s} + ‖v‖²_{L^∞}`.
pub fn monitor(state: &WkbState, s: f64) -> MonitorM {
    diagnostics(&to_spectral(state), state.time, s).monitor
}

/// Compares `M(t)` and `‖∇v‖_∞` of `state` with the guard thresholds;
/// `m0` is `M(0)`.
pub fn wellposedness_guard(
    state: &WkbState,
    m0: f64,
    config: &GuardConfig,
) -> Result<std::result::Result<MonitorM, GuardEvent>> {
    config.validate(state.grid().dim())?;
    let d = diagnostics(&to_spectral(state), state.time, config.s);
    Ok(judge(&d, m0, config, state.time))
}

pub(crate) fn judge(
    d: &StepDiagnostics,
    m0: f64,
    config: &GuardConfig,
    last_valid: f64,
) -> std::result::Result<MonitorM, GuardEvent> {
    let t = d.monitor.t;
    if d.monitor.value > config.threshold * m0 {
        return Err(GuardEvent {
            time: t,
            last_valid_time: last_valid,
            reason: format!(
                "M(t)/M(0) = {:.4e} exceeds {}",
                d.monitor.value / m0,
                config.threshold
            ),
        });
    }
    if d.grad_v_max > config.grad_cap {
        return Err(GuardEvent {
            time: t,
            last_valid_time: last_valid,
            reason: format!(
                "‖∇v‖_∞ = {:.4e} exceeds cap {}",
                d.grad_v_max, config.grad_cap
            ),
        });
    }
    Ok(d.monitor)
}

/// Explicit right-hand sides `(∂_t a, ∂_t v)` of the unmollified system.
pub fn grenier_rhs(state: &WkbState, params: &PhysicsParams) -> Result<(Field, VectorField)> {
    regularized_rhs(state, params, 0.0)
}

/// Explicit right-hand sides of the mollified system
///
/// ```text
/// a_t = -J(v·∇Ja) - ½ a ∇·Jv + i(ε/2) Δ J² a
/// v_t = -J(v·∇Jv) - λ ∇J(K ∗ |a|²)
/// ```
pub fn regularized_rhs(
    state: &WkbState,
    params: &PhysicsParams,
    delta: f64,
) -> Result<(Field, VectorField)> {
    params.check_limit_epsilon()?;
    let dynamics = Dynamics::new(state.grid(), params, delta)?;
    let u = to_spectral(state);
    let (mut da, dv) = dynamics.nonlinear(&u[0], &u[1..]);
    let a = u[0].coeffs();
    da.coeffs_mut()
        .iter_mut()
        .enumerate()
        .for_each(|(idx, c)| *c += dynamics.dispersion(idx) * a[idx]);
    let refs: Vec<&Spectrum> = dv.iter().collect();
    Ok((inverse(&da), VectorField::new(inverse_reals(&refs))?))
}

/// Integration settings beyond the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrenierOptions {
    pub guard: GuardConfig,
    pub delta: f64,
}

impl Default for GrenierOptions {
    fn default() -> Self {
        GrenierOptions {
            guard: GuardConfig::default(),
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrenierRun {
    pub snapshots: Vec<WkbState>,
    /// One record per step, starting at `t = 0`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub steps: usize,
    pub dt: f64,
    pub trip: Option<GuardEvent>,
}

impl GrenierRun {
    pub fn last(&self) -> &WkbState {
        self.snapshots.last().expect("at least one snapshot")
    }

    pub fn completed(&self) -> bool {
        self.trip.is_none()
    }

    pub fn mass_drift(&self) -> f64 {
        crate::direct::relative_drift(self.diagnostics.iter().map(|d| d.mass))
    }

    pub fn max_curl(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.curl).fold(0.0, f64::max)
    }

    pub fn max_monitor_ratio(&self) -> f64 {
        let m0 = self.diagnostics[0].monitor.value;
        self.diagnostics
            .iter()
            .map(|d| d.monitor.value / m0)
            .fold(0.0, f64::max)
    }
}

/// Refuses states whose spectra reach past the dealiased band.
pub fn check_state_resolution(a: &Field, v: &VectorField) -> Result<()> {
    let cutoff = a.grid().dealias_cutoff();
    let mut extent = spectral_extent(a, SPECTRAL_TAIL);
    for c in v.components() {
        extent = extent.max(spectral_extent(c, SPECTRAL_TAIL));
    }
    if extent > cutoff {
        return Err(Error::Resolution(format!(
            "amplitude/velocity spectral extent {extent:.4} exceeds the dealiased band {cutoff:.4}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(u: &[Spectrum]) -> bool {
    u.iter()
        .all(|s| s.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite()))
}

/// Integrates from `(a0, v0)` and records a guard trip instead of failing.
pub fn integrate_grenier(
    a0: &Field,
    v0: &VectorField,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
    options: &GrenierOptions,
) -> Result<GrenierRun> {
    params.check_limit_epsilon()?;
    options.guard.validate(a0.grid().dim())?;
    let counts = segment_steps(t_final, dt, sample_times)?;
    check_state_resolution(a0, v0)?;
    let dynamics = Dynamics::new(a0.grid(), params, options.delta)?;
    let prop = dynamics.propagator(dt);
    let props: Vec<Option<&Propagator>> = std::iter::once(prop.as_ref())
        .chain(std::iter::repeat(None).take(a0.grid().dim()))
        .collect();

    let mut u = to_spectral(&WkbState::new(a0.clone(), v0.clone(), 0.0)?);
    let d0 = diagnostics(&u, 0.0, options.guard.s);
    if !d0.monitor.value.is_finite() {
        return Err(Error::BlowUp { step: 0, time: 0.0 });
    }
    let m0 = d0.monitor.value;
    let mut diags = vec![d0];
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut step = 0usize;
    let mut trip = None;
    'outer: for (&t_sample, &n) in sample_times.iter().zip(&counts) {
        for _ in 0..n {
            let next = if_rk4_step(&u, &props, dt, |s| {
                let (da, dv) = dynamics.nonlinear(&s[0], &s[1..]);
                let mut out = Vec::with_capacity(s.len());
                out.push(da);
                out.extend(dv);
                Ok(out)
            })?;
            step += 1;
            let time = step as f64 * dt;
            if !check_finite(&next) {
                return Err(Error::BlowUp { step, time });
            }
            let d = diagnostics(&next, time, options.guard.s);
            let last_valid = (step - 1) as f64 * dt;
            match judge(&d, m0, &options.guard, last_valid) {
                Ok(_) => {
                    diags.push(d);
                    u = next;
                }
                Err(event) => {
                    diags.push(d);
                    trip = Some(event);
                    break 'outer;
                }
            }
        }
        snapshots.push(to_physical(&u, t_sample));
    }
    Ok(GrenierRun {
        snapshots,
        diagnostics: diags,
        steps: step,
        dt,
        trip,
    })
}

/// Integrates the unmollified system with default guard thresholds; a trip
/// becomes [`Error::GuardTrip`].
pub fn evolve_grenier(
    a0: &Field,
    v0: &VectorField,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<GrenierRun> {
    evolve_grenier_with(a0, v0, params, t_final, dt, sample_times, &GrenierOptions::default())
}

pub fn evolve_grenier_with(
    a0: &Field,
    v0: &VectorField,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
    options: &GrenierOptions,
) -> Result<GrenierRun> {
    let run = integrate_grenier(a0, v0, params, t_final, dt, sample_times, options)?;
    match run.trip {
        Some(event) => Err(event.into()),
        None => Ok(run),
    }
}

/// Checks that `times` start at zero and are uniformly spaced; returns the
/// spacing.
pub(crate) fn uniform_spacing(times: &[f64]) -> Result<f64> {
    let Some(&t0) = times.first() else {
        return Err(Error::Structural("no snapshots".into()));
    };
    if t0.abs() > 1e-12 {
        return Err(Error::Structural(format!(
            "snapshots must start at t = 0, got {t0}"
        )));
    }
    if times.len() == 1 {
        return Ok(0.0);
    }
    let span = times[times.len() - 1] - t0;
    let h = span / (times.len() - 1) as f64;
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * h).abs() > 1e-9 * span.max(1.0) || !(h > 0.0) {
            return Err(Error::Structural(format!(
                "snapshot times are not uniform (t_{k} = {t}, spacing {h})"
            )));
        }
    }
    Ok(h)
}

/// Cumulative composite Simpson integrals `∫₀^{t_k} f` of uniformly sampled
/// fields; the first interval uses the three-point partial rule.
pub fn cumulative_simpson(samples: &[Field], h: f64) -> Result<Vec<Field>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid().clone();
    let combine = |terms: &[(f64, &Field)], base: Option<&Field>| -> Field {
        let values = collect_complex(&grid, |idx| {
            let mut acc = base.map_or(ZERO, |b| b.values()[idx]);
            for (w, f) in terms {
                acc += f.values()[idx] * *w;
            }
            acc
        });
        let real = base.is_none_or(|b| b.is_real()) && terms.iter().all(|(_, f)| f.is_real());
        if real {
            Field::real_from_complex(&grid, values)
        } else {
            Field::complex_unchecked(&grid, values)
        }
    };
    for f in samples {
        grid.check_same(f.grid())?;
    }
    let mut out = vec![Field::zeros(&grid)];
    if samples.len() == 1 {
        return Ok(out);
    }
    if samples.len() == 2 {
        out.push(combine(&[(0.5 * h, &samples[0]), (0.5 * h, &samples[1])], None));
        return Ok(out);
    }
    let w = h / 12.0;
    out.push(combine(
        &[
            (5.0 * w, &samples[0]),
            (8.0 * w, &samples[1]),
            (-w, &samples[2]),
        ],
        None,
    ));
    let third = h / 3.0;
    for k in 2..samples.len() {
        let next = combine(
            &[
                (third, &samples[k - 2]),
                (4.0 * third, &samples[k - 1]),
                (third, &samples[k]),
            ],
            Some(&out[k - 2]),
        );
        out.push(next);
    }
    Ok(out)
}

/// `φ(t) = φ₀ - ∫₀ᵗ (½|v|² + λ K ∗ |a|²) dτ` at each snapshot time.
pub fn reconstruct_phase(
    snapshots: &[WkbState],
    phase0: &Field,
    params: &PhysicsParams,
) -> Result<Vec<(f64, Field)>> {
    if !phase0.is_real() {
        return Err(Error::Structural("initial phase must be real".into()));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
    let h = uniform_spacing(&times)?;
    let dynamics = Dynamics::new(phase0.grid(), params, 0.0)?;
    let mut integrands = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        phase0.grid().check_same(s.grid())?;
        integrands.push(dynamics.phase_integrand(&s.a, &s.v));
    }
    let integrals = cumulative_simpson(&integrands, h)?;
    integrals
        .into_iter()
        .zip(times)
        .map(|(i, t)| Ok((t, phase0.sub(&i)?)))
        .collect()
}

/// `a e^{iφ/ε}`.
pub fn recompose(a: &Field, phi: &Field, epsilon: f64) -> Result<Field> {
    if !phi.is_real() {
        return Err(Error::Structural("phase must be real".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {epsilon}")));
    }
    let inv = 1.0 / epsilon;
    a.zip_map(phi, |z, p| z * Complex64::from_polar(1.0, p.re * inv))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    /// `(‖a_δ - a_ref‖²_{H^{s'}} + ‖v_δ - v_ref‖²_{H^{s'}})^{1/2}` at `T`.
    pub deviation: Option<f64>,
    pub trip: Option<GuardEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaStudy {
    pub rows: Vec<DeltaRow>,
    pub reference_delta: f64,
    pub s_prime: f64,
}

impl DeltaStudy {
    /// Deviations never grow by more than `slack` as `δ` shrinks.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let devs: Vec<f64> = self.rows.iter().filter_map(|r| r.deviation).collect();
        devs.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
    }
}

/// Runs the mollified system for each `δ` and measures the distance to the
/// run with the smallest `δ` at `T`.
#[allow(clippy::too_many_arguments)]
pub fn delta_limit_study(
    a0: &Field,
    v0: &VectorField,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    deltas: &[f64],
    s_prime: f64,
    guard: &GuardConfig,
) -> Result<DeltaStudy> {
    if deltas.len() < 2 {
        return Err(Error::Domain("δ study needs at least two values".into()));
    }
    if deltas.windows(2).any(|w| w[1] > w[0]) || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::Domain(
            "δ values must be nonnegative and sorted decreasing".into(),
        ));
    }
    let mut finals = Vec::with_capacity(deltas.len());
    let mut trips = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let options = GrenierOptions {
            guard: *guard,
            delta,
        };
        let run = integrate_grenier(a0, v0, params, t_final, dt, &[t_final], &options)?;
        trips.push(run.trip.clone());
        finals.push(if run.completed() {
            Some(to_spectral(run.last()))
        } else {
            None
        });
    }
    let reference = finals.last().cloned().flatten();
    let rows = deltas
        .iter()
        .zip(finals.iter().zip(trips))
        .map(|(&delta, (fin, trip))| {
            let deviation = match (fin, &reference) {
                (Some(x), Some(r)) => Some(
                    x.iter()
                        .zip(r)
                        .map(|(p, q)| {
                            sobolev_norm_spectrum(&p.sub(q).expect("shared grid"), s_prime).powi(2)
                        })
                        .sum::<f64>()
                        .sqrt(),
                ),
                _ => None,
            };
            DeltaRow {
                delta,
                deviation,
                trip,
            }
        })
        .collect();
    Ok(DeltaStudy {
        rows,
        reference_delta: *deltas.last().expect("nonempty"),
        s_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::gaussian_bump;
    use crate::spectral::{laplacian, riesz_zero_mode};

    fn bump_state(grid: &Grid) -> WkbState {
        let data = WkbData::new(
            vec![gaussian_bump(grid, 1.0, 1.0)],
            gaussian_bump(grid, 0.3, 1.0),
            None,
        )
        .unwrap();
        WkbState::initial(&data, 0.1).unwrap()
    }

    fn homogeneous(grid: &Grid, c: Complex64) -> WkbState {
        WkbState::new(Field::constant(grid, c), VectorField::zeros(grid), 0.0).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn homogeneous_rhs_vanishes() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.3, 1.0, 1.0, 3).unwrap();
        let s = homogeneous(&grid, Complex64::new(0.7, 0.2));
        for delta in [0.0, 0.3] {
            let (da, dv) = regularized_rhs(&s, &p, delta).unwrap();
            assert!(da.max_abs() < 1e-12);
            assert!(dv.max_magnitude() < 1e-12);
        }
    }

    #[test]
    fn epsilon_enters_only_through_the_laplacian() {
        let grid = Grid::new(3, 16, 8.0).unwrap();
        let s = bump_state(&grid);
        let p = PhysicsParams::new(0.3, -1.0, 1.0, 3).unwrap();
        let (da, dv) = grenier_rhs(&s, &p).unwrap();
        let (da0, dv0) = grenier_rhs(&s, &p.semiclassical_limit()).unwrap();
        let lap = laplacian(&crate::spectral::dealias(&s.a)).scale(Complex64::new(0.0, 0.15));
        assert!(max_diff(&da.sub(&da0).unwrap(), &lap) < 1e-12);
        assert!(dv.sub(&dv0).unwrap().max_magnitude() < 1e-14);
    }

    #[test]
    fn zero_delta_is_the_plain_system_bit_for_bit() {
        let grid = Grid::new(3, 16, 8.0).unwrap();
        let s = bump_state(&grid);
        let p = PhysicsParams::new(0.2, 1.0, 1.0, 3).unwrap();
        let (a1, v1) = grenier_rhs(&s, &p).unwrap();
        let (a2, v2) = regularized_rhs(&s, &p, 0.0).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn homogeneous_state_is_stationary() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.3, 1.0, 1.0, 3).unwrap();
        let c = Complex64::new(0.5, -0.1);
        let s = homogeneous(&grid, c);
        let run = evolve_grenier(&s.a, &s.v, &p, 0.5, 0.05, &[0.25, 0.5]).unwrap();
        for snap in &run.snapshots {
            assert!(snap.a.values().iter().all(|z| (z - c).norm() < 1e-12));
            assert!(snap.v.max_magnitude() < 1e-12);
        }
        assert!((run.max_monitor_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_has_zero_monitor() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.3, 1.0, 1.0, 3).unwrap();
        let s = homogeneous(&grid, ZERO);
        let run = evolve_grenier(&s.a, &s.v, &p, 0.2, 0.05, &[0.2]).unwrap();
        assert!(run.diagnostics.iter().all(|d| d.monitor.value == 0.0));
    }

    #[test]
    fn homogeneous_phase_is_linear_in_time() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.3, 0.7, 1.0, 3).unwrap();
        let c = Complex64::new(0.5, -0.1);
        let s = homogeneous(&grid, c);
        let times = [0.0, 0.1, 0.2, 0.3, 0.4];
        let run = evolve_grenier(&s.a, &s.v, &p, 0.4, 0.05, &times).unwrap();
        let phi0 = gaussian_bump(&grid, 0.2, 1.0);
        let phases = reconstruct_phase(&run.snapshots, &phi0, &p).unwrap();
        let rate = p.lambda * riesz_zero_mode(3, 1.0, 6.0) * c.norm_sqr();
        for (t, phi) in &phases {
            let expected = phi0.map(|z| z - rate * t);
            assert!(max_diff(phi, &expected) < 1e-10);
        }
        let zero = homogeneous(&grid, ZERO);
        let run = evolve_grenier(&zero.a, &zero.v, &p, 0.4, 0.05, &times).unwrap();
        let phases = reconstruct_phase(&run.snapshots, &phi0, &p).unwrap();
        assert!(phases.iter().all(|(_, f)| max_diff(f, &phi0) == 0.0));
    }

    #[test]
    fn phase_needs_uniform_snapshots() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let s = homogeneous(&grid, Complex64::new(1.0, 0.0));
        let mk = |t| WkbState { time: t, ..s.clone() };
        let p = PhysicsParams::new(0.3, 1.0, 1.0, 3).unwrap();
        let snaps = vec![mk(0.0), mk(0.1), mk(0.3)];
        assert!(matches!(
            reconstruct_phase(&snaps, &Field::zeros(&grid), &p),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let grid = Grid::new(1, 4, 1.0).unwrap();
        let h = 0.1;
        let f = |t: f64| 1.0 + t - 3.0 * t * t + 2.0 * t * t * t;
        let big_f = |t: f64| t + 0.5 * t * t - t.powi(3) + 0.5 * t.powi(4);
        let samples: Vec<Field> = (0..7)
            .map(|k| Field::constant(&grid, Complex64::new(f(k as f64 * h), 0.0)).real_part())
            .collect();
        let out = cumulative_simpson(&samples, h).unwrap();
        for (k, i) in out.iter().enumerate().skip(2).step_by(2) {
            assert!((i.values()[0].re - big_f(k as f64 * h)).abs() < 1e-14);
        }
        // The partial first-interval rule is exact for quadratics.
        let q: Vec<Field> = (0..3)
            .map(|k| Field::constant(&grid, Complex64::new((k as f64 * h).powi(2), 0.0)))
            .collect();
        let out = cumulative_simpson(&q, h).unwrap();
        assert!((out[1].values()[0].re - h.powi(3) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn recompose_cases() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let a = gaussian_bump(&grid, 1.0, 1.0).scale(Complex64::new(0.3, 0.4));
        let phi = gaussian_bump(&grid, 2.0, 0.7);
        assert_eq!(recompose(&a, &Field::zeros(&grid), 0.1).unwrap(), a);
        let u = recompose(&a, &phi, 0.1).unwrap();
        for (z, w) in u.values().iter().zip(a.values()) {
            assert!((z.norm() - w.norm()).abs() < 1e-15);
        }
        let u = recompose(&a, &phi, 1.0).unwrap();
        for ((z, w), p) in u.values().iter().zip(a.values()).zip(phi.values()) {
            assert!((z - w * Complex64::new(p.re.cos(), p.re.sin())).norm() < 1e-15);
        }
        assert!(recompose(&a, &a, 0.1).is_err());
    }

    #[test]
    fn guard_rejects_low_index() {
        let g = GuardConfig {
            s: 2.5,
            ..GuardConfig::default()
        };
        assert!(g.validate(3).is_err());
        assert!(GuardConfig::default().validate(3).is_ok());
    }

    #[test]
    fn delta_study_with_equal_deltas_is_zero() {
        let grid = Grid::new(3, 32, 8.0).unwrap();
        let s = bump_state(&grid);
        let p = PhysicsParams::new(0.2, 1.0, 1.0, 3).unwrap();
        let study =
            delta_limit_study(&s.a, &s.v, &p, 0.05, 0.025, &[0.2, 0.2], 2.0, &GuardConfig::default())
                .unwrap();
        assert!(study.rows.iter().all(|r| r.deviation == Some(0.0)));
        assert!(delta_limit_study(&s.a, &s.v, &p, 0.05, 0.025, &[0.1, 0.2], 2.0, &GuardConfig::default()).is_err());
    }
}
