//! Split-step solver for `iε u_t + (ε²/2)Δu = λ(|x|^{-γ} ∗ |u|²)u`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Field, Spectrum};
use crate::grid::{Grid, PAR_CHUNK};
use crate::physics::{PhysicsParams, WkbData};
use crate::spectral::{forward, gradient, inverse, inverse_real, RieszKernel};

/// Fraction of spectral energy allowed outside the reported extent.
pub const SPECTRAL_TAIL: f64 = 1e-10;

/// Default Courant-like constant of the time-step policy.
pub const DEFAULT_DT_CONSTANT: f64 = 0.1;

/// `dt <= min(C_t ε, C_t h²/ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtPolicy {
    pub constant: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy {
            constant: DEFAULT_DT_CONSTANT,
        }
    }
}

impl DtPolicy {
    pub fn max_dt(&self, epsilon: f64, spacing: f64) -> f64 {
        (self.constant * epsilon).min(self.constant * spacing * spacing / epsilon)
    }

    /// Largest step `<= max_dt` that divides `gap` into an integer count.
    pub fn step_for(&self, epsilon: f64, spacing: f64, gap: f64) -> (f64, usize) {
        uniform_step(gap, self.max_dt(epsilon, spacing))
    }
}

/// Splits `gap` into the fewest equal steps no longer than `max_dt`.
pub fn uniform_step(gap: f64, max_dt: f64) -> (f64, usize) {
    if gap <= 0.0 {
        return (max_dt, 0);
    }
    let n = (gap / max_dt - 1e-9).ceil().max(1.0) as usize;
    (gap / n as f64, n)
}

/// Smallest radius `R` with `Σ_{|ξ|>R} |f̂|² <= tail · Σ |f̂|²`.
pub fn spectral_extent(f: &Field, tail: f64) -> f64 {
    let s = forward(f);
    let k2 = f.grid().k_squared();
    let mut modes: Vec<(f64, f64)> = s
        .coeffs()
        .iter()
        .zip(k2)
        .map(|(c, &k)| (k, c.norm_sqr()))
        .collect();
    let total: f64 = modes.iter().map(|m| m.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    for (k, e) in modes {
        acc += e;
        if acc > tail * total {
            return k.sqrt();
        }
    }
    0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub phase_frequency: f64,
    pub amplitude_extent: f64,
    pub required: f64,
    pub available: f64,
}

impl ResolutionReport {
    pub fn ok(&self) -> bool {
        self.required <= self.available
    }
}

/// Compares `max|∇φ₀|/ε + max_j extent(a_j)` with the dealiasing cutoff.
pub fn resolution_report(data: &WkbData, epsilon: f64) -> Result<ResolutionReport> {
    let grid = data.grid();
    let phase_frequency = gradient(&data.phase0)?.max_magnitude() / epsilon;
    let mut amplitude_extent: f64 = 0.0;
    for a in &data.amplitudes {
        amplitude_extent = amplitude_extent.max(spectral_extent(a, SPECTRAL_TAIL));
    }
    if let Some(r) = &data.remainder {
        amplitude_extent = amplitude_extent.max(spectral_extent(r, SPECTRAL_TAIL));
    }
    Ok(ResolutionReport {
        phase_frequency,
        amplitude_extent,
        required: phase_frequency + amplitude_extent,
        available: grid.dealias_cutoff(),
    })
}

pub fn check_resolution(data: &WkbData, epsilon: f64) -> Result<ResolutionReport> {
    let r = resolution_report(data, epsilon)?;
    if !r.ok() {
        return Err(Error::Resolution(format!(
            "oscillation scale {:.4} (phase {:.4} + amplitude {:.4}) exceeds the dealiased band {:.4}",
            r.required, r.phase_frequency, r.amplitude_extent, r.available
        )));
    }
    Ok(r)
}

/// `λ · dealias(|x|^{-γ} ∗ |u|²)`.
pub fn hartree_potential(u: &Field, params: &PhysicsParams) -> Result<Field> {
    let kernel = RieszKernel::new(u.grid(), params.gamma)?;
    Ok(potential_with(&kernel, params.lambda, u))
}

fn potential_with(kernel: &RieszKernel, lambda: f64, u: &Field) -> Field {
    let grid = u.grid();
    let rho = u.abs_sq();
    let symbol = kernel.symbol();
    let s = forward(&rho).apply_real(|idx| {
        if grid.in_dealias_band(idx) {
            lambda * symbol[idx]
        } else {
            0.0
        }
    });
    inverse_real(&s)
}

/// `(Σ_j ε^j a_j + ε^N r_N) e^{iφ₀/ε}`.
pub fn initial_wave(data: &WkbData, params: &PhysicsParams) -> Result<Field> {
    let a = data.initial_amplitude(params.epsilon)?;
    let inv_eps = 1.0 / params.epsilon;
    a.zip_map(&data.phase0, |a, p| a * Complex64::from_polar(1.0, p.re * inv_eps))
}

/// Free-flow multiplier `e^{-iε|ξ|²τ/2}`.
fn kinetic_symbol(grid: &Grid, epsilon: f64, tau: f64) -> Vec<Complex64> {
    grid.k_squared()
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|&k2| Complex64::from_polar(1.0, -0.5 * epsilon * k2 * tau))
        .collect()
}

fn apply_symbol(u: &Field, symbol: &[Complex64]) -> Field {
    inverse(&forward(u).apply(|idx| symbol[idx]))
}

fn apply_potential(u: &Field, v: &Field, factor: f64) -> Field {
    u.zip_map(v, |z, w| z * Complex64::from_polar(1.0, -w.re * factor))
        .expect("potential shares the wave's grid")
}

/// One Strang step: half kinetic, exact potential, half kinetic.
pub fn strang_step(u: &Field, dt: f64, params: &PhysicsParams) -> Result<Field> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let kernel = RieszKernel::new(u.grid(), params.gamma)?;
    let half = kinetic_symbol(u.grid(), params.epsilon, 0.5 * dt);
    let u = apply_symbol(u, &half);
    let v = potential_with(&kernel, params.lambda, &u);
    let u = apply_potential(&u, &v, dt / params.epsilon);
    Ok(apply_symbol(&u, &half))
}

/// `E = (ε²/2)‖∇u‖² + (λ/2)⟨dealias(K ∗ |u|²), |u|²⟩`.
pub fn energy(u: &Field, params: &PhysicsParams) -> Result<f64> {
    let kernel = RieszKernel::new(u.grid(), params.gamma)?;
    Ok(energy_with(&kernel, params, u))
}

fn energy_with(kernel: &RieszKernel, params: &PhysicsParams, u: &Field) -> f64 {
    let grid = u.grid();
    let s = forward(u);
    let k2 = grid.k_squared();
    let grad2: f64 = s
        .coeffs()
        .iter()
        .zip(k2)
        .map(|(c, &k)| k * c.norm_sqr())
        .sum::<f64>()
        / grid.volume();
    let v = potential_with(kernel, params.lambda, u);
    let pot: f64 = v
        .values()
        .iter()
        .zip(u.values())
        .map(|(w, z)| w.re * z.norm_sqr())
        .sum::<f64>()
        * grid.cell_volume();
    0.5 * params.epsilon * params.epsilon * grad2 + 0.5 * pot
}

pub fn mass(u: &Field) -> f64 {
    u.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * u.grid().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct DirectRun {
    pub snapshots: Vec<(f64, Field)>,
    pub diagnostics: Vec<DirectDiagnostics>,
    pub steps: usize,
    pub resolution: ResolutionReport,
}

impl DirectRun {
    pub fn last(&self) -> &Field {
        &self.snapshots.last().expect("at least one snapshot").1
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|(_, f)| f)
    }

    /// Largest relative mass change over the snapshots.
    pub fn mass_drift(&self) -> f64 {
        relative_drift(self.diagnostics.iter().map(|d| d.mass))
    }

    pub fn energy_drift(&self) -> f64 {
        relative_drift(self.diagnostics.iter().map(|d| d.energy))
    }
}

pub(crate) fn relative_drift(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let scale = first.abs().max(f64::MIN_POSITIVE);
    values
        .iter()
        .map(|v| (v - first).abs() / scale)
        .fold(0.0, f64::max)
}

/// Validates sample times and returns the step count for each gap, starting
/// from `t = 0`.
pub(crate) fn segment_steps(t_final: f64, dt: f64, sample_times: &[f64]) -> Result<Vec<usize>> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::Domain(format!("final time must be nonnegative, got {t_final}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if sample_times.is_empty() {
        return Err(Error::Structural("no sample times requested".into()));
    }
    let tol = 1e-9 * t_final.max(1.0);
    let mut prev = 0.0;
    let mut counts = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        if t < prev - tol || t > t_final + tol {
            return Err(Error::Structural(format!(
                "sample times must be sorted within [0, {t_final}], got {t}"
            )));
        }
        let gap = (t - prev).max(0.0);
        let n = (gap / dt).round();
        if (n * dt - gap).abs() > tol {
            return Err(Error::Structural(format!(
                "time step {dt} does not divide the sample gap {gap}"
            )));
        }
        counts.push(n as usize);
        prev = t;
    }
    Ok(counts)
}

/// Repeated Strang steps from `initial_wave`, with snapshots at
/// `sample_times`. Adjacent half kinetic steps inside a sample gap are fused.
pub fn evolve_direct(
    data: &WkbData,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<DirectRun> {
    params.validate()?;
    let counts = segment_steps(t_final, dt, sample_times)?;
    let resolution = check_resolution(data, params.epsilon)?;
    let grid = data.grid().clone();
    let kernel = RieszKernel::new(&grid, params.gamma)?;
    let half = kinetic_symbol(&grid, params.epsilon, 0.5 * dt);
    let full = kinetic_symbol(&grid, params.epsilon, dt);
    let factor = dt / params.epsilon;

    let mut u = initial_wave(data, params)?;
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut diagnostics = Vec::with_capacity(sample_times.len());
    let mut step = 0usize;
    for (&t, &n) in sample_times.iter().zip(&counts) {
        if n > 0 {
            let mut s: Spectrum = forward(&u).apply(|idx| half[idx]);
            for j in 0..n {
                let w = inverse(&s);
                let v = potential_with(&kernel, params.lambda, &w);
                let w = apply_potential(&w, &v, factor);
                step += 1;
                if w.has_non_finite() {
                    return Err(Error::BlowUp {
                        step,
                        time: step as f64 * dt,
                    });
                }
                let symbol = if j + 1 == n { &half } else { &full };
                s = forward(&w).apply(|idx| symbol[idx]);
            }
            u = inverse(&s);
        }
        if u.has_non_finite() {
            return Err(Error::BlowUp { step, time: t });
        }
        diagnostics.push(DirectDiagnostics {
            time: t,
            mass: mass(&u),
            energy: energy_with(&kernel, params, &u),
        });
        snapshots.push((t, u.clone()));
    }
    Ok(DirectRun {
        snapshots,
        diagnostics,
        steps: step,
        resolution,
    })
}
