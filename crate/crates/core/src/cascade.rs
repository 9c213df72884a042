//! Order-by-order expansion `a^ε = Σ ε^k b_k`, `v^ε = Σ ε^k w_k`,
//! `φ^ε = Σ ε^k φ_k`.
//!
//! Level 0 is the phase/amplitude system at `ε = 0`. For `k >= 1`
//!
//! ```text
//! ∂_t b_k + Σ_{i+j=k} w_i·∇b_j + ½ Σ_{i+j=k} b_i ∇·w_j - (i/2) Δb_{k-1} = 0
//! ∂_t w_k + Σ_{i+j=k} w_i·∇w_j + λ ∇(|x|^{-γ} ∗ Σ_{i+j=k} Re(b_i b̄_j)) = 0
//! ```
//!
//! with `b_k(0) = a_k`, `w_k(0) = 0`, and
//! `φ_k(t) = δ_{k0} φ₀ - ∫₀ᵗ (½ Σ_{i+j=k} w_i·w_j + λ K ∗ Σ_{i+j=k} Re(b_i b̄_j))`.
//! The pairing `Σ_{i+j=k} Re(b_i b̄_j)` is the order-`ε^k` coefficient of
//! `|a^ε|²`.
//!
//! All levels advance together under one RK4 step, so each level reads the
//! lower ones at exactly its own stage times; level 0 goes through the same
//! arithmetic as [`crate::grenier::evolve_grenier`] at `ε = 0`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, Spectrum, VectorField};
use crate::grenier::{
    check_finite, check_state_resolution, cumulative_simpson, diagnostics, forward_reals,
    inverse_reals, judge, to_physical, to_spectral, uniform_spacing, Dynamics, GuardConfig,
    StepDiagnostics, WkbState,
};
use crate::grid::{Grid, PAR_CHUNK};
use crate::integrator::{if_rk4_step, Propagator};
use crate::norms::{norm, NormKind};
use crate::physics::{PhysicsParams, WkbData};
use crate::spectral::{derivative_spectrum, forward, gradient, inverse, inverse_real};

/// Default deepest level.
pub const DEFAULT_ORDER: usize = 2;

/// Profiles `(b_k, w_k, φ_k)` at each snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLevel {
    pub k: usize,
    pub times: Vec<f64>,
    pub b: Vec<Field>,
    pub w: Vec<VectorField>,
    pub phi: Vec<Field>,
}

impl HierarchyLevel {
    pub fn grid(&self) -> &Grid {
        self.b[0].grid()
    }

    /// `‖∇φ_k - w_k‖_{L²}` at every snapshot.
    pub fn phase_gradient_mismatch(&self) -> Result<Vec<f64>> {
        self.phi
            .iter()
            .zip(&self.w)
            .map(|(p, w)| {
                let g = gradient(p)?.sub(w)?;
                vector_l2(&g)
            })
            .collect()
    }
}

pub(crate) fn vector_l2(v: &VectorField) -> Result<f64> {
    let mut acc = 0.0;
    for c in v.components() {
        acc += norm(c, NormKind::L2)?.value.powi(2);
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<HierarchyLevel>,
    pub order: usize,
    /// Level-0 health per step.
    pub diagnostics: Vec<StepDiagnostics>,
    pub steps: usize,
    pub dt: f64,
}

impl Hierarchy {
    pub fn times(&self) -> &[f64] {
        &self.levels[0].times
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times()
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

/// Physical fields of one level needed by the products.
struct LevelFields {
    b: Field,
    grad_b: Vec<Field>,
    w: Vec<Field>,
    div_w: Field,
    /// `dw[l * n + m] = ∂_m w_l`.
    dw: Vec<Field>,
}

impl LevelFields {
    fn new(b: &Spectrum, w: &[Spectrum]) -> LevelFields {
        let n = b.grid().dim();
        let b_phys = inverse(b);
        let grad_b = (0..n).map(|m| inverse(&derivative_spectrum(b, m))).collect();
        let mut div = Spectrum::zeros(b.grid());
        let mut dw = Vec::with_capacity(n * n);
        for (l, s) in w.iter().enumerate() {
            for m in 0..n {
                let d = derivative_spectrum(s, m);
                if l == m {
                    div.axpy(Complex64::new(1.0, 0.0), &d)
                        .expect("components share one grid");
                }
                dw.push(d);
            }
        }
        let mut reals: Vec<&Spectrum> = w.iter().collect();
        reals.push(&div);
        reals.extend(dw.iter());
        let mut phys = inverse_reals(&reals);
        let dw_phys = phys.split_off(n + 1);
        let div_w = phys.pop().expect("divergence");
        LevelFields {
            b: b_phys,
            grad_b,
            w: phys,
            div_w,
            dw: dw_phys,
        }
    }
}

fn par_collect(len: usize, f: impl Fn(usize) -> Complex64 + Sync + Send) -> Vec<Complex64> {
    (0..len)
        .into_par_iter()
        .with_min_len(PAR_CHUNK)
        .map(f)
        .collect()
}

/// Level-`k` products `Σ_{i+j=k} …` and the resulting right-hand side.
fn level_terms(
    dynamics: &Dynamics,
    k: usize,
    fields: &[LevelFields],
    b_prev: &Spectrum,
) -> (Spectrum, Vec<Spectrum>) {
    let grid = b_prev.grid();
    let n = grid.dim();
    let len = grid.len();
    let pairs: Vec<(usize, usize)> = (0..=k).map(|i| (i, k - i)).collect();

    let transport = par_collect(len, |idx| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(i, j) in &pairs {
            let (fi, fj) = (&fields[i], &fields[j]);
            for m in 0..n {
                acc += fj.grad_b[m].values()[idx] * fi.w[m].values()[idx].re;
            }
            acc += fi.b.values()[idx] * (0.5 * fj.div_w.values()[idx].re);
        }
        acc
    });
    let sa = forward(&Field::complex_unchecked(grid, transport));

    let mut reals: Vec<Field> = (0..n)
        .map(|l| {
            let values = par_collect(len, |idx| {
                let mut acc = 0.0;
                for &(i, j) in &pairs {
                    for m in 0..n {
                        acc += fields[i].w[m].values()[idx].re
                            * fields[j].dw[l * n + m].values()[idx].re;
                    }
                }
                Complex64::new(acc, 0.0)
            });
            Field::real_from_complex(grid, values)
        })
        .collect();
    let density = par_collect(len, |idx| {
        let mut acc = 0.0;
        for &(i, j) in &pairs {
            acc += (fields[i].b.values()[idx] * fields[j].b.values()[idx].conj()).re;
        }
        Complex64::new(acc, 0.0)
    });
    reals.push(Field::real_from_complex(grid, density));
    let refs: Vec<&Field> = reals.iter().collect();
    let mut specs = forward_reals(&refs);
    let rho = specs.pop().expect("density spectrum");

    let band = dynamics.band();
    let pot = dynamics.plain_potential();
    let k2 = grid.k_squared();
    let bp = b_prev.coeffs();
    let sc = sa.coeffs();
    let db = par_collect(len, |idx| {
        -sc[idx] * band[idx] + Complex64::new(0.0, -0.5 * k2[idx]) * bp[idx]
    });
    let db = Spectrum::new_unchecked(grid, db);
    let rc = rho.coeffs();
    let dw = specs
        .into_iter()
        .enumerate()
        .map(|(l, s)| {
            let kl = grid.odd_derivative_symbol(l);
            let c = s.coeffs();
            let out = par_collect(len, |idx| {
                -(c[idx] * band[idx] + Complex64::new(0.0, kl[idx]) * (rc[idx] * pot[idx]))
            });
            Spectrum::new_unchecked(grid, out)
        })
        .collect();
    (db, dw)
}

/// Right-hand side of the full triangular system on `[b₀, w₀, b₁, w₁, …]`.
fn hierarchy_rhs(dynamics: &Dynamics, u: &[Spectrum]) -> Vec<Spectrum> {
    let n = dynamics.grid().dim();
    let stride = n + 1;
    let depth = u.len() / stride;
    let (db0, dw0) = dynamics.nonlinear(&u[0], &u[1..stride]);
    let mut out = Vec::with_capacity(u.len());
    out.push(db0);
    out.extend(dw0);
    if depth > 1 {
        let fields: Vec<LevelFields> = (0..depth)
            .map(|j| LevelFields::new(&u[j * stride], &u[j * stride + 1..(j + 1) * stride]))
            .collect();
        for k in 1..depth {
            let (db, dw) = level_terms(dynamics, k, &fields, &u[(k - 1) * stride]);
            out.push(db);
            out.extend(dw);
        }
    }
    out
}

/// Explicit right-hand side `(∂_t b_k, ∂_t w_k)` of level `k >= 1`, given the
/// lower levels `(b_j, w_j)`, `j < k`, at the same time.
pub fn level_rhs(
    k: usize,
    levels: &[(Field, VectorField)],
    current: (&Field, &VectorField),
    params: &PhysicsParams,
) -> Result<(Field, VectorField)> {
    if k == 0 {
        return Err(Error::Domain("level_rhs is defined for k >= 1".into()));
    }
    if levels.len() < k {
        return Err(Error::Structural(format!(
            "level {k} needs levels 0..{}, got {}",
            k - 1,
            levels.len()
        )));
    }
    let grid = current.0.grid();
    let dynamics = Dynamics::new(grid, &params.semiclassical_limit(), 0.0)?;
    let mut specs = Vec::with_capacity(k + 1);
    for (b, w) in levels.iter().take(k) {
        grid.check_same(b.grid())?;
        specs.push(to_spectral(&WkbState::new(b.clone(), w.clone(), 0.0)?));
    }
    specs.push(to_spectral(&WkbState::new(current.0.clone(), current.1.clone(), 0.0)?));
    let fields: Vec<LevelFields> = specs.iter().map(|s| LevelFields::new(&s[0], &s[1..])).collect();
    let (db, dw) = level_terms(&dynamics, k, &fields, &specs[k - 1][0]);
    let refs: Vec<&Spectrum> = dw.iter().collect();
    Ok((inverse(&db), VectorField::new(inverse_reals(&refs))?))
}

/// Level-`k` phase integrand `P(½ Σ w_i·w_j + λ K ∗ Σ Re(b_i b̄_j))`.
fn phase_integrand(
    dynamics: &Dynamics,
    k: usize,
    b: &[&Field],
    w: &[&VectorField],
) -> Field {
    let grid = b[0].grid();
    let n = grid.dim();
    let pairs: Vec<(usize, usize)> = (0..=k).map(|i| (i, k - i)).collect();
    let kinetic = par_collect(grid.len(), |idx| {
        let mut acc = 0.0;
        for &(i, j) in &pairs {
            for m in 0..n {
                acc += w[i].component(m).values()[idx].re * w[j].component(m).values()[idx].re;
            }
        }
        Complex64::new(0.5 * acc, 0.0)
    });
    let density = par_collect(grid.len(), |idx| {
        let mut acc = 0.0;
        for &(i, j) in &pairs {
            acc += (b[i].values()[idx] * b[j].values()[idx].conj()).re;
        }
        Complex64::new(acc, 0.0)
    });
    let kin = Field::real_from_complex(grid, kinetic);
    let den = Field::real_from_complex(grid, density);
    let s = forward_reals(&[&kin, &den]);
    let band = dynamics.band();
    let pot = dynamics.plain_potential();
    let (sk, sd) = (s[0].coeffs(), s[1].coeffs());
    let out = par_collect(grid.len(), |idx| sk[idx] * band[idx] + sd[idx] * pot[idx]);
    inverse_real(&Spectrum::new_unchecked(grid, out))
}

/// Integrates levels `0..=depth-1` from `(b_k(0), w_k(0))`.
#[allow(clippy::too_many_arguments)]
fn integrate(
    initial: &[(Field, VectorField)],
    phase0: &Field,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
    guard: &GuardConfig,
) -> Result<Hierarchy> {
    let limit = params.semiclassical_limit();
    limit.check_limit_epsilon()?;
    guard.validate(phase0.grid().dim())?;
    let counts = crate::direct::segment_steps(t_final, dt, sample_times)?;
    uniform_spacing(sample_times)?;
    check_state_resolution(&initial[0].0, &initial[0].1)?;
    let dynamics = Dynamics::new(phase0.grid(), &limit, 0.0)?;
    let prop: Option<Propagator> = dynamics.propagator(dt);
    let n = phase0.grid().dim();
    let stride = n + 1;
    let depth = initial.len();

    let mut u: Vec<Spectrum> = Vec::with_capacity(depth * stride);
    for (b, w) in initial {
        u.extend(to_spectral(&WkbState::new(b.clone(), w.clone(), 0.0)?));
    }
    let props: Vec<Option<&Propagator>> = (0..u.len())
        .map(|c| if c % stride == 0 { prop.as_ref() } else { None })
        .collect();

    let d0 = diagnostics(&u[..stride], 0.0, guard.s);
    let m0 = d0.monitor.value;
    let mut diags = vec![d0];
    let mut snaps: Vec<Vec<WkbState>> = vec![Vec::new(); depth];
    let mut step = 0usize;
    for (&t_sample, &count) in sample_times.iter().zip(&counts) {
        for _ in 0..count {
            let next = if_rk4_step(&u, &props, dt, |s| Ok(hierarchy_rhs(&dynamics, s)))?;
            step += 1;
            let time = step as f64 * dt;
            if !check_finite(&next) {
                return Err(Error::BlowUp { step, time });
            }
            let d = diagnostics(&next[..stride], time, guard.s);
            let last_valid = (step - 1) as f64 * dt;
            if let Err(event) = judge(&d, m0, guard, last_valid) {
                return Err(event.into());
            }
            diags.push(d);
            u = next;
        }
        for (k, level) in snaps.iter_mut().enumerate() {
            level.push(to_physical(&u[k * stride..(k + 1) * stride], t_sample));
        }
    }

    let h = uniform_spacing(sample_times)?;
    let mut levels = Vec::with_capacity(depth);
    for k in 0..depth {
        let integrands: Vec<Field> = (0..sample_times.len())
            .map(|ti| {
                if k == 0 {
                    return dynamics.phase_integrand(&snaps[0][ti].a, &snaps[0][ti].v);
                }
                let b: Vec<&Field> = (0..=k).map(|j| &snaps[j][ti].a).collect();
                let w: Vec<&VectorField> = (0..=k).map(|j| &snaps[j][ti].v).collect();
                phase_integrand(&dynamics, k, &b, &w)
            })
            .collect();
        let integrals = cumulative_simpson(&integrands, h)?;
        let phi = integrals
            .into_iter()
            .map(|i| if k == 0 { phase0.sub(&i) } else { Ok(i.scale_real(-1.0)) })
            .collect::<Result<Vec<_>>>()?;
        levels.push(HierarchyLevel {
            k,
            times: sample_times.to_vec(),
            b: snaps[k].iter().map(|s| s.a.clone()).collect(),
            w: snaps[k].iter().map(|s| s.v.clone()).collect(),
            phi,
        });
    }
    Ok(Hierarchy {
        levels,
        order: depth - 1,
        diagnostics: diags,
        steps: step,
        dt,
    })
}

fn initial_levels(data: &WkbData, order: usize) -> Result<Vec<(Field, VectorField)>> {
    let grid = data.grid();
    let mut out = vec![(data.amplitude(0), gradient(&data.phase0)?)];
    for k in 1..=order {
        out.push((data.amplitude(k), VectorField::zeros(grid)));
    }
    Ok(out)
}

/// The `ε = 0` phase/amplitude run from `(a₀, ∇φ₀)` with its phase.
pub fn solve_level0(
    data: &WkbData,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<HierarchyLevel> {
    let h = solve_hierarchy(data, params, 0, t_final, dt, sample_times, &GuardConfig::default())?;
    Ok(h.levels.into_iter().next().expect("level 0"))
}

/// Solves level `k >= 1` from `b_k(0) = a_k`, `w_k(0) = 0` on top of the
/// given lower levels; the lower levels are re-integrated from their initial
/// profiles alongside.
#[allow(clippy::too_many_arguments)]
pub fn solve_level(
    k: usize,
    lower: &[HierarchyLevel],
    a_k: &Field,
    phase0: &Field,
    params: &PhysicsParams,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<HierarchyLevel> {
    if k == 0 {
        return Err(Error::Domain("use solve_level0 for k = 0".into()));
    }
    if lower.len() < k {
        return Err(Error::Structural(format!(
            "level {k} needs levels 0..{}, got {}",
            k - 1,
            lower.len()
        )));
    }
    let mut initial: Vec<(Field, VectorField)> = lower
        .iter()
        .take(k)
        .map(|l| (l.b[0].clone(), l.w[0].clone()))
        .collect();
    initial.push((a_k.clone(), VectorField::zeros(a_k.grid())));
    let h = integrate(
        &initial,
        phase0,
        params,
        t_final,
        dt,
        sample_times,
        &GuardConfig::default(),
    )?;
    Ok(h.levels.into_iter().nth(k).expect("level k"))
}

/// Levels `0..=order` from WKB data.
pub fn solve_hierarchy(
    data: &WkbData,
    params: &PhysicsParams,
    order: usize,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
    guard: &GuardConfig,
) -> Result<Hierarchy> {
    let initial = initial_levels(data, order)?;
    integrate(&initial, &data.phase0, params, t_final, dt, sample_times, guard)
}

/// `β_j` for `j <= order` at snapshot `ti`: the `ε^j` coefficients of
/// `e^{iφ₁} exp(Σ_{m≥2} i ε^{m-1} φ_m) Σ_j ε^j b_j`.
pub fn wkb_coefficients(h: &Hierarchy, order: usize, ti: usize) -> Result<Vec<Field>> {
    if order + 1 > h.order {
        return Err(Error::Domain(format!(
            "assembly to order {order} needs levels up to {}, hierarchy has {}",
            order + 1,
            h.order
        )));
    }
    let i = Complex64::new(0.0, 1.0);
    let b = |j: usize| &h.levels[j].b[ti];
    let phi = |j: usize| &h.levels[j].phi[ti];
    let rotation = phi(1).map(|p| Complex64::from_polar(1.0, p.re));
    let mut betas = vec![b(0).mul(&rotation)?];
    if order >= 1 {
        let i_phi2_b0 = phi(2).mul(b(0))?.scale(i);
        betas.push(b(1).mul(&rotation)?.add(&i_phi2_b0.mul(&rotation)?)?);
    }
    if order >= 2 {
        // E_p: coefficients of exp(Σ_{q≥1} ε^q L_q), L_q = iφ_{q+1}.
        let grid = b(0).grid();
        let mut e = vec![Field::constant(grid, Complex64::new(1.0, 0.0))];
        for p in 1..=order {
            let mut acc = Field::zeros(grid);
            for q in 1..=p {
                let lq = phi(q + 1).scale(i * q as f64);
                acc = acc.add(&lq.mul(&e[p - q])?)?;
            }
            e.push(acc.scale_real(1.0 / p as f64));
        }
        for j in 2..=order {
            let mut acc = Field::zeros(grid);
            for p in 0..=j {
                acc = acc.add(&e[p].mul(b(j - p))?)?;
            }
            betas.push(acc.mul(&rotation)?);
        }
    }
    Ok(betas)
}

/// `e^{iφ₀(t)/ε} Σ_{j≤order} ε^j β_j` at snapshot `ti`.
pub fn assemble_wkb(h: &Hierarchy, epsilon: f64, order: usize, ti: usize) -> Result<Field> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {epsilon}")));
    }
    let betas = wkb_coefficients(h, order, ti)?;
    let mut sum = Field::zeros(betas[0].grid());
    for (j, beta) in betas.iter().enumerate().rev() {
        sum = sum.scale_real(epsilon).add(beta)?;
        if j == 0 {
            break;
        }
    }
    let phase = &h.levels[0].phi[ti];
    crate::grenier::recompose(&sum, phase, epsilon)
}

/// `ε`-expansion of the amplitude `Σ_{k≤order} ε^k b_k` at snapshot `ti`.
pub fn amplitude_expansion(h: &Hierarchy, epsilon: f64, order: usize, ti: usize) -> Result<Field> {
    if order > h.order {
        return Err(Error::Domain(format!(
            "expansion to order {order} exceeds hierarchy depth {}",
            h.order
        )));
    }
    let mut acc = h.levels[order].b[ti].clone();
    for k in (0..order).rev() {
        acc = acc.scale_real(epsilon).add(&h.levels[k].b[ti])?;
    }
    Ok(acc)
}

/// Norms of `u_direct - u_wkb`.
pub fn wkb_residual(u_direct: &Field, u_wkb: &Field, kinds: &[NormKind]) -> Result<Vec<(NormKind, f64)>> {
    let diff = u_direct.sub(u_wkb)?;
    kinds.iter().map(|&k| Ok((k, norm(&diff, k)?.value))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grenier::evolve_grenier;
    use crate::physics::gaussian_bump;
    use crate::spectral::{laplacian, riesz_zero_mode};

    fn homogeneous_data(grid: &Grid, c: Complex64, a1: Complex64) -> WkbData {
        WkbData::new(
            vec![Field::constant(grid, c), Field::constant(grid, a1)],
            Field::zeros(grid),
            None,
        )
        .unwrap()
    }

    fn bump_data(grid: &Grid) -> WkbData {
        WkbData::new(
            vec![
                gaussian_bump(grid, 1.0, 1.0),
                gaussian_bump(grid, 0.5, 1.2).scale(Complex64::new(0.0, 1.0)),
            ],
            gaussian_bump(grid, 0.3, 1.0),
            None,
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_levels_are_explicit() {
        let grid = Grid::new(3, 8, 6.0).unwrap();
        let p = PhysicsParams::new(0.1, 0.8, 1.0, 3).unwrap();
        let c = Complex64::new(0.6, 0.2);
        let a1 = Complex64::new(-0.3, 0.4);
        let times = [0.0, 0.1, 0.2];
        let h = solve_hierarchy(&homogeneous_data(&grid, c, a1), &p, 2, 0.2, 0.05, &times, &GuardConfig::default())
            .unwrap();
        let k0 = riesz_zero_mode(3, 1.0, 6.0);
        for (ti, &t) in times.iter().enumerate() {
            let l0 = &h.levels[0];
            let l1 = &h.levels[1];
            assert!(l0.b[ti].values().iter().all(|z| (z - c).norm() < 1e-12));
            assert!(l1.b[ti].values().iter().all(|z| (z - a1).norm() < 1e-12));
            assert!(l0.w[ti].max_magnitude() < 1e-12 && l1.w[ti].max_magnitude() < 1e-12);
            let phi0 = -t * p.lambda * k0 * c.norm_sqr();
            let phi1 = -t * p.lambda * k0 * 2.0 * (c * a1.conj()).re;
            assert!(l0.phi[ti].values().iter().all(|z| (z.re - phi0).abs() < 1e-10));
            assert!(l1.phi[ti].values().iter().all(|z| (z.re - phi1).abs() < 1e-10));
        }
    }

    #[test]
    fn level_zero_matches_grenier_bit_for_bit() {
        let grid = Grid::new(3, 32, 8.0).unwrap();
        let data = bump_data(&grid);
        let p = PhysicsParams::new(0.1, 1.0, 1.0, 3).unwrap();
        let times = [0.0, 0.05, 0.1];
        let level = solve_level0(&data, &p, 0.1, 0.025, &times).unwrap();
        let run = evolve_grenier(
            &data.amplitude(0),
            &gradient(&data.phase0).unwrap(),
            &p.semiclassical_limit(),
            0.1,
            0.025,
            &times,
        )
        .unwrap();
        for (ti, snap) in run.snapshots.iter().enumerate() {
            assert_eq!(level.b[ti], snap.a);
            assert_eq!(level.w[ti], snap.v);
        }
        let h = solve_hierarchy(&data, &p, 2, 0.1, 0.025, &times, &GuardConfig::default()).unwrap();
        assert_eq!(h.levels[0].b, level.b);
        assert_eq!(h.levels[0].phi, level.phi);
    }

    #[test]
    fn level_one_source_is_half_laplacian() {
        let grid = Grid::new(3, 16, 8.0).unwrap();
        let data = bump_data(&grid);
        let p = PhysicsParams::new(0.1, 1.0, 1.0, 3).unwrap();
        let b0 = crate::spectral::dealias(&data.amplitude(0));
        let w0 = gradient(&data.phase0).unwrap();
        let (db, dw) = level_rhs(
            1,
            &[(b0.clone(), w0)],
            (&Field::zeros(&grid), &VectorField::zeros(&grid)),
            &p,
        )
        .unwrap();
        let expected = laplacian(&b0).scale(Complex64::new(0.0, 0.5));
        assert!(db.sub(&expected).unwrap().max_abs() < 1e-12 * expected.max_abs().max(1.0));
        assert!(dw.max_magnitude() < 1e-14);
        assert!(level_rhs(2, &[], (&Field::zeros(&grid), &VectorField::zeros(&grid)), &p).is_err());
    }

    #[test]
    fn assembly_coefficients_match_closed_forms() {
        let grid = Grid::new(3, 32, 8.0).unwrap();
        let data = bump_data(&grid);
        let p = PhysicsParams::new(0.1, 1.0, 1.0, 3).unwrap();
        let times = [0.0, 0.05, 0.1];
        let h = solve_hierarchy(&data, &p, 2, 0.1, 0.05, &times, &GuardConfig::default()).unwrap();
        let betas = wkb_coefficients(&h, 1, 2).unwrap();
        let (b0, b1) = (&h.levels[0].b[2], &h.levels[1].b[2]);
        let (phi1, phi2) = (&h.levels[1].phi[2], &h.levels[2].phi[2]);
        for idx in 0..grid.len() {
            let r = Complex64::from_polar(1.0, phi1.values()[idx].re);
            let beta0 = b0.values()[idx] * r;
            let beta1 = b1.values()[idx] * r
                + Complex64::new(0.0, phi2.values()[idx].re) * b0.values()[idx] * r;
            assert!((betas[0].values()[idx] - beta0).norm() < 1e-14);
            assert!((betas[1].values()[idx] - beta1).norm() < 1e-14);
        }
        let u0 = assemble_wkb(&h, 0.1, 0, 2).unwrap();
        for (z, b) in u0.values().iter().zip(b0.values()) {
            assert!((z.norm() - b.norm()).abs() < 1e-14);
        }
        assert!(assemble_wkb(&h, 0.1, 2, 2).is_err());
    }
}
