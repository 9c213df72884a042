//! Integrating-factor RK4 on a list of spectra.
//!
//! Components with a multiplier evolve as `u' = L u + N(u)` with diagonal
//! `L`; the others as `u' = N(u)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::Spectrum;
use crate::grid::PAR_CHUNK;

/// Exact propagators `e^{L dt/2}` and `e^{L dt}` of one component.
#[derive(Debug, Clone)]
pub(crate) struct Propagator {
    pub half: Vec<Complex64>,
    pub full: Vec<Complex64>,
}

impl Propagator {
    /// From the diagonal generator `L(idx)`.
    pub fn new(len: usize, dt: f64, generator: impl Fn(usize) -> Complex64 + Sync) -> Propagator {
        let (half, full) = (0..len)
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|idx| {
                let l = generator(idx);
                ((l * (0.5 * dt)).exp(), (l * dt).exp())
            })
            .unzip();
        Propagator { half, full }
    }
}

fn zip3(
    out: &mut [Complex64],
    x: &[Complex64],
    y: &[Complex64],
    f: impl Fn(usize, Complex64, Complex64) -> Complex64 + Sync,
) {
    out.par_iter_mut()
        .enumerate()
        .with_min_len(PAR_CHUNK)
        .for_each(|(idx, o)| *o = f(idx, x[idx], y[idx]));
}

fn build(
    like: &Spectrum,
    x: &Spectrum,
    y: &Spectrum,
    f: impl Fn(usize, Complex64, Complex64) -> Complex64 + Sync,
) -> Spectrum {
    let mut out = vec![Complex64::new(0.0, 0.0); like.coeffs().len()];
    zip3(&mut out, x.coeffs(), y.coeffs(), f);
    Spectrum::new_unchecked(like.grid(), out)
}

fn mul(p: &Option<&Propagator>, half: bool, idx: usize) -> Option<Complex64> {
    p.map(|p| if half { p.half[idx] } else { p.full[idx] })
}

/// One step of the integrating-factor scheme:
///
/// ```text
/// k1 = N(u)
/// k2 = N(E_h (u + dt/2 k1))
/// k3 = N(E_h u + dt/2 k2)
/// k4 = N(E u + dt E_h k3)
/// u' = E u + dt/6 (E k1 + 2 E_h (k2 + k3) + k4)
/// ```
pub(crate) fn if_rk4_step<F>(
    u: &[Spectrum],
    props: &[Option<&Propagator>],
    dt: f64,
    rhs: F,
) -> Result<Vec<Spectrum>>
where
    F: Fn(&[Spectrum]) -> Result<Vec<Spectrum>>,
{
    let h = 0.5 * dt;
    let k1 = rhs(u)?;
    let u1: Vec<Spectrum> = u
        .iter()
        .zip(&k1)
        .zip(props)
        .map(|((x, k), p)| {
            build(x, x, k, |idx, a, b| {
                let z = a + b * h;
                match mul(p, true, idx) {
                    Some(e) => e * z,
                    None => z,
                }
            })
        })
        .collect();
    let k2 = rhs(&u1)?;
    drop(u1);
    let u2: Vec<Spectrum> = u
        .iter()
        .zip(&k2)
        .zip(props)
        .map(|((x, k), p)| {
            build(x, x, k, |idx, a, b| match mul(p, true, idx) {
                Some(e) => e * a + b * h,
                None => a + b * h,
            })
        })
        .collect();
    let k3 = rhs(&u2)?;
    drop(u2);
    let u3: Vec<Spectrum> = u
        .iter()
        .zip(&k3)
        .zip(props)
        .map(|((x, k), p)| {
            build(x, x, k, |idx, a, b| match (mul(p, false, idx), mul(p, true, idx)) {
                (Some(ef), Some(eh)) => ef * a + eh * b * dt,
                _ => a + b * dt,
            })
        })
        .collect();
    let k4 = rhs(&u3)?;
    drop(u3);
    let sixth = dt / 6.0;
    let out = (0..u.len())
        .map(|c| {
            let p = &props[c];
            let (x, a, b, cc, d) = (
                u[c].coeffs(),
                k1[c].coeffs(),
                k2[c].coeffs(),
                k3[c].coeffs(),
                k4[c].coeffs(),
            );
            let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
            out.par_iter_mut()
                .enumerate()
                .with_min_len(PAR_CHUNK)
                .for_each(|(idx, o)| {
                    *o = match (mul(p, false, idx), mul(p, true, idx)) {
                        (Some(ef), Some(eh)) => {
                            ef * x[idx]
                                + (ef * a[idx] + eh * (b[idx] + cc[idx]) * 2.0 + d[idx]) * sixth
                        }
                        _ => x[idx] + (a[idx] + (b[idx] + cc[idx]) * 2.0 + d[idx]) * sixth,
                    }
                });
            Spectrum::new_unchecked(u[c].grid(), out)
        })
        .collect();
    Ok(out)
}
