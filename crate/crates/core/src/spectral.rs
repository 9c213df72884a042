//! Fourier-side operators: transforms, derivatives, the Riesz potential,
//! the mollifier and two-thirds dealiasing.
//!
//! The forward transform is the spacing-weighted sum
//! `f̂(ξ) = h^n Σ f(x) e^{-iξ·x}`, an approximation of `∫ f e^{-iξ·x} dx`, and
//! the inverse is `f(x) = L^{-n} Σ f̂(ξ) e^{iξ·x}`. Continuum multiplier
//! constants therefore apply without rescaling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{Field, Spectrum, VectorField};
use crate::grid::{Grid, PAR_CHUNK};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub fn forward(f: &Field) -> Spectrum {
    let grid = f.grid();
    let mut data = f.values().to_vec();
    grid.fft_in_place(&mut data, false);
    let w = grid.cell_volume();
    data.par_iter_mut()
        .with_min_len(PAR_CHUNK)
        .for_each(|z| *z *= w);
    Spectrum::new_unchecked(grid, data)
}

pub fn inverse(s: &Spectrum) -> Field {
    Field::complex_unchecked(s.grid(), inverse_values(s))
}

/// Inverse transform of a spectrum known to belong to a real field.
pub fn inverse_real(s: &Spectrum) -> Field {
    Field::real_from_complex(s.grid(), inverse_values(s))
}

fn inverse_values(s: &Spectrum) -> Vec<Complex64> {
    let grid = s.grid();
    let mut data = s.coeffs().to_vec();
    grid.fft_in_place(&mut data, true);
    let w = 1.0 / grid.volume();
    data.par_iter_mut()
        .with_min_len(PAR_CHUNK)
        .for_each(|z| *z *= w);
    data
}

/// Inverse transforms two spectra of real fields with one complex FFT.
pub fn inverse_real_pair(a: &Spectrum, b: &Spectrum) -> Result<(Field, Field)> {
    let packed = a.zip_map(b, |x, y| x + I * y)?;
    let values = inverse_values(&packed);
    let grid = a.grid();
    let re = values.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
    let im = values.iter().map(|z| Complex64::new(z.im, 0.0)).collect();
    Ok((
        Field::real_from_complex(grid, re),
        Field::real_from_complex(grid, im),
    ))
}

/// Forward transforms two real fields with one complex FFT.
pub fn forward_real_pair(x: &Field, y: &Field) -> Result<(Spectrum, Spectrum)> {
    let packed = x.zip_map(y, |a, b| Complex64::new(a.re, b.re))?;
    let z = forward(&packed);
    let grid = x.grid();
    let neg = grid.negated_index();
    let zc = z.coeffs();
    let (xs, ys): (Vec<Complex64>, Vec<Complex64>) = (0..grid.len())
        .into_par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|idx| {
            let p = zc[idx];
            let q = zc[neg[idx]].conj();
            (0.5 * (p + q), Complex64::new(0.0, -0.5) * (p - q))
        })
        .unzip();
    Ok((
        Spectrum::new_unchecked(grid, xs),
        Spectrum::new_unchecked(grid, ys),
    ))
}

/// Round-trip convenience mirroring the `transform(f, direction)` contract:
/// the output samples are spectral coefficients for `Forward` and physical
/// values for `Inverse`.
pub fn transform(f: &Field, direction: Direction) -> Field {
    match direction {
        Direction::Forward => Field::complex_unchecked(f.grid(), forward(f).into_coeffs()),
        Direction::Inverse => {
            let s = Spectrum::new_unchecked(f.grid(), f.values().to_vec());
            inverse(&s)
        }
    }
}

/// `iξ_axis · f̂` with the Nyquist mode removed.
pub fn derivative_spectrum(s: &Spectrum, axis: usize) -> Spectrum {
    let k = s.grid().odd_derivative_symbol(axis);
    s.apply(|idx| Complex64::new(0.0, k[idx]))
}

pub fn laplacian_spectrum(s: &Spectrum) -> Spectrum {
    let k2 = s.grid().k_squared();
    s.apply_real(|idx| -k2[idx])
}

fn reinvert(s: &Spectrum, real: bool) -> Field {
    if real {
        inverse_real(s)
    } else {
        inverse(s)
    }
}

/// Spectral gradient of a real field.
pub fn gradient(f: &Field) -> Result<VectorField> {
    if !f.is_real() {
        return Err(Error::Structural(
            "gradient into a VectorField needs a real field; use gradient_complex".into(),
        ));
    }
    let s = forward(f);
    let components = (0..f.grid().dim())
        .map(|axis| inverse_real(&derivative_spectrum(&s, axis)))
        .collect();
    VectorField::new(components)
}

/// Componentwise spectral gradient of a possibly complex field.
pub fn gradient_complex(f: &Field) -> Vec<Field> {
    let s = forward(f);
    (0..f.grid().dim())
        .map(|axis| reinvert(&derivative_spectrum(&s, axis), f.is_real()))
        .collect()
}

pub fn divergence(v: &VectorField) -> Field {
    let grid = v.grid();
    let mut acc = Spectrum::zeros(grid);
    for (axis, c) in v.components().iter().enumerate() {
        let d = derivative_spectrum(&forward(c), axis);
        acc.axpy(Complex64::new(1.0, 0.0), &d)
            .expect("components share one grid");
    }
    inverse_real(&acc)
}

pub fn laplacian(f: &Field) -> Field {
    reinvert(&laplacian_spectrum(&forward(f)), f.is_real())
}

/// Zeroes every mode with some `|m_j| > M/3`.
pub fn dealias_spectrum(s: &Spectrum) -> Spectrum {
    let grid = s.grid().clone();
    s.apply_real(|idx| if grid.in_dealias_band(idx) { 1.0 } else { 0.0 })
}

pub fn dealias_in_place(s: &mut Spectrum) {
    let grid = s.grid().clone();
    s.coeffs_mut()
        .par_iter_mut()
        .enumerate()
        .with_min_len(PAR_CHUNK)
        .for_each(|(idx, c)| {
            if !grid.in_dealias_band(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        });
}

pub fn dealias(f: &Field) -> Field {
    reinvert(&dealias_spectrum(&forward(f)), f.is_real())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mollifier width must be nonnegative, got {delta}"
        )))
    }
}

/// Mollifier symbol `e^{-δ²|ξ|²}`.
pub fn mollifier_symbol(grid: &Grid, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let d2 = delta * delta;
    Ok(grid.k_squared().iter().map(|&k2| (-d2 * k2).exp()).collect())
}

pub fn mollify_spectrum(s: &Spectrum, delta: f64) -> Result<Spectrum> {
    let symbol = mollifier_symbol(s.grid(), delta)?;
    Ok(s.apply_real(|idx| symbol[idx]))
}

/// `J_δ f`: Gaussian spectral mollifier, the identity at `δ = 0`.
pub fn mollify(f: &Field, delta: f64) -> Result<Field> {
    check_delta(delta)?;
    if delta == 0.0 {
        return Ok(f.clone());
    }
    Ok(reinvert(&mollify_spectrum(&forward(f), delta)?, f.is_real()))
}

/// Fourier multiplier of convolution with `|x|^{-γ}` on the torus.
///
/// Nonzero modes carry `c_{n,γ} |ξ|^{γ-n}`; the zero mode carries
/// `∫_{|x| ≤ L/2} |x|^{-γ} dx`.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    grid: Grid,
    gamma: f64,
    symbol: Vec<f64>,
}

/// `c_{n,γ} = π^{n/2} 2^{n-γ} Γ((n-γ)/2) / Γ(γ/2)`.
pub fn riesz_constant(dim: usize, gamma_exp: f64) -> f64 {
    let n = dim as f64;
    PI.powf(n / 2.0) * 2f64.powf(n - gamma_exp) * gamma((n - gamma_exp) / 2.0) / gamma(gamma_exp / 2.0)
}

/// Surface area of the unit sphere in `ℝⁿ`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// `K̂₀ = ω_{n-1} (L/2)^{n-γ} / (n-γ)`.
pub fn riesz_zero_mode(dim: usize, gamma_exp: f64, box_length: f64) -> f64 {
    let n = dim as f64;
    unit_sphere_area(dim) * (0.5 * box_length).powf(n - gamma_exp) / (n - gamma_exp)
}

impl RieszKernel {
    pub fn new(grid: &Grid, gamma_exp: f64) -> Result<RieszKernel> {
        let n = grid.dim() as f64;
        if !(gamma_exp > 0.0 && gamma_exp < n) {
            return Err(Error::Domain(format!(
                "Riesz exponent must satisfy 0 < γ < n = {n}, got {gamma_exp}"
            )));
        }
        let c = riesz_constant(grid.dim(), gamma_exp);
        let zero = riesz_zero_mode(grid.dim(), gamma_exp, grid.box_length());
        let power = 0.5 * (gamma_exp - n);
        let symbol = grid
            .k_squared()
            .iter()
            .map(|&k2| if k2 == 0.0 { zero } else { c * k2.powf(power) })
            .collect();
        Ok(RieszKernel {
            grid: grid.clone(),
            gamma: gamma_exp,
            symbol,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn zero_mode(&self) -> f64 {
        self.symbol[0]
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply_spectrum(&self, s: &Spectrum) -> Result<Spectrum> {
        self.grid.check_same(s.grid())?;
        Ok(s.apply_real(|idx| self.symbol[idx]))
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.grid.check_same(f.grid())?;
        Ok(reinvert(&self.apply_spectrum(&forward(f))?, f.is_real()))
    }
}

/// Spectral interpolation (or truncation) onto a grid with the same
/// dimension and box length. Modes absent from either lattice, including
/// the Nyquist planes, are dropped.
pub fn resample(f: &Field, target: &Grid) -> Result<Field> {
    let source = f.grid();
    if source.dim() != target.dim() || source.box_length() != target.box_length() {
        return Err(Error::GridMismatch {
            left: source.spec(),
            right: target.spec(),
        });
    }
    let s = forward(f);
    let limit = (source.points().min(target.points()) / 2) as i64;
    let mt = target.points() as i64;
    let mut out = Spectrum::zeros(target);
    let dim = source.dim();
    for (idx, &c) in s.coeffs().iter().enumerate() {
        let mut flat = 0usize;
        let mut keep = true;
        for axis in 0..dim {
            let m = source.mode(idx, axis);
            if m.abs() >= limit {
                keep = false;
                break;
            }
            flat = flat * mt as usize + m.rem_euclid(mt) as usize;
        }
        if keep {
            out.coeffs_mut()[flat] = c;
        }
    }
    Ok(reinvert(&out, f.is_real()))
}

/// `|x|^{-γ} ∗ f` on the torus.
pub fn riesz_potential(f: &Field, gamma_exp: f64) -> Result<Field> {
    RieszKernel::new(f.grid(), gamma_exp)?.apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{random_band_limited, random_field};

    fn plane_wave(grid: &Grid, modes: &[i64]) -> (Field, Vec<f64>) {
        let k: Vec<f64> = modes.iter().map(|&m| grid.dk() * m as f64).collect();
        let kk = k.clone();
        let f = Field::from_fn(grid, move |x| {
            let phase: f64 = kk.iter().zip(x).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, phase)
        });
        (f, k)
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn round_trip_is_identity() {
        for dim in 1..=3 {
            let grid = Grid::new(dim, 16, 3.0).unwrap();
            let f = random_field(&grid, 7 + dim as u64);
            let back = inverse(&forward(&f));
            assert!(max_diff(&f, &back) <= 1e-12 * f.max_abs());
        }
    }

    #[test]
    fn packed_real_transforms_match_single_ones() {
        let grid = Grid::new(3, 8, 3.0).unwrap();
        let x = random_field(&grid, 1).real_part();
        let y = random_field(&grid, 2).real_part();
        let (sx, sy) = forward_real_pair(&x, &y).unwrap();
        let (ex, ey) = (forward(&x), forward(&y));
        for k in 0..grid.len() {
            assert!((sx.coeffs()[k] - ex.coeffs()[k]).norm() < 1e-12);
            assert!((sy.coeffs()[k] - ey.coeffs()[k]).norm() < 1e-12);
        }
        let (bx, by) = inverse_real_pair(&sx, &sy).unwrap();
        assert!(max_diff(&bx, &x) < 1e-12 && max_diff(&by, &y) < 1e-12);
    }

    #[test]
    fn constant_transforms_to_zero_mode() {
        let grid = Grid::new(3, 8, 2.5).unwrap();
        let c = Complex64::new(1.5, -0.5);
        let s = forward(&Field::constant(&grid, c));
        let v = grid.volume();
        assert!((s.coeffs()[0] - c * v).norm() < 1e-12 * v);
        assert!(s.coeffs()[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn parseval_matches_direct_sum() {
        let grid = Grid::new(2, 16, 4.0).unwrap();
        let f = random_field(&grid, 3);
        let physical: f64 = f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_volume();
        // Independent O(N²) DFT for the spectral side.
        let m = grid.points();
        let h = grid.spacing();
        let mut spectral = 0.0;
        for kidx in 0..grid.len() {
            let (m0, m1) = (grid.mode(kidx, 0) as f64, grid.mode(kidx, 1) as f64);
            let mut acc = Complex64::new(0.0, 0.0);
            for xidx in 0..grid.len() {
                let (i0, i1) = ((xidx / m) as f64, (xidx % m) as f64);
                let phase = -2.0 * PI * (m0 * i0 + m1 * i1) / m as f64;
                acc += f.values()[xidx] * Complex64::from_polar(1.0, phase);
            }
            spectral += (acc * h * h).norm_sqr();
        }
        spectral /= grid.volume();
        assert!((physical - spectral).abs() <= 1e-10 * physical);
    }

    #[test]
    fn transform_direction_wrapper_round_trips() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let f = random_field(&grid, 11);
        let back = transform(&transform(&f, Direction::Forward), Direction::Inverse);
        assert!(max_diff(&f, &back) <= 1e-12 * f.max_abs());
    }

    #[test]
    fn gradient_of_plane_wave() {
        let grid = Grid::new(3, 16, 5.0).unwrap();
        let (f, k) = plane_wave(&grid, &[2, -3, 1]);
        let g = gradient_complex(&f);
        for (axis, comp) in g.iter().enumerate() {
            let expected = f.scale(Complex64::new(0.0, k[axis]));
            assert!(max_diff(comp, &expected) < 1e-12 * k[axis].abs().max(1.0) * 10.0);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let g = gradient(&Field::constant(&grid, Complex64::new(2.0, 0.0))).unwrap();
        assert!(g.components().iter().all(|c| c.max_abs() < 1e-13));
    }

    fn gaussian(grid: &Grid, width: f64) -> Field {
        let c = grid.center();
        Field::from_real_fn(grid, move |x| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            (-r2 / (width * width)).exp()
        })
    }

    /// Fourth-order centered differences along one axis of a 1D-indexed field.
    fn fd4(f: &Field, axis: usize) -> Vec<f64> {
        let grid = f.grid();
        let m = grid.points();
        let stride = m.pow((grid.dim() - 1 - axis) as u32);
        let h = grid.spacing();
        let vals = f.re();
        (0..grid.len())
            .map(|idx| {
                let i = grid.axis_index(idx, axis);
                let at = |off: isize| {
                    let j = (i as isize + off).rem_euclid(m as isize) as usize;
                    vals[idx - i * stride + j * stride]
                };
                (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_fourth_order_differences() {
        let mut errors = Vec::new();
        for &m in &[32usize, 64] {
            let grid = Grid::new(2, m, 8.0).unwrap();
            let f = gaussian(&grid, 1.0);
            let g = gradient(&f).unwrap();
            let fd = fd4(&f, 1);
            let err = g
                .component(1)
                .re()
                .iter()
                .zip(&fd)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            errors.push(err);
        }
        let order = (errors[0] / errors[1]).log2();
        assert!(order >= 3.5, "observed order {order}, errors {errors:?}");
    }

    #[test]
    fn mollify_edge_cases() {
        let grid = Grid::new(2, 16, 3.0).unwrap();
        let f = random_field(&grid, 5);
        assert_eq!(mollify(&f, 0.0).unwrap(), f);
        assert!(matches!(mollify(&f, -0.1), Err(Error::Domain(_))));
        let (pw, k) = plane_wave(&grid, &[1, 2]);
        let delta = 0.3;
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let out = mollify(&pw, delta).unwrap();
        let expected = pw.scale_real((-delta * delta * k2).exp());
        assert!(max_diff(&out, &expected) < 1e-13);
    }

    #[test]
    fn mollifier_is_self_adjoint() {
        let grid = Grid::new(3, 8, 2.0).unwrap();
        let f = random_field(&grid, 1);
        let g = random_field(&grid, 2);
        let lhs = mollify(&f, 0.2).unwrap().inner(&g).unwrap();
        let rhs = f.inner(&mollify(&g, 0.2).unwrap()).unwrap();
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
    }

    #[test]
    fn dealias_edge_cases() {
        let grid = Grid::new(2, 16, 1.0).unwrap();
        let f = random_band_limited(&grid, 4, 9);
        assert!(max_diff(&dealias(&f), &f) < 1e-13);
        let (nyquist, _) = plane_wave(&grid, &[-8, 0]);
        assert!(dealias(&nyquist).max_abs() < 1e-14);
    }

    #[test]
    fn dealiased_product_matches_fine_grid() {
        let coarse = Grid::new(2, 16, 2.0).unwrap();
        let fine = Grid::new(2, 32, 2.0).unwrap();
        let f = random_band_limited(&coarse, 5, 21);
        let g = random_band_limited(&coarse, 5, 22);
        let coarse_prod = dealias(&f.mul(&g).unwrap());
        // Exact product on a grid fine enough to hold its full spectrum.
        let ff = crate::test_support::prolong(&f, &fine);
        let gf = crate::test_support::prolong(&g, &fine);
        let fine_prod = forward(&ff.mul(&gf).unwrap());
        let retained = crate::test_support::restrict_band(&fine_prod, &coarse);
        let expected = inverse(&retained);
        assert!(max_diff(&coarse_prod, &expected) <= 1e-10 * expected.max_abs());
    }

    #[test]
    fn riesz_domain_and_trivial_cases() {
        let grid = Grid::new(3, 8, 4.0).unwrap();
        assert!(riesz_potential(&Field::zeros(&grid), 3.0).is_err());
        assert!(riesz_potential(&Field::zeros(&grid), 0.0).is_err());
        assert!(riesz_potential(&Field::zeros(&grid), 1.0).unwrap().max_abs() == 0.0);
        let (pw, k) = plane_wave(&grid, &[1, 0, -2]);
        let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let out = riesz_potential(&pw, 1.0).unwrap();
        let expected = pw.scale_real(riesz_constant(3, 1.0) * kn.powf(-2.0));
        assert!(max_diff(&out, &expected) < 1e-12 * expected.max_abs());
    }

    #[test]
    fn riesz_constant_reduces_to_coulomb() {
        assert!((riesz_constant(3, 1.0) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((riesz_zero_mode(3, 1.0, 16.0) - 2.0 * PI * 64.0).abs() < 1e-9);
    }

    #[test]
    fn riesz_is_linear_and_real() {
        let grid = Grid::new(3, 8, 4.0).unwrap();
        let f = random_field(&grid, 31);
        let g = random_field(&grid, 32);
        let (alpha, beta) = (Complex64::new(0.7, -0.2), Complex64::new(-1.3, 0.4));
        let lhs = riesz_potential(&f.scale(alpha).add(&g.scale(beta)).unwrap(), 1.5).unwrap();
        let rhs = riesz_potential(&f, 1.5)
            .unwrap()
            .scale(alpha)
            .add(&riesz_potential(&g, 1.5).unwrap().scale(beta))
            .unwrap();
        assert!(max_diff(&lhs, &rhs) <= 1e-12 * lhs.max_abs());

        let nonneg = f.abs_sq();
        let kernel = RieszKernel::new(&grid, 1.0).unwrap();
        let raw = inverse(&kernel.apply_spectrum(&forward(&nonneg)).unwrap());
        assert!(raw.max_imag_abs() <= 1e-12 * raw.max_abs());
        assert!(kernel.apply(&nonneg).unwrap().is_real());
    }
}
