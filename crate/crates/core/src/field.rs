//! Sampled fields on a [`Grid`] and their spectra.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, PAR_CHUNK};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Complex samples of a function on the grid, row-major.
///
/// A real-flagged field carries exactly zero imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    is_real: bool,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![ZERO; grid.len()],
            is_real: true,
        }
    }

    pub fn constant(grid: &Grid, c: Complex64) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            is_real: c.im == 0.0,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let is_real = values.iter().all(|z| z.im == 0.0);
        Ok(Field {
            grid: grid.clone(),
            values,
            is_real,
        })
    }

    pub fn from_real_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        Field::from_values(grid, values.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Field {
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|idx| f(&grid.position(idx)))
            .collect();
        let is_real = values.iter().all(|z| z.im == 0.0);
        Field {
            grid: grid.clone(),
            values,
            is_real,
        }
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64 + Sync) -> Field {
        let mut field = Field::from_fn(grid, |x| Complex64::new(f(x), 0.0));
        field.is_real = true;
        field
    }

    /// Wraps values that are known to be real up to round-off, zeroing the
    /// imaginary residue.
    pub(crate) fn real_from_complex(grid: &Grid, mut values: Vec<Complex64>) -> Field {
        values
            .par_iter_mut()
            .with_min_len(PAR_CHUNK)
            .for_each(|z| z.im = 0.0);
        Field {
            grid: grid.clone(),
            values,
            is_real: true,
        }
    }

    pub(crate) fn complex_unchecked(grid: &Grid, values: Vec<Complex64>) -> Field {
        Field {
            grid: grid.clone(),
            values,
            is_real: false,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_real(&self) -> bool {
        self.is_real
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Real parts of the samples.
    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    /// The real part as a real-flagged field.
    pub fn real_part(&self) -> Field {
        Field::real_from_complex(&self.grid, self.values.clone())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))
    }

    /// Pointwise map; the result is real-flagged when every output is real.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> Field {
        let values: Vec<Complex64> = self
            .values
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|&z| f(z))
            .collect();
        let is_real = values.iter().all(|z| z.im == 0.0);
        Field {
            grid: self.grid.clone(),
            values,
            is_real,
        }
    }

    pub fn zip_map(
        &self,
        other: &Field,
        f: impl Fn(Complex64, Complex64) -> Complex64 + Sync,
    ) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values: Vec<Complex64> = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .with_min_len(PAR_CHUNK)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let is_real = values.iter().all(|z| z.im == 0.0);
        Ok(Field {
            grid: self.grid.clone(),
            values,
            is_real,
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Field {
        self.map(|z| z * c)
    }

    pub fn scale_real(&self, c: f64) -> Field {
        let mut out = self.map(|z| z * c);
        out.is_real = self.is_real;
        out
    }

    /// `|f|²` as a real field.
    pub fn abs_sq(&self) -> Field {
        let values = self
            .values
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|z| Complex64::new(z.norm_sqr(), 0.0))
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
            is_real: true,
        }
    }

    pub fn conj(&self) -> Field {
        let mut out = self.map(|z| z.conj());
        out.is_real = self.is_real;
        out
    }

    /// `∫ f ḡ dx` by the spacing-weighted sum.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        let sum: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    /// `∫ f dx`.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.cell_volume()
    }
}

/// Fourier coefficients `f̂(ξ)` under `f̂(ξ) = ∫ f e^{-iξ·x} dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &Grid) -> Spectrum {
        Spectrum {
            grid: grid.clone(),
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Spectrum> {
        if coeffs.len() != grid.len() {
            return Err(Error::Structural(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Spectrum {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub(crate) fn new_unchecked(grid: &Grid, coeffs: Vec<Complex64>) -> Spectrum {
        Spectrum {
            grid: grid.clone(),
            coeffs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Multiplies every mode by `symbol(flat_index)`.
    pub fn apply(&self, symbol: impl Fn(usize) -> Complex64 + Sync) -> Spectrum {
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .with_min_len(PAR_CHUNK)
            .map(|(idx, &c)| c * symbol(idx))
            .collect();
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Multiplies every mode by a real symbol.
    pub fn apply_real(&self, symbol: impl Fn(usize) -> f64 + Sync) -> Spectrum {
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .with_min_len(PAR_CHUNK)
            .map(|(idx, &c)| c * symbol(idx))
            .collect();
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn apply_in_place(&mut self, symbol: impl Fn(usize) -> Complex64 + Sync) {
        self.coeffs
            .par_iter_mut()
            .enumerate()
            .with_min_len(PAR_CHUNK)
            .for_each(|(idx, c)| *c *= symbol(idx));
    }

    pub fn zip_map(
        &self,
        other: &Spectrum,
        f: impl Fn(Complex64, Complex64) -> Complex64 + Sync,
    ) -> Result<Spectrum> {
        self.grid.check_same(&other.grid)?;
        let coeffs = self
            .coeffs
            .par_iter()
            .zip(other.coeffs.par_iter())
            .with_min_len(PAR_CHUNK)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Spectrum {
            grid: self.grid.clone(),
            coeffs,
        })
    }

    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Spectrum) -> Result<Spectrum> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Spectrum {
        self.apply(|_| c)
    }

    /// `self + c·other` in place.
    pub fn axpy(&mut self, c: Complex64, other: &Spectrum) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.coeffs
            .par_iter_mut()
            .zip(other.coeffs.par_iter())
            .with_min_len(PAR_CHUNK)
            .for_each(|(a, &b)| *a += c * b);
        Ok(())
    }
}

/// `n` real components sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<VectorField> {
        let first = components
            .first()
            .ok_or_else(|| Error::Structural("vector field needs at least one component".into()))?;
        if components.len() != first.grid().dim() {
            return Err(Error::Structural(format!(
                "vector field on a {}-dimensional grid needs {} components, got {}",
                first.grid().dim(),
                first.grid().dim(),
                components.len()
            )));
        }
        for c in &components {
            first.grid().check_same(c.grid())?;
            if !c.is_real() {
                return Err(Error::Structural("vector field components must be real".into()));
            }
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: &Grid) -> VectorField {
        VectorField {
            components: (0..grid.dim()).map(|_| Field::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.sub(b).map(|f| f.real_part()))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(components)
    }

    pub fn scale_real(&self, c: f64) -> VectorField {
        VectorField {
            components: self.components.iter().map(|f| f.scale_real(c)).collect(),
        }
    }

    /// Pointwise `|v|²`.
    pub fn magnitude_sq(&self) -> Field {
        let grid = self.grid();
        let values = (0..grid.len())
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|idx| {
                let s: f64 = self.components.iter().map(|c| c.values[idx].re.powi(2)).sum();
                Complex64::new(s, 0.0)
            })
            .collect();
        Field::real_from_complex(grid, values)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude_sq()
            .values()
            .iter()
            .fold(0.0f64, |m, z| m.max(z.re))
            .sqrt()
    }

    pub fn has_non_finite(&self) -> bool {
        self.components.iter().any(Field::has_non_finite)
    }
}
