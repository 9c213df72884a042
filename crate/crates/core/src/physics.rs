//! Physical parameters and WKB initial data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

/// `ε`, `λ`, `γ` and the space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub dim: usize,
}

/// Admissible kernel exponents: `max(n/2 - 2, 0) < γ <= n - 2`.
pub fn gamma_range(dim: usize) -> (f64, f64) {
    let n = dim as f64;
    ((n / 2.0 - 2.0).max(0.0), n - 2.0)
}

pub fn check_gamma(dim: usize, gamma: f64) -> Result<()> {
    let (lo, hi) = gamma_range(dim);
    if dim < 3 || !(gamma > lo && gamma <= hi) {
        return Err(Error::Constraint(format!(
            "γ must satisfy max(n/2−2,0) < γ ≤ n−2 with n ≥ 3 (existence assumption); \
             got n = {dim}, γ = {gamma}, admissible range ({lo}, {hi}]"
        )));
    }
    Ok(())
}

impl PhysicsParams {
    pub fn new(epsilon: f64, lambda: f64, gamma: f64, dim: usize) -> Result<PhysicsParams> {
        let p = PhysicsParams {
            epsilon,
            lambda,
            gamma,
            dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            errors.push(format!("ε must lie in (0, 1], got {}", self.epsilon));
        }
        if !self.lambda.is_finite() {
            errors.push(format!("λ must be finite, got {}", self.lambda));
        }
        if let Err(e) = check_gamma(self.dim, self.gamma) {
            errors.push(e.to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Constraint(errors.join("; ")))
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<PhysicsParams> {
        PhysicsParams::new(epsilon, self.lambda, self.gamma, self.dim)
    }

    /// The same physics at `ε = 0`, the formal limit the phase/amplitude
    /// system admits.
    pub fn semiclassical_limit(&self) -> PhysicsParams {
        PhysicsParams {
            epsilon: 0.0,
            ..*self
        }
    }

    /// Parameters for solvers that accept `ε ∈ [0, 1]`.
    pub(crate) fn check_limit_epsilon(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Constraint(format!(
                "ε must lie in [0, 1] for the phase/amplitude system, got {}",
                self.epsilon
            )));
        }
        check_gamma(self.dim, self.gamma)
    }
}

/// WKB data `a₀^ε = Σ_j ε^j a_j + ε^N r^ε_N`, phase `φ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct WkbData {
    pub amplitudes: Vec<Field>,
    pub phase0: Field,
    pub remainder: Option<Field>,
}

impl WkbData {
    pub fn new(amplitudes: Vec<Field>, phase0: Field, remainder: Option<Field>) -> Result<WkbData> {
        let first = amplitudes
            .first()
            .ok_or_else(|| Error::Structural("WKB data needs at least a₀".into()))?;
        for a in &amplitudes {
            first.grid().check_same(a.grid())?;
        }
        first.grid().check_same(phase0.grid())?;
        if let Some(r) = &remainder {
            first.grid().check_same(r.grid())?;
        }
        if !phase0.is_real() {
            return Err(Error::Structural("initial phase must be real".into()));
        }
        Ok(WkbData {
            amplitudes,
            phase0,
            remainder,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phase0.grid()
    }

    /// Highest expansion index `N`.
    pub fn order(&self) -> usize {
        self.amplitudes.len() - 1
    }

    /// `a_k`, zero beyond the stored expansion.
    pub fn amplitude(&self, k: usize) -> Field {
        self.amplitudes
            .get(k)
            .cloned()
            .unwrap_or_else(|| Field::zeros(self.grid()))
    }

    /// `Σ_j ε^j a_j + ε^N r^ε_N`.
    pub fn initial_amplitude(&self, epsilon: f64) -> Result<Field> {
        let mut acc = self.amplitudes[0].clone();
        let mut power = 1.0;
        for a in &self.amplitudes[1..] {
            power *= epsilon;
            acc = acc.add(&a.scale_real(power))?;
        }
        if let Some(r) = &self.remainder {
            acc = acc.add(&r.scale_real(epsilon.powi(self.order() as i32)))?;
        }
        Ok(acc)
    }

    /// Same data with `a₀` multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> WkbData {
        WkbData {
            amplitudes: self.amplitudes.iter().map(|a| a.scale(c)).collect(),
            phase0: self.phase0.clone(),
            remainder: self.remainder.as_ref().map(|r| r.scale(c)),
        }
    }
}

/// Named initial-data recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum DataRecipe {
    /// `a₀ = A e^{-|x-c|²/w²}`, `φ₀ = P e^{-|x-c|²/w_φ²}` centred in the box.
    GaussianBump {
        amplitude: f64,
        width: f64,
        phase_amplitude: f64,
        phase_width: f64,
    },
    /// `a₀ = c`, `φ₀ = 0`.
    Homogeneous { re: f64, im: f64 },
    /// `a₀ = A e^{i k·x}` for a lattice mode `k`, `φ₀ = P e^{-|x-c|²/w_φ²}`.
    PlaneModulated {
        amplitude: f64,
        modes: Vec<i64>,
        phase_amplitude: f64,
        phase_width: f64,
    },
}

/// `A e^{-|x-c|²/w²}` centred in the box, with minimum-image distance.
pub fn gaussian_bump(grid: &Grid, amplitude: f64, width: f64) -> Field {
    let c = grid.center();
    let g = grid.clone();
    Field::from_real_fn(grid, move |x| {
        let r2: f64 = x
            .iter()
            .zip(&c)
            .map(|(a, b)| {
                let mut d = a - b;
                d -= g.box_length() * (d / g.box_length()).round();
                d * d
            })
            .sum();
        amplitude * (-r2 / (width * width)).exp()
    })
}

impl DataRecipe {
    pub fn build(&self, grid: &Grid) -> Result<WkbData> {
        match self {
            DataRecipe::GaussianBump {
                amplitude,
                width,
                phase_amplitude,
                phase_width,
            } => {
                if !(*width > 0.0 && *phase_width > 0.0) {
                    return Err(Error::Constraint("bump widths must be positive".into()));
                }
                WkbData::new(
                    vec![gaussian_bump(grid, *amplitude, *width)],
                    gaussian_bump(grid, *phase_amplitude, *phase_width),
                    None,
                )
            }
            DataRecipe::Homogeneous { re, im } => WkbData::new(
                vec![Field::constant(grid, Complex64::new(*re, *im))],
                Field::zeros(grid),
                None,
            ),
            DataRecipe::PlaneModulated {
                amplitude,
                modes,
                phase_amplitude,
                phase_width,
            } => {
                if modes.len() != grid.dim() {
                    return Err(Error::Constraint(format!(
                        "plane-modulated data needs {} modes, got {}",
                        grid.dim(),
                        modes.len()
                    )));
                }
                let k: Vec<f64> = modes.iter().map(|&m| grid.dk() * m as f64).collect();
                let amp = *amplitude;
                let a0 = Field::from_fn(grid, move |x| {
                    Complex64::from_polar(amp, k.iter().zip(x).map(|(a, b)| a * b).sum())
                });
                WkbData::new(
                    vec![a0],
                    gaussian_bump(grid, *phase_amplitude, phase_width.max(f64::MIN_POSITIVE)),
                    None,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_bounds_follow_the_existence_range() {
        assert!(check_gamma(3, 1.0).is_ok());
        assert!(check_gamma(3, 0.5).is_ok());
        assert!(check_gamma(3, 2.0).is_err());
        assert!(check_gamma(3, 0.0).is_err());
        assert!(check_gamma(5, 0.5).is_err());
        assert!(check_gamma(5, 3.0).is_ok());
        assert!(check_gamma(2, 0.5).is_err());
    }

    #[test]
    fn epsilon_range() {
        assert!(PhysicsParams::new(0.0, 1.0, 1.0, 3).is_err());
        assert!(PhysicsParams::new(1.0, 1.0, 1.0, 3).is_ok());
        assert!(PhysicsParams::new(1.5, 1.0, 1.0, 3).is_err());
        let p = PhysicsParams::new(0.1, 1.0, 1.0, 3).unwrap();
        assert!(p.semiclassical_limit().check_limit_epsilon().is_ok());
    }

    #[test]
    fn initial_amplitude_expansion() {
        let grid = Grid::new(3, 4, 1.0).unwrap();
        let one = Field::constant(&grid, Complex64::new(1.0, 0.0));
        let data = WkbData::new(
            vec![one.clone(), one.scale_real(2.0), one.scale_real(3.0)],
            Field::zeros(&grid),
            Some(one.scale_real(5.0)),
        )
        .unwrap();
        let eps: f64 = 0.1;
        let a = data.initial_amplitude(eps).unwrap();
        let expected = 1.0 + 2.0 * eps + 3.0 * eps * eps + 5.0 * eps * eps;
        assert!((a.values()[0].re - expected).abs() < 1e-15);
    }
}
