//! Norms on the torus: Lebesgue, Sobolev `H^s = ‖Λ^s f‖_{L²}` with
//! `Λ = (1-Δ)^{1/2}`, and the Zhidkov norm `‖f‖_{L^∞} + ‖∇f‖_{H^{s-1}}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Spectrum};
use crate::spectral::forward;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    Lp(f64),
    Linf,
    Hs(f64),
    Xs(f64),
}

impl NormKind {
    /// Short column label, e.g. `l2`, `h2`, `x3.5`.
    pub fn label(&self) -> String {
        match self {
            NormKind::L2 => "l2".into(),
            NormKind::Lp(p) => format!("l{p}"),
            NormKind::Linf => "linf".into(),
            NormKind::Hs(s) => format!("h{s}"),
            NormKind::Xs(s) => format!("x{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub kind: NormKind,
    pub value: f64,
}

impl NormValue {
    fn new(kind: NormKind, value: f64) -> Result<NormValue> {
        if value.is_finite() && value >= 0.0 {
            Ok(NormValue { kind, value })
        } else {
            Err(Error::Domain(format!("{} norm is not finite: {value}", kind.label())))
        }
    }
}

/// `(L^{-n} Σ_ξ weight(ξ) |f̂(ξ)|²)^{1/2}`.
fn weighted_spectral_norm(s: &Spectrum, weight: impl Fn(usize) -> f64) -> f64 {
    let sum: f64 = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(idx, c)| weight(idx) * c.norm_sqr())
        .sum();
    (sum / s.grid().volume()).sqrt()
}

pub fn sobolev_norm_spectrum(s: &Spectrum, order: f64) -> f64 {
    let k2 = s.grid().k_squared();
    if order == 0.0 {
        return weighted_spectral_norm(s, |_| 1.0);
    }
    weighted_spectral_norm(s, |idx| (1.0 + k2[idx]).powf(order))
}

/// Homogeneous `Ḣ^s` seminorm, `(L^{-n} Σ_{ξ≠0} |ξ|^{2s} |f̂|²)^{1/2}`.
pub fn homogeneous_sobolev_norm_spectrum(s: &Spectrum, order: f64) -> f64 {
    let k2 = s.grid().k_squared();
    weighted_spectral_norm(s, |idx| {
        if k2[idx] == 0.0 {
            0.0
        } else {
            k2[idx].powf(order)
        }
    })
}

pub fn sobolev_norm(f: &Field, order: f64) -> NormValue {
    let value = sobolev_norm_spectrum(&forward(f), order);
    NormValue {
        kind: NormKind::Hs(order),
        value,
    }
}

pub fn homogeneous_sobolev_norm(f: &Field, order: f64) -> f64 {
    homogeneous_sobolev_norm_spectrum(&forward(f), order)
}

/// `‖∇f‖_{H^{order}}` summed in ℓ² over components, from the spectrum of `f`.
pub fn gradient_sobolev_norm_spectrum(s: &Spectrum, order: f64) -> f64 {
    let grid = s.grid();
    let k2 = grid.k_squared();
    let symbols: Vec<&[f64]> = (0..grid.dim()).map(|a| grid.odd_derivative_symbol(a)).collect();
    weighted_spectral_norm(s, |idx| {
        let grad2: f64 = symbols.iter().map(|k| k[idx] * k[idx]).sum();
        grad2 * (1.0 + k2[idx]).powf(order)
    })
}

pub fn zhidkov_norm(f: &Field, order: f64) -> Result<NormValue> {
    if order <= 1.0 {
        return Err(Error::Domain(format!("Zhidkov index must exceed 1, got {order}")));
    }
    let s = forward(f);
    NormValue::new(
        NormKind::Xs(order),
        f.max_abs() + gradient_sobolev_norm_spectrum(&s, order - 1.0),
    )
}

pub fn lebesgue_norm(f: &Field, p: f64) -> Result<NormValue> {
    if p.is_infinite() && p > 0.0 {
        return NormValue::new(NormKind::Linf, f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("Lebesgue exponent must be >= 1, got {p}")));
    }
    let w = f.grid().cell_volume();
    let value = if p == 2.0 {
        (f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * w).sqrt()
    } else {
        (f.values().iter().map(|z| z.norm().powf(p)).sum::<f64>() * w).powf(1.0 / p)
    };
    let kind = if p == 2.0 { NormKind::L2 } else { NormKind::Lp(p) };
    NormValue::new(kind, value)
}

pub fn norm(f: &Field, kind: NormKind) -> Result<NormValue> {
    match kind {
        NormKind::L2 => lebesgue_norm(f, 2.0),
        NormKind::Lp(p) => lebesgue_norm(f, p),
        NormKind::Linf => lebesgue_norm(f, f64::INFINITY),
        NormKind::Hs(s) => Ok(sobolev_norm(f, s)),
        NormKind::Xs(s) => zhidkov_norm(f, s),
    }
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use statrs::function::erf::erf;

    use super::*;
    use crate::grid::Grid;
    use crate::spectral::{gradient, laplacian};
    use crate::test_support::random_band_limited;

    fn plane(grid: &Grid, modes: &[i64]) -> (Field, f64) {
        let k: Vec<f64> = modes.iter().map(|&m| grid.dk() * m as f64).collect();
        let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let f = Field::from_fn(grid, move |x| {
            Complex64::from_polar(1.0, k.iter().zip(x).map(|(a, b)| a * b).sum())
        });
        (f, kn)
    }

    #[test]
    fn constant_field_norms() {
        let grid = Grid::new(3, 8, 2.0).unwrap();
        let c = 1.7;
        let f = Field::constant(&grid, Complex64::new(c, 0.0));
        let v = grid.volume();
        for s in [-1.0, 0.0, 2.0, 3.5] {
            assert!((sobolev_norm(&f, s).value - c * v.sqrt()).abs() < 1e-12);
        }
        assert!((zhidkov_norm(&f, 2.0).unwrap().value - c).abs() < 1e-12);
        assert!((lebesgue_norm(&f, 2.0).unwrap().value - c * v.sqrt()).abs() < 1e-12);
        assert!((lebesgue_norm(&f, f64::INFINITY).unwrap().value - c).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_norms() {
        let grid = Grid::new(3, 8, 3.0).unwrap();
        let (f, kn) = plane(&grid, &[1, -2, 0]);
        let v = grid.volume();
        let s = 2.5;
        let hs = sobolev_norm(&f, s).value;
        assert!((hs - (1.0 + kn * kn).powf(s / 2.0) * v.sqrt()).abs() < 1e-10 * hs);
        let xs = zhidkov_norm(&f, s).unwrap().value;
        let expected = 1.0 + kn * (1.0 + kn * kn).powf((s - 1.0) / 2.0) * v.sqrt();
        assert!((xs - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn h2_norm_matches_physical_expansion() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let f = random_band_limited(&grid, 5, 4);
        let l2 = |g: &Field| lebesgue_norm(g, 2.0).unwrap().value.powi(2);
        let grad = gradient(&f).unwrap();
        let grad2: f64 = grad.components().iter().map(l2).sum();
        let lap = laplacian(&f);
        let expected = (l2(&f) + 2.0 * grad2 + l2(&lap)).sqrt();
        let got = sobolev_norm(&f, 2.0).value;
        assert!((got - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn zhidkov_matches_componentwise_summation() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let f = random_band_limited(&grid, 4, 8);
        let grad = gradient(&f).unwrap();
        let s = 3.0;
        let parts: f64 = grad
            .components()
            .iter()
            .map(|c| sobolev_norm(c, s - 1.0).value.powi(2))
            .sum();
        let expected = f.max_abs() + parts.sqrt();
        let got = zhidkov_norm(&f, s).unwrap().value;
        assert!((got - expected).abs() <= 1e-10 * expected);
        assert!(zhidkov_norm(&f, 1.0).is_err());
    }

    #[test]
    fn lebesgue_rejects_small_exponent() {
        let grid = Grid::new(1, 8, 1.0).unwrap();
        assert!(lebesgue_norm(&Field::zeros(&grid), 0.5).is_err());
    }

    #[test]
    fn l4_norm_of_gaussian_matches_quadrature() {
        // ∫ e^{-4|x|²} dx over ℝ³ = (π/4)^{3/2}; the box truncation is below 1e-20.
        let grid = Grid::new(3, 64, 10.0).unwrap();
        let c = grid.center();
        let f = Field::from_real_fn(&grid, move |x| {
            (-x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).exp()
        });
        let expected = (std::f64::consts::PI / 4.0).powf(1.5).powf(0.25);
        let got = lebesgue_norm(&f, 4.0).unwrap().value;
        assert!((got - expected).abs() <= 1e-6 * expected);
        // Cross-check the one-dimensional factor with an independent erf formula.
        let one_d = (std::f64::consts::PI / 4.0).sqrt() * erf(2.0 * 5.0);
        assert!((one_d.powi(3) - expected.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn sobolev_zero_is_l2() {
        let grid = Grid::new(2, 16, 1.5).unwrap();
        let f = random_band_limited(&grid, 6, 77);
        let a = sobolev_norm(&f, 0.0).value;
        let b = lebesgue_norm(&f, 2.0).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
    }
}
