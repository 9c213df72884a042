//! Seeded random fields for unit tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{Field, Spectrum};
use crate::grid::Grid;
use crate::spectral::{inverse, resample};

pub fn random_field(grid: &Grid, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::from_values(grid, values).unwrap()
}

/// Random real field whose modes satisfy `|m_j| <= max_mode`.
pub fn random_band_limited(grid: &Grid, max_mode: i64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            let inside = (0..grid.dim()).all(|a| grid.mode(idx, a).abs() <= max_mode);
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if inside {
                z * grid.volume()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let s = Spectrum::from_coeffs(grid, coeffs).unwrap();
    // Real part of a band-limited field is band-limited with the same support.
    inverse(&s).real_part()
}

pub fn prolong(f: &Field, fine: &Grid) -> Field {
    resample(f, fine).unwrap()
}

/// Copies the modes of a fine spectrum that the coarse two-thirds band keeps.
pub fn restrict_band(fine: &Spectrum, coarse: &Grid) -> Spectrum {
    let fg = fine.grid();
    let mc = coarse.points() as i64;
    let mut out = Spectrum::zeros(coarse);
    for (idx, &c) in fine.coeffs().iter().enumerate() {
        let mut flat = 0usize;
        let mut keep = true;
        for axis in 0..fg.dim() {
            let m = fg.mode(idx, axis);
            if m.abs() > mc / 3 {
                keep = false;
                break;
            }
            flat = flat * mc as usize + m.rem_euclid(mc) as usize;
        }
        if keep {
            out.coeffs_mut()[flat] = c;
        }
    }
    out
}
