//! Periodic box discretization and the n-dimensional FFT engine.
//!
//! The torus `[0, L)^n` is sampled on `M^n` points in row-major order. Axis
//! `j` of a flat index `idx` is `(idx / M^(n-1-j)) % M`. Frequencies follow the
//! usual FFT ordering: index `i` maps to the integer mode `m = i` for
//! `i < M/2` and `m = i - M` otherwise, so `m ∈ {-M/2, …, M/2-1}` and
//! `ξ = 2π m / L`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of elements handed to one rayon task in elementwise loops.
pub(crate) const PAR_CHUNK: usize = 4096;

/// Plain-data description of a grid, used for configuration and file headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points: usize,
    pub box_length: f64,
}

struct Tables {
    /// Wavenumber per axis index, `2π m(i) / L`.
    axis_k: Vec<f64>,
    /// Integer mode per axis index.
    axis_m: Vec<i64>,
    /// `|ξ|²` for every flat index.
    k2: Vec<f64>,
    /// Two-thirds-rule retention mask.
    band: Vec<bool>,
    /// Flat index of the negated mode.
    neg: Vec<usize>,
    /// Per-axis odd-derivative symbol: `ξ_j` with the Nyquist mode zeroed.
    odd_k: Vec<Vec<f64>>,
}

struct Inner {
    spec: GridSpec,
    spacing: f64,
    len: usize,
    fft: Arc<FftPair>,
    tables: OnceLock<Tables>,
}

/// A periodic grid. Cheap to clone; clones share FFT plans and wavenumber
/// tables. Equality compares the geometric metadata only.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<Inner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim())
            .field("points", &self.points())
            .field("box_length", &self.box_length())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.spec == other.inner.spec
    }
}

impl Grid {
    pub fn new(dim: usize, points: usize, box_length: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {points}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        let len = points
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        Ok(Grid {
            inner: Arc::new(Inner {
                spec: GridSpec {
                    dim,
                    points,
                    box_length,
                },
                // L / M is exact in binary floating point: M is a power of two.
                spacing: box_length / points as f64,
                len,
                fft: FftPair::cached(points),
                tables: OnceLock::new(),
            }),
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.dim, spec.points, spec.box_length)
    }

    pub fn spec(&self) -> GridSpec {
        self.inner.spec
    }

    pub fn dim(&self) -> usize {
        self.inner.spec.dim
    }

    pub fn points(&self) -> usize {
        self.inner.spec.points
    }

    pub fn box_length(&self) -> f64 {
        self.inner.spec.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// Total number of samples, `M^n`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Box volume `L^n`.
    pub fn volume(&self) -> f64 {
        self.box_length().powi(self.dim() as i32)
    }

    /// Quadrature weight of one sample, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    /// Fundamental wavenumber `2π / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.box_length()
    }

    /// Largest wavenumber retained by the two-thirds rule, `(2π/L)·M/3`.
    pub fn dealias_cutoff(&self) -> f64 {
        self.dk() * self.points() as f64 / 3.0
    }

    fn tables(&self) -> &Tables {
        self.inner.tables.get_or_init(|| {
            let m_len = self.points();
            let dk = self.dk();
            let axis_m: Vec<i64> = (0..m_len)
                .map(|i| {
                    if i < m_len / 2 {
                        i as i64
                    } else {
                        i as i64 - m_len as i64
                    }
                })
                .collect();
            let axis_k: Vec<f64> = axis_m.iter().map(|&m| dk * m as f64).collect();
            let k2 = (0..self.len())
                .map(|idx| {
                    let mut acc = 0.0;
                    let mut rest = idx;
                    for _ in 0..self.dim() {
                        let k = axis_k[rest % m_len];
                        acc += k * k;
                        rest /= m_len;
                    }
                    acc
                })
                .collect();
            let limit = (m_len / 3) as i64;
            let band = (0..self.len())
                .map(|idx| {
                    let mut rest = idx;
                    (0..self.dim()).all(|_| {
                        let m = axis_m[rest % m_len];
                        rest /= m_len;
                        m.abs() <= limit
                    })
                })
                .collect();
            let half = (m_len / 2) as i64;
            let odd_k = (0..self.dim())
                .map(|axis| {
                    let stride = m_len.pow((self.dim() - 1 - axis) as u32);
                    (0..self.len())
                        .map(|idx| {
                            let i = (idx / stride) % m_len;
                            if axis_m[i] == -half {
                                0.0
                            } else {
                                axis_k[i]
                            }
                        })
                        .collect()
                })
                .collect();
            let neg = (0..self.len())
                .map(|idx| {
                    let mut out = 0;
                    let mut stride = 1;
                    let mut rest = idx;
                    for _ in 0..self.dim() {
                        let i = rest % m_len;
                        out += ((m_len - i) % m_len) * stride;
                        stride *= m_len;
                        rest /= m_len;
                    }
                    out
                })
                .collect();
            Tables {
                axis_k,
                axis_m,
                k2,
                band,
                odd_k,
                neg,
            }
        })
    }

    /// Axis index along `axis` of the flat index `idx`.
    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        let stride = self.points().pow((self.dim() - 1 - axis) as u32);
        (idx / stride) % self.points()
    }

    /// Wavenumber `ξ_axis` at flat spectral index `idx`.
    #[inline]
    pub fn wavenumber(&self, idx: usize, axis: usize) -> f64 {
        self.tables().axis_k[self.axis_index(idx, axis)]
    }

    /// Integer mode `m_axis` at flat spectral index `idx`.
    #[inline]
    pub fn mode(&self, idx: usize, axis: usize) -> i64 {
        self.tables().axis_m[self.axis_index(idx, axis)]
    }

    /// Per-axis wavenumbers indexed by axis position.
    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.tables().axis_k
    }

    /// `|ξ|²` for every flat spectral index.
    pub fn k_squared(&self) -> &[f64] {
        &self.tables().k2
    }

    /// Wavenumber along `axis` for every flat index, Nyquist zeroed
    /// (the multiplier of an odd derivative on a real field).
    pub fn odd_derivative_symbol(&self, axis: usize) -> &[f64] {
        &self.tables().odd_k[axis]
    }

    /// Flat index of the mode `-m` for every flat index of mode `m`.
    pub fn negated_index(&self) -> &[usize] {
        &self.tables().neg
    }

    /// Physical coordinate of the sample `i` along one axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Physical position of a flat sample index.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|axis| self.coordinate(self.axis_index(idx, axis)))
            .collect()
    }

    /// Box center `(L/2, …, L/2)`.
    pub fn center(&self) -> Vec<f64> {
        vec![0.5 * self.box_length(); self.dim()]
    }

    /// Squared minimum-image distance between a sample and a point.
    pub fn periodic_distance_sq(&self, idx: usize, point: &[f64]) -> f64 {
        let l = self.box_length();
        let mut acc = 0.0;
        for (axis, &p) in point.iter().enumerate().take(self.dim()) {
            let mut d = self.coordinate(self.axis_index(idx, axis)) - p;
            d -= l * (d / l).round();
            acc += d * d;
        }
        acc
    }

    /// Whether every axis mode of `idx` satisfies `|m| <= M/3`.
    #[inline]
    pub fn in_dealias_band(&self, idx: usize) -> bool {
        self.tables().band[idx]
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.spec(),
                right: other.spec(),
            })
        }
    }

    /// In-place unnormalized n-dimensional DFT.
    pub(crate) fn fft_in_place(&self, data: &mut Vec<Complex64>, inverse: bool) {
        debug_assert_eq!(data.len(), self.len());
        let m = self.points();
        let plan = if inverse {
            &self.inner.fft.inverse
        } else {
            &self.inner.fft.forward
        };
        let scratch_len = plan.get_inplace_scratch_len();
        if self.dim() == 1 {
            let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        let rows = self.len() / m;
        let mut buffer = vec![Complex64::new(0.0, 0.0); self.len()];
        for _ in 0..self.dim() {
            data.par_chunks_mut(m * lines_per_task(m)).for_each_init(
                || vec![Complex64::new(0.0, 0.0); scratch_len],
                |scratch, chunk| plan.process_with_scratch(chunk, scratch),
            );
            // Rotate axes: [rows, m] -> [m, rows], making the next axis contiguous.
            let src: &[Complex64] = data;
            buffer
                .par_chunks_mut(rows * TRANSPOSE_BLOCK)
                .enumerate()
                .for_each(|(b, out)| {
                    let j0 = b * TRANSPOSE_BLOCK;
                    let width = out.len() / rows;
                    for i in 0..rows {
                        let row = &src[i * m + j0..i * m + j0 + width];
                        for (jj, &z) in row.iter().enumerate() {
                            out[jj * rows + i] = z;
                        }
                    }
                });
            std::mem::swap(data, &mut buffer);
        }
    }
}

const TRANSPOSE_BLOCK: usize = 8;

fn lines_per_task(m: usize) -> usize {
    (PAR_CHUNK / m).max(1)
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn cached(points: usize) -> Arc<FftPair> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPair>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("fft plan cache poisoned");
        guard
            .entry(points)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(FftPair {
                    forward: planner.plan_fft_forward(points),
                    inverse: planner.plan_fft_inverse(points),
                })
            })
            .clone()
    }
}
