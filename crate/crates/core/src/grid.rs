//! Periodic space grid `[-L, L)^d` and its discrete Fourier bookkeeping.
//!
//! Spectral coefficients are amplitudes of plane waves: a real field is
//! `u(x_j) = Σ_k c_k exp(i ξ_k · x_j)` with `ξ_k = π k / L` and
//! `k ∈ {-N/2, …, N/2-1}^d`. Flat indices follow FFT ordering on every axis.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid with `N` points per axis on `[-L, L)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    half_length: f64,
    points_per_axis: usize,
    dim: usize,
}

impl FrequencyGrid {
    pub fn new(dim: usize, half_length: f64, points_per_axis: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("grid: dimension must be at least 1".into()));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::Validation(format!(
                "grid: half_length must be positive, got {half_length}"
            )));
        }
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::Validation(format!(
                "grid: points_per_axis must be a power of two and at least 4, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as f64).powi(dim as i32);
        if total > (1u64 << 24) as f64 {
            return Err(Error::Validation(format!("grid: {total} points exceed the 2^24 limit")));
        }
        Ok(Self {
            half_length,
            points_per_axis,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total number of grid points (= number of modes).
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mesh width `2L/N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points_per_axis as f64
    }

    /// Volume element `(2L/N)^d` of the spatial Riemann sum.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Frequency spacing `π/L`.
    pub fn frequency_step(&self) -> f64 {
        std::f64::consts::PI / self.half_length
    }

    /// `(π/L)^d`, the spectral volume element.
    pub fn frequency_cell(&self) -> f64 {
        self.frequency_step().powi(self.dim as i32)
    }

    /// Frequency of the signed mode number `k` along one axis.
    pub fn frequency(&self, k: i64) -> f64 {
        k as f64 * self.frequency_step()
    }

    /// Signed mode number of an FFT-ordered index along one axis.
    pub fn signed_mode(&self, j: usize) -> i64 {
        let n = self.points_per_axis;
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Per-axis indices of a flat (row-major) position.
    pub fn axis_indices(&self, mut flat: usize) -> Vec<usize> {
        let n = self.points_per_axis;
        let mut out = vec![0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
        out
    }

    /// Flat position of per-axis indices.
    pub fn flat_index(&self, axes: &[usize]) -> usize {
        axes.iter().fold(0, |acc, &j| acc * self.points_per_axis + j)
    }

    /// Signed mode numbers of a flat spectral index.
    pub fn mode_index(&self, flat: usize) -> Vec<i64> {
        self.axis_indices(flat)
            .into_iter()
            .map(|j| self.signed_mode(j))
            .collect()
    }

    /// Frequency vector `ξ_k` of a flat spectral index.
    pub fn mode_frequency(&self, flat: usize) -> Vec<f64> {
        self.mode_index(flat)
            .into_iter()
            .map(|k| self.frequency(k))
            .collect()
    }

    /// Flat index of the mode `-k` (modulo `N` on every axis).
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let n = self.points_per_axis;
        let axes: Vec<usize> = self
            .axis_indices(flat)
            .into_iter()
            .map(|j| (n - j) % n)
            .collect();
        self.flat_index(&axes)
    }

    /// Physical coordinate `-L + j·2L/N` along one axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    /// Physical position of a flat grid index.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.axis_indices(flat)
            .into_iter()
            .map(|j| self.coordinate(j))
            .collect()
    }

    /// Flat indices of the central half `[-L/2, L/2)` in every axis.
    pub fn central_window(&self) -> Vec<usize> {
        let n = self.points_per_axis;
        let lo = n / 4;
        let hi = 3 * n / 4;
        (0..self.len())
            .filter(|&f| self.axis_indices(f).iter().all(|&j| j >= lo && j < hi))
            .collect()
    }
}

/// FFT plans for a grid, shared read-only between replicas.
#[derive(Clone)]
pub struct SpectralTransform {
    grid: FrequencyGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `(-1)^{Σ k_i}`, the phase from placing the grid origin at `-L`.
    parity: Vec<f64>,
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl SpectralTransform {
    pub fn new(grid: &FrequencyGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        let parity = (0..grid.len())
            .map(|f| {
                let s: i64 = grid.mode_index(f).iter().sum();
                if s.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self {
            grid: grid.clone(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            parity,
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    fn along_axes(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Plane-wave amplitudes of complex point values.
    pub fn forward_complex(&self, values: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.grid.len());
        let mut data = values.to_vec();
        self.along_axes(&mut data, &self.forward);
        let norm = 1.0 / self.grid.len() as f64;
        data.iter_mut()
            .zip(&self.parity)
            .for_each(|(c, p)| *c *= p * norm);
        data
    }

    /// Plane-wave amplitudes of a real field.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_complex(&data)
    }

    /// Point values of a (not necessarily Hermitian) coefficient array.
    pub fn inverse_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(coeffs.len(), self.grid.len());
        let mut data: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.parity)
            .map(|(c, p)| c * p)
            .collect();
        self.along_axes(&mut data, &self.inverse);
        data
    }

    /// Real part of the point values; the imaginary part of a Hermitian array
    /// is rounding noise.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(coeffs).into_iter().map(|v| v.re).collect()
    }
}

/// Largest violation of `c(-k) = conj(c(k))`.
pub fn hermitian_defect(grid: &FrequencyGrid, coeffs: &[Complex64]) -> f64 {
    (0..grid.len())
        .map(|k| (coeffs[grid.conjugate_index(k)] - coeffs[k].conj()).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validation() {
        assert!(FrequencyGrid::new(1, 1.0, 3).is_err());
        assert!(FrequencyGrid::new(1, 1.0, 2).is_err());
        assert!(FrequencyGrid::new(1, 0.0, 8).is_err());
        assert!(FrequencyGrid::new(0, 1.0, 8).is_err());
        assert!(FrequencyGrid::new(2, 1.0, 8).is_ok());
    }

    #[test]
    fn single_harmonic_roundtrip() {
        let grid = FrequencyGrid::new(1, 3.0, 16).unwrap();
        let tr = SpectralTransform::new(&grid);
        let xi = grid.frequency(2);
        let values: Vec<f64> = (0..16).map(|j| (xi * grid.coordinate(j)).cos()).collect();
        let c = tr.forward(&values);
        // cos = (e^{iξx} + e^{-iξx})/2
        assert_abs_diff_eq!(c[2].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c[14].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c[2].im, 0.0, epsilon = 1e-14);
        let back = tr.inverse(&c);
        for (a, b) in back.iter().zip(&values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn two_dimensional_roundtrip_and_symmetry() {
        let grid = FrequencyGrid::new(2, 2.0, 8).unwrap();
        let tr = SpectralTransform::new(&grid);
        let values: Vec<f64> = (0..grid.len())
            .map(|f| {
                let p = grid.position(f);
                (p[0] * 1.3).sin() + p[1] * p[1] - 0.2 * p[0] * p[1]
            })
            .collect();
        let c = tr.forward(&values);
        assert!(hermitian_defect(&grid, &c) < 1e-14);
        let back = tr.inverse_complex(&c);
        for (a, b) in back.iter().zip(&values) {
            assert_abs_diff_eq!(a.re, *b, epsilon = 1e-12);
            assert!(a.im.abs() < 1e-13);
        }
    }

    #[test]
    fn conjugate_index_involution() {
        let grid = FrequencyGrid::new(2, 1.0, 8).unwrap();
        for f in 0..grid.len() {
            assert_eq!(grid.conjugate_index(grid.conjugate_index(f)), f);
        }
        // Nyquist on both axes is self-conjugate
        let ny = grid.flat_index(&[4, 4]);
        assert_eq!(grid.conjugate_index(ny), ny);
    }

    #[test]
    fn central_window_is_half() {
        let grid = FrequencyGrid::new(2, 1.0, 8).unwrap();
        let w = grid.central_window();
        assert_eq!(w.len(), 16);
        for f in w {
            for x in grid.position(f) {
                assert!((-0.5..0.5).contains(&x));
            }
        }
    }
}
