//! Fourier symbol of the asymmetric fractional operator, its Green function,
//! and the spectral semigroup on the periodic grid.
//!
//! The operator acts coordinate-wise; along axis `i` its symbol is
//! `-|ξ|^α exp(-i δ π/2 sgn ξ)`. The Green function is recovered by the
//! inverse transform `(1/2π) ∫ exp(-izx + t ψ(z)) dz`, which with the
//! Hermitian structure of the integrand reduces to the half-line integral
//!
//! ```text
//! G(t, x) = (1/π) ∫_0^∞ exp(-t c z^α) cos(t s z^α - z x) dz,
//! c = cos(δπ/2), s = sin(δπ/2).
//! ```
//!
//! The folding makes the imaginary residual vanish identically, so no
//! residual needs to be discarded. The admissible range `|δ| ≤ min(α, 2-α)`
//! with `α ≠ 1` keeps `c > 0`, so the integrand always decays.
//!
//! Oscillatory quadrature leaves a ripple of order `1e-13` wherever the true
//! density is zero (the dead half-line of a totally skewed law with `α < 1`);
//! values slightly below zero are therefore expected there.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::quad::{integrate_with_breaks, uniform_breaks, QuadSpec};

/// Multi-index `(α, δ)` of the fractional operator, one entry per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableIndex {
    alpha: Vec<f64>,
    delta: Vec<f64>,
}

impl StableIndex {
    pub fn new(alpha: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Validation("index: dimension must be at least 1".into()));
        }
        if alpha.len() != delta.len() {
            return Err(Error::Validation(format!(
                "index: alpha has {} entries but delta has {}",
                alpha.len(),
                delta.len()
            )));
        }
        for (i, (&a, &d)) in alpha.iter().zip(&delta).enumerate() {
            check_pair(a, d).map_err(|msg| Error::Validation(format!("index[{i}]: {msg}")))?;
        }
        Ok(Self { alpha, delta })
    }

    /// Isotropic index with the same `(α, δ)` on every axis.
    pub fn isotropic(dim: usize, alpha: f64, delta: f64) -> Result<Self> {
        Self::new(vec![alpha; dim], vec![delta; dim])
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Smallest stability index, which governs time regularity.
    pub fn alpha0(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `S_α(ξ) = Σ |ξ_i|^{α_i}`.
    pub fn s_alpha(&self, xi: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(xi)
            .map(|(&a, &x)| x.abs().powf(a))
            .sum()
    }

    /// The Fourier symbol `ψ(ξ)`.
    pub fn symbol(&self, xi: &[f64]) -> Result<Complex64> {
        if xi.len() != self.dim() {
            return Err(Error::Argument(format!(
                "symbol: frequency has length {} but the index has dimension {}",
                xi.len(),
                self.dim()
            )));
        }
        let psi: Complex64 = self
            .alpha
            .iter()
            .zip(&self.delta)
            .zip(xi)
            .map(|((&a, &d), &x)| symbol_1d(a, d, x))
            .sum();
        debug_assert!(psi.re <= 0.0);
        Ok(psi)
    }
}

fn check_pair(alpha: f64, delta: f64) -> std::result::Result<(), String> {
    if !alpha.is_finite() || !delta.is_finite() {
        return Err("alpha and delta must be finite".into());
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(format!("alpha = {alpha} lies outside (0, 2]"));
    }
    if (alpha - 1.0).abs() < 1e-12 {
        return Err(format!("alpha = {alpha} is excluded (alpha = 1 is not admissible)"));
    }
    let bound = alpha.min(2.0 - alpha);
    if delta.abs() > bound + 1e-15 {
        return Err(format!(
            "|delta| = {} exceeds min(alpha, 2 - alpha) = {bound}",
            delta.abs()
        ));
    }
    Ok(())
}

/// One-axis symbol `-|ξ|^α exp(-i δ π/2 sgn ξ)`.
pub fn symbol_1d(alpha: f64, delta: f64, xi: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let phase = -delta * FRAC_PI_2 * xi.signum();
    -xi.abs().powf(alpha) * Complex64::from_polar(1.0, phase)
}

/// Resolution controls for the oscillatory Fourier inversion.
#[derive(Debug, Clone, Copy)]
pub struct GreenQuadrature {
    /// Absolute tolerance on each doubling shell and on the envelope bound.
    pub tail_tol: f64,
    /// Per-panel absolute tolerance of the Gauss–Kronrod integrator.
    pub panel_tol: f64,
    /// Maximum number of truncation doublings before giving up.
    pub max_doublings: usize,
}

impl Default for GreenQuadrature {
    fn default() -> Self {
        Self {
            tail_tol: 1e-12,
            panel_tol: 1e-14,
            max_doublings: 64,
        }
    }
}

/// Integrates `∫_0^∞ exp(-t c z^α) g(z) dz` by growing a symmetric truncation
/// `[0, Z]` through doublings until the last shell and the envelope tail both
/// fall below `tail_tol`.
fn half_line_integral<G>(alpha: f64, delta: f64, t: f64, x: f64, g: G, q: GreenQuadrature) -> Result<f64>
where
    G: Fn(f64) -> f64 + Copy,
{
    let c = (delta * FRAC_PI_2).cos();
    let s = (delta * FRAC_PI_2).sin();
    let rate = t * c;
    let integrand = move |z: f64| (-rate * z.powf(alpha)).exp() * g(z);
    let scale = rate.powf(-1.0 / alpha);

    let panel_count = |a: f64, b: f64| -> usize {
        // local angular frequency of the phase t s z^α - z x
        let slope_ref = if alpha > 1.0 { b } else { a.max(scale) };
        let omega = x.abs() + t * s.abs() * alpha * slope_ref.powf(alpha - 1.0);
        (((b - a) * omega / PI).ceil() as usize + 1).min(2_000_000)
    };
    let segment = |a: f64, b: f64| -> f64 {
        let n = panel_count(a, b);
        let breaks = uniform_breaks(a, b, n);
        let spec = QuadSpec {
            abs_tol: q.panel_tol,
            rel_tol: 0.0,
            max_intervals: n + 50_000,
        };
        integrate_with_breaks(integrand, &breaks, spec).value
    };
    let envelope = |z: f64| (-rate * z.powf(alpha)).exp() * z.powf(1.0 - alpha) / (rate * alpha);

    let mut upper = scale;
    let mut value = segment(0.0, upper);
    let mut last_shell = f64::INFINITY;
    for _ in 0..q.max_doublings {
        let shell = segment(upper, 2.0 * upper);
        value += shell;
        upper *= 2.0;
        last_shell = shell.abs();
        if last_shell < q.tail_tol && envelope(upper) < q.tail_tol {
            return Ok(value);
        }
    }
    Err(Error::Quadrature {
        residual: last_shell.max(envelope(upper)),
        truncation: upper,
    })
}

fn check_green_args(alpha: f64, delta: f64, t: f64) -> Result<()> {
    check_pair(alpha, delta).map_err(Error::Argument)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Argument(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Green function `G_{α,δ}(t, x)` of the one-dimensional operator.
pub fn green_1d(alpha: f64, delta: f64, t: f64, x: f64, q: GreenQuadrature) -> Result<f64> {
    check_green_args(alpha, delta, t)?;
    let s = (delta * FRAC_PI_2).sin();
    let phase = move |z: f64| (t * s * z.powf(alpha) - z * x).cos();
    Ok(half_line_integral(alpha, delta, t, x, phase, q)? / PI)
}

/// Distribution function `∫_{-∞}^x G_{α,δ}(t, y) dy`, via the Gil-Pelaez
/// inversion of the characteristic function `exp(t ψ(u))`.
pub fn green_cdf(alpha: f64, delta: f64, t: f64, x: f64, q: GreenQuadrature) -> Result<f64> {
    check_green_args(alpha, delta, t)?;
    let s = (delta * FRAC_PI_2).sin();
    let im_over_u = move |u: f64| (t * s * u.powf(alpha) - u * x).sin() / u;
    Ok(0.5 - half_line_integral(alpha, delta, t, x, im_over_u, q)? / PI)
}

/// Product Green function on `ℝ^d`.
pub fn green_nd(idx: &StableIndex, t: f64, x: &[f64], q: GreenQuadrature) -> Result<f64> {
    if x.len() != idx.dim() {
        return Err(Error::Argument(format!(
            "green_nd: point has length {} but the index has dimension {}",
            x.len(),
            idx.dim()
        )));
    }
    idx.alpha
        .iter()
        .zip(&idx.delta)
        .zip(x)
        .try_fold(1.0, |acc, ((&a, &d), &xi)| Ok(acc * green_1d(a, d, t, xi, q)?))
}

/// Tabulate `G(t, ·)` on a list of points in parallel.
pub fn green_table(alpha: f64, delta: f64, t: f64, xs: &[f64], q: GreenQuadrature) -> Result<Vec<f64>> {
    xs.par_iter().map(|&x| green_1d(alpha, delta, t, x, q)).collect()
}

/// Breakdown of the total mass of `G(t, ·)`.
#[derive(Debug, Clone, Copy)]
pub struct MassReport {
    /// Half width of the centrally integrated window.
    pub window: f64,
    /// Adaptive spatial quadrature of `G` over `[-window, window]`.
    pub central: f64,
    /// Mass on `(-∞, -window)` from the distribution function.
    pub left_tail: f64,
    /// Mass on `(window, ∞)` from the distribution function.
    pub right_tail: f64,
}

impl MassReport {
    pub fn total(&self) -> f64 {
        self.central + self.left_tail + self.right_tail
    }
}

/// Total mass of `G(t, ·)`: adaptive spatial quadrature over a central window
/// plus both tails from the distribution function.
pub fn green_mass(alpha: f64, delta: f64, t: f64, q: GreenQuadrature) -> Result<MassReport> {
    check_green_args(alpha, delta, t)?;
    let scale = t.powf(1.0 / alpha);
    let window = 12.0 * scale;
    let breaks: Vec<f64> = [-12.0, -6.0, -3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0, 6.0, 12.0]
        .iter()
        .map(|b| b * scale)
        .collect();
    // the density itself is only known to ~1e-13, so ask for a little less
    let failure = std::sync::Mutex::new(None);
    let central = integrate_with_breaks(
        |x| match green_1d(alpha, delta, t, x, q) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        },
        &breaks,
        QuadSpec {
            abs_tol: 1e-9,
            rel_tol: 0.0,
            max_intervals: 4_000,
        },
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let left_tail = green_cdf(alpha, delta, t, -window, q)?;
    let right_tail = 1.0 - green_cdf(alpha, delta, t, window, q)?;
    Ok(MassReport {
        window,
        central: central.value,
        left_tail,
        right_tail,
    })
}

/// `max_x |G(t+s, x) - (G(t,·) * G(s,·))(x)|` for probe points `x` in
/// `[-probe, probe]`, with the convolution computed by the trapezoidal rule
/// on `points` nodes spanning `[-half_width, half_width]`.
pub fn chapman_kolmogorov_residual(
    alpha: f64,
    delta: f64,
    t: f64,
    s: f64,
    half_width: f64,
    points: usize,
    probe: f64,
    q: GreenQuadrature,
) -> Result<f64> {
    let h = 2.0 * half_width / points as f64;
    // nodes for y in [-W, W) and a table of G(s, ·) on [-2W, 2W) with the same spacing
    let ys: Vec<f64> = (0..points).map(|j| -half_width + j as f64 * h).collect();
    let wide: Vec<f64> = (0..2 * points).map(|j| -2.0 * half_width + j as f64 * h).collect();
    let gt = green_table(alpha, delta, t, &ys, q)?;
    let gs = green_table(alpha, delta, s, &wide, q)?;
    let n_probe = (probe / h).floor() as i64;
    let stride = ((2 * n_probe) / 64).max(1);
    let probes: Vec<i64> = (-n_probe..=n_probe).step_by(stride as usize).collect();
    let residuals: Result<Vec<f64>> = probes
        .par_iter()
        .map(|&m| {
            let x = m as f64 * h;
            // x - y_j = (m - j) h + W, index into `wide` is (x - y_j + 2W)/h
            let conv: f64 = (0..points)
                .map(|j| {
                    let k = m - j as i64 + (3 * points / 2) as i64;
                    gt[j] * gs[k as usize]
                })
                .sum::<f64>()
                * h;
            let direct = green_1d(alpha, delta, t + s, x, q)?;
            Ok((direct - conv).abs())
        })
        .collect();
    Ok(residuals?.into_iter().fold(0.0, f64::max))
}

/// `sup_{|x| ≤ X} G(1, x) (1 + |x|^{1+α})` for each `X` in `x_max`, evaluated on
/// a lattice of `per_unit` points per unit length. The values are the
/// empirical constant of the power-law tail bound.
pub fn tail_bound_profile(
    alpha: f64,
    delta: f64,
    x_max: &[f64],
    per_unit: usize,
    q: GreenQuadrature,
) -> Result<Vec<f64>> {
    let top = x_max.iter().copied().fold(0.0, f64::max);
    let n = (top * per_unit as f64).ceil() as usize;
    let xs: Vec<f64> = (-(n as i64)..=n as i64)
        .map(|j| j as f64 / per_unit as f64)
        .collect();
    let g = green_table(alpha, delta, 1.0, &xs, q)?;
    Ok(x_max
        .iter()
        .map(|&cap| {
            xs.iter()
                .zip(&g)
                .filter(|(x, _)| x.abs() <= cap)
                .map(|(x, v)| v * (1.0 + x.abs().powf(1.0 + alpha)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Mass of `G(t, ·)` outside `[-L, L]` along one axis.
pub fn outside_mass_1d(alpha: f64, delta: f64, t: f64, half_length: f64, q: GreenQuadrature) -> Result<f64> {
    let lo = green_cdf(alpha, delta, t, -half_length, q)?;
    let hi = green_cdf(alpha, delta, t, half_length, q)?;
    Ok((lo + (1.0 - hi)).max(0.0))
}

/// Mass of the product kernel outside the box `[-L, L]^d`.
pub fn outside_mass(idx: &StableIndex, t: f64, half_length: f64, q: GreenQuadrature) -> Result<f64> {
    let mut inside = 1.0;
    for (&a, &d) in idx.alpha.iter().zip(&idx.delta) {
        inside *= 1.0 - outside_mass_1d(a, d, t, half_length, q)?;
    }
    Ok((1.0 - inside).max(0.0))
}

/// Symbol of the generator acting on the grid mode with flat index `flat`.
///
/// A plane wave `e^{iξx}` is an eigenfunction with eigenvalue `ψ(-ξ)` under
/// the inverse-transform convention used for `G`. On an axis sitting at the
/// unmatched Nyquist index the two admissible signs are averaged, which keeps
/// the multiplier table Hermitian and the periodic semigroup exact.
pub fn grid_symbol(idx: &StableIndex, grid: &FrequencyGrid, flat: usize) -> Complex64 {
    let modes = grid.mode_index(flat);
    let nyquist = -(grid.points_per_axis() as i64) / 2;
    idx.alpha
        .iter()
        .zip(&idx.delta)
        .zip(modes)
        .map(|((&a, &d), k)| {
            let xi = grid.frequency(k);
            if k == nyquist {
                Complex64::new(symbol_1d(a, d, xi).re, 0.0)
            } else {
                symbol_1d(a, d, -xi)
            }
        })
        .sum()
}

/// Per-mode multipliers `exp(dt · ψ_grid(k))`.
pub fn semigroup_multipliers(idx: &StableIndex, grid: &FrequencyGrid, dt: f64) -> Vec<Complex64> {
    (0..grid.len())
        .map(|k| (grid_symbol(idx, grid, k) * dt).exp())
        .collect()
}

/// Apply the semigroup for a time `dt` to spectral coefficients.
pub fn semigroup_apply(
    idx: &StableIndex,
    grid: &FrequencyGrid,
    coeffs: &[Complex64],
    dt: f64,
) -> Result<Vec<Complex64>> {
    if coeffs.len() != grid.len() || idx.dim() != grid.dim() {
        return Err(Error::Argument(format!(
            "semigroup_apply: {} coefficients for a grid of {} modes",
            coeffs.len(),
            grid.len()
        )));
    }
    Ok(coeffs
        .iter()
        .zip(semigroup_multipliers(idx, grid, dt))
        .map(|(c, m)| c * m)
        .collect())
}

/// Default spatial quadrature for normalisation checks.
pub fn default_quad() -> GreenQuadrature {
    GreenQuadrature::default()
}
