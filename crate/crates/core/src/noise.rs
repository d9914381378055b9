//! Spectral measure of the noise, the integrability check against the
//! operator symbol, and sampling of white-in-time, spatially correlated
//! Gaussian increments on the grid.
//!
//! The discrete noise increment over a step of length `dt` is
//! `dW(x) = Σ_k √w_k ΔB_k exp(iξ_k·x)` where `w_k` is the spectral mass of
//! mode `k` and `ΔB_k` are complex Brownian increments with `E|ΔB_k|² = dt`,
//! Hermitian in `k`. The modes with `w_k > 0` play the role of the
//! orthonormal system of the reproducing space: `e_k = √w_k exp(iξ_k·x)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::kernel::StableIndex;
use crate::quad::{integrate, integrate_with_breaks, QuadSpec};

/// Spectral measure `μ` of the spatial correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectralMeasure {
    /// `μ(dξ) = a dξ`: space-time white noise.
    White { amplitude: f64 },
    /// `μ(dξ) = a |ξ|^{β-d} dξ` with `0 < β < d`.
    Riesz { amplitude: f64, exponent: f64 },
    /// `μ(dξ) = a 1{|ξ| ≤ c} dξ`: a finite measure.
    Flat { amplitude: f64, cutoff: f64 },
}

impl SpectralMeasure {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let amp = self.amplitude();
        if !(amp > 0.0 && amp.is_finite()) {
            return Err(Error::Validation(format!(
                "measure: amplitude must be positive, got {amp}"
            )));
        }
        match *self {
            SpectralMeasure::Riesz { exponent, .. } if !(exponent > 0.0 && exponent < dim as f64) => {
                Err(Error::Validation(format!(
                    "measure: riesz exponent must lie in (0, {dim}), got {exponent}"
                )))
            }
            SpectralMeasure::Flat { cutoff, .. } if !(cutoff > 0.0 && cutoff.is_finite()) => Err(
                Error::Validation(format!("measure: flat cutoff must be positive, got {cutoff}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            SpectralMeasure::White { amplitude }
            | SpectralMeasure::Riesz { amplitude, .. }
            | SpectralMeasure::Flat { amplitude, .. } => amplitude,
        }
    }

    /// Density with respect to Lebesgue measure at radius `r = |ξ|`.
    /// The Riesz density is set to zero at the origin.
    pub fn radial_density(&self, r: f64, dim: usize) -> f64 {
        match *self {
            SpectralMeasure::White { amplitude } => amplitude,
            SpectralMeasure::Riesz { amplitude, exponent } => {
                if r == 0.0 {
                    0.0
                } else {
                    amplitude * r.powf(exponent - dim as f64)
                }
            }
            SpectralMeasure::Flat { amplitude, cutoff } => {
                if r <= cutoff {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn density(&self, xi: &[f64]) -> f64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.radial_density(r, xi.len())
    }
}

/// Outcome of the integrability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Partial integrals `I(R)` and the resulting verdict.
#[derive(Debug, Clone)]
pub struct IntegrabilityReport {
    pub verdict: Verdict,
    pub radii: Vec<f64>,
    pub partial: Vec<f64>,
    pub increments: Vec<f64>,
}

/// `R = 2^0, 2^1, …, 2^100`. Power-law integrands converge slowly, so the
/// schedule reaches far enough for `|ξ|^{-3/2}` tails to drop below the
/// relative tolerance.
pub fn default_radii() -> Vec<f64> {
    (0..=100).map(|j| 2f64.powi(j)).collect()
}

/// Integral of `(1 + S_α(rω))^{-η}` over the unit sphere `ω ∈ S^{d-1}`.
fn spherical_average(idx: &StableIndex, eta: f64, r: f64) -> f64 {
    let spec = QuadSpec {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_intervals: 2_000,
    };
    let weight = |xi: &[f64]| (1.0 + idx.s_alpha(xi)).powf(-eta);
    match idx.dim() {
        1 => 2.0 * weight(&[r]),
        2 => {
            // the integrand only sees |ξ_i|, so fold onto the first quadrant
            4.0 * integrate(
                |th| weight(&[r * th.cos(), r * th.sin()]),
                0.0,
                PI / 2.0,
                spec,
            )
            .value
        }
        _ => {
            8.0 * integrate(
                |th| {
                    let (s, c) = th.sin_cos();
                    s * integrate(
                        |ph| weight(&[r * s * ph.cos(), r * s * ph.sin(), r * c]),
                        0.0,
                        PI / 2.0,
                        spec,
                    )
                    .value
                },
                0.0,
                PI / 2.0,
                spec,
            )
            .value
        }
    }
}

/// Check `∫ μ(dξ) / (1 + S_α(ξ))^η < ∞` through partial integrals over the
/// balls `|ξ| ≤ R` for an increasing schedule of radii.
///
/// Satisfied when the last increment is below `1e-6 · I(R_max)` and the
/// increments were shrinking; violated when the last three increments are
/// non-decreasing (growing or stuck away from zero); inconclusive otherwise.
pub fn check_integrability(
    mu: &SpectralMeasure,
    idx: &StableIndex,
    eta: f64,
    radii: &[f64],
) -> Result<IntegrabilityReport> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Argument(format!("eta must lie in (0, 1], got {eta}")));
    }
    if radii.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 truncation radii, got {}",
            radii.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::Argument("truncation radii must be positive and increasing".into()));
    }
    let d = idx.dim();
    if d > 3 {
        return Err(Error::Argument(format!(
            "integrability check supports d ≤ 3, got {d}"
        )));
    }
    mu.validate(d)?;
    let radial = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let rho = mu.radial_density(r, d);
        if rho == 0.0 {
            return 0.0;
        }
        r.powi(d as i32 - 1) * rho * spherical_average(idx, eta, r)
    };
    let spec = QuadSpec {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 10_000,
    };
    let shell = |a: f64, b: f64| {
        let mut breaks = vec![a];
        if let SpectralMeasure::Flat { cutoff, .. } = mu {
            if *cutoff > a && *cutoff < b {
                breaks.push(*cutoff);
            }
        }
        breaks.push(b);
        integrate_with_breaks(radial, &breaks, spec).value
    };

    let mut partial = Vec::with_capacity(radii.len());
    let mut increments = Vec::with_capacity(radii.len() - 1);
    let mut acc = shell(0.0, radii[0]);
    partial.push(acc);
    for w in radii.windows(2) {
        let inc = shell(w[0], w[1]);
        acc += inc;
        increments.push(inc);
        partial.push(acc);
    }

    let total = *partial.last().unwrap();
    let tol = 1e-6 * total.abs();
    let m = increments.len();
    let last = increments[m - 1];
    let shrinking = m < 2 || increments[m - 1] <= increments[m - 2];
    let non_decreasing = m >= 3
        && increments[m - 3..]
            .windows(2)
            .all(|w| w[1] >= w[0] * (1.0 - 1e-9) && w[1] > 0.0);
    let verdict = if last <= tol && shrinking {
        Verdict::Satisfied
    } else if non_decreasing {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    Ok(IntegrabilityReport {
        verdict,
        radii: radii.to_vec(),
        partial,
        increments,
    })
}

/// Spectral mass `w_k = density(ξ_k) (π/L)^d` of every grid mode.
pub fn mode_weights(mu: &SpectralMeasure, grid: &FrequencyGrid) -> Vec<f64> {
    let cell = grid.frequency_cell();
    (0..grid.len())
        .map(|k| mu.density(&grid.mode_frequency(k)) * cell)
        .collect()
}

/// Indices of the modes that carry noise (positive weight).
pub fn active_modes(weights: &[f64]) -> Vec<usize> {
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, _)| k)
        .collect()
}

/// One noise increment in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    /// Plane-wave amplitudes of the physical increment `dW`.
    pub coeffs: Vec<Complex64>,
    pub dt: f64,
    /// `(stream id, step index)` the increment was drawn from.
    pub lineage: (u64, u64),
}

impl NoiseIncrement {
    /// Brownian coordinates `ΔB_k = c_k / √w_k` (zero on inactive modes).
    pub fn brownian(&self, weights: &[f64]) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .zip(weights)
            .map(|(c, &w)| if w > 0.0 { c / w.sqrt() } else { Complex64::new(0.0, 0.0) })
            .collect()
    }
}

/// Draw Hermitian-symmetric coefficients with `E|c_k|² = dt·w_k`.
pub fn sample_increment<R: Rng + ?Sized>(
    weights: &[f64],
    grid: &FrequencyGrid,
    dt: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    debug_assert_eq!(weights.len(), grid.len());
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for k in 0..grid.len() {
        let partner = grid.conjugate_index(k);
        if partner < k {
            continue;
        }
        let var = dt * weights[k];
        if partner == k {
            let z: f64 = rng.sample(StandardNormal);
            coeffs[k] = Complex64::new(var.sqrt() * z, 0.0);
        } else {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let c = Complex64::new(x, y) * (0.5 * var).sqrt();
            coeffs[k] = c;
            coeffs[partner] = c.conj();
        }
    }
    coeffs
}

/// Counter-based random stream keyed by `(master seed, stream id)`; the step
/// index selects the ChaCha stream so any increment can be regenerated on its
/// own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self, step: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream.to_le_bytes());
        key[16..24].copy_from_slice(b"spdenois");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step);
        rng
    }

    pub fn increment(&self, step: u64, weights: &[f64], grid: &FrequencyGrid, dt: f64) -> NoiseIncrement {
        let mut rng = self.rng(step);
        NoiseIncrement {
            coeffs: sample_increment(weights, grid, dt, &mut rng),
            dt,
            lineage: (self.stream, step),
        }
    }
}

/// Real pairing `⟨φ, ψ⟩ = Σ_x φ(x) ψ(x) (2L/N)^d`.
pub fn pairing(grid: &FrequencyGrid, phi: &[f64], psi: &[f64]) -> f64 {
    phi.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{hermitian_defect, SpectralTransform};
    use approx::assert_abs_diff_eq;

    #[test]
    fn white_alpha_two_converges_to_pi() {
        let idx = StableIndex::new(vec![2.0], vec![0.0]).unwrap();
        let mu = SpectralMeasure::White { amplitude: 1.0 };
        let rep = check_integrability(&mu, &idx, 1.0, &default_radii()).unwrap();
        assert_eq!(rep.verdict, Verdict::Satisfied);
        // analytic partial integrals 2 arctan R
        for (r, p) in rep.radii.iter().zip(&rep.partial) {
            assert_abs_diff_eq!(*p, 2.0 * r.atan(), epsilon = 1e-10);
        }
        assert!((rep.partial.last().unwrap() - PI).abs() < 1e-4);
    }

    #[test]
    fn white_small_alpha_violated() {
        let idx = StableIndex::new(vec![0.5], vec![0.0]).unwrap();
        let mu = SpectralMeasure::White { amplitude: 1.0 };
        let rep = check_integrability(&mu, &idx, 1.0, &default_radii()).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
    }

    #[test]
    fn flat_always_satisfied() {
        for &(a, eta) in &[(0.5, 0.1), (1.5, 1.0), (2.0, 0.5)] {
            let idx = StableIndex::new(vec![a], vec![0.0]).unwrap();
            let mu = SpectralMeasure::Flat {
                amplitude: 2.0,
                cutoff: 5.0,
            };
            let rep = check_integrability(&mu, &idx, eta, &default_radii()).unwrap();
            assert_eq!(rep.verdict, Verdict::Satisfied);
        }
    }

    #[test]
    fn two_dimensional_riesz() {
        // μ = |ξ|^{β-2} with β = 0.5, α = 2: ∫ r^{β-1}/(1+r²) dr converges
        let idx = StableIndex::isotropic(2, 2.0, 0.0).unwrap();
        let mu = SpectralMeasure::Riesz {
            amplitude: 1.0,
            exponent: 0.5,
        };
        let rep = check_integrability(&mu, &idx, 1.0, &default_radii()).unwrap();
        // exact: 2π ∫_0^∞ r^{-1/2}/(1+r²) dr = 2π · π/(2 sin(π/4))
        let exact = 2.0 * PI * PI / (2.0 * (PI / 4.0).sin());
        assert!((rep.partial.last().unwrap() - exact).abs() / exact < 1e-3);
        assert_ne!(rep.verdict, Verdict::Violated);
    }

    #[test]
    fn bad_arguments() {
        let idx = StableIndex::new(vec![2.0], vec![0.0]).unwrap();
        let mu = SpectralMeasure::White { amplitude: 1.0 };
        assert!(check_integrability(&mu, &idx, 0.0, &default_radii()).is_err());
        assert!(check_integrability(&mu, &idx, 1.5, &default_radii()).is_err());
        assert!(check_integrability(&mu, &idx, 1.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn weight_examples() {
        let grid = FrequencyGrid::new(1, 2.0, 16).unwrap();
        let w = mode_weights(&SpectralMeasure::White { amplitude: 3.0 }, &grid);
        assert!(w.iter().all(|&v| (v - 3.0 * PI / 2.0).abs() < 1e-14));
        let w = mode_weights(
            &SpectralMeasure::Flat {
                amplitude: 1.0,
                cutoff: 4.0,
            },
            &grid,
        );
        for k in 0..grid.len() {
            let xi = grid.mode_frequency(k)[0].abs();
            assert_eq!(w[k] == 0.0, xi > 4.0);
        }
        let grid2 = FrequencyGrid::new(2, 2.0, 16).unwrap();
        let beta = 0.7;
        let w = mode_weights(
            &SpectralMeasure::Riesz {
                amplitude: 1.0,
                exponent: beta,
            },
            &grid2,
        );
        assert_eq!(w[0], 0.0);
        for k in 1..4 {
            let a = grid2.flat_index(&[k, 0]);
            let b = grid2.flat_index(&[2 * k, 0]);
            assert_abs_diff_eq!(w[a] / w[b], 2f64.powf(2.0 - beta), epsilon = 1e-12);
        }
        for k in 0..grid2.len() {
            assert_eq!(w[k], w[grid2.conjugate_index(k)]);
        }
    }

    #[test]
    fn increments_are_hermitian_and_real() {
        let grid = FrequencyGrid::new(2, 1.5, 8).unwrap();
        let tr = SpectralTransform::new(&grid);
        let w = mode_weights(&SpectralMeasure::White { amplitude: 1.0 }, &grid);
        let inc = NoiseStream::new(7, 3).increment(11, &w, &grid, 0.01);
        assert_eq!(hermitian_defect(&grid, &inc.coeffs), 0.0);
        let phys = tr.inverse_complex(&inc.coeffs);
        assert!(phys.iter().all(|v| v.im.abs() < 1e-12));
        assert_eq!(inc.lineage, (3, 11));
    }

    #[test]
    fn stream_is_deterministic_and_distinct() {
        let grid = FrequencyGrid::new(1, 1.0, 16).unwrap();
        let w = vec![1.0; 16];
        let a = NoiseStream::new(1, 0).increment(5, &w, &grid, 0.1);
        let b = NoiseStream::new(1, 0).increment(5, &w, &grid, 0.1);
        let c = NoiseStream::new(1, 0).increment(6, &w, &grid, 0.1);
        let d = NoiseStream::new(1, 1).increment(5, &w, &grid, 0.1);
        assert_eq!(a, b);
        assert_ne!(a.coeffs, c.coeffs);
        assert_ne!(a.coeffs, d.coeffs);
    }

    #[test]
    fn measure_json_rejects_unknown_key() {
        let ok: SpectralMeasure = serde_json::from_str(r#"{"kind":"flat","amplitude":1,"cutoff":2}"#).unwrap();
        assert_eq!(
            ok,
            SpectralMeasure::Flat {
                amplitude: 1.0,
                cutoff: 2.0
            }
        );
        let err = serde_json::from_str::<SpectralMeasure>(r#"{"kind":"white","amplitude":1,"bogus":2}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
