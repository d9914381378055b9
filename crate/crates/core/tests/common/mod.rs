#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use stable_spde::{Coefficient, FrequencyGrid, SimConfig, SpectralMeasure, StableIndex};

/// One-dimensional configuration on `[-π, π)` with `b ≡ 0`, `σ ≡ 1`.
pub fn linear_1d(alpha: f64, delta: f64, n: usize, n_steps: usize, horizon: f64) -> SimConfig {
    SimConfig {
        idx: StableIndex::new(vec![alpha], vec![delta]).unwrap(),
        grid: FrequencyGrid::new(1, PI, n).unwrap(),
        measure: SpectralMeasure::White { amplitude: 1.0 },
        eta: 1.0,
        horizon,
        n_steps,
        save_every: 1,
        epsilon: 1.0,
        drift: Coefficient::ZERO,
        diffusion: Coefficient::constant(1.0),
        seed: 20240611,
        allow_unverified_measure: false,
    }
}

/// Bounded, non-constant diffusion and a contracting linear drift.
pub fn nonlinear_1d(alpha: f64, delta: f64, n: usize, n_steps: usize, horizon: f64) -> SimConfig {
    SimConfig {
        drift: Coefficient::linear(-0.5, 0.1),
        diffusion: Coefficient::Tanh {
            amplitude: 0.5,
            scale: 1.5,
            offset: 1.0,
        },
        ..linear_1d(alpha, delta, n, n_steps, horizon)
    }
}

/// Generator symbol acting on the plane wave `e^{iξx}` of the grid mode with
/// signed index `k`; the Nyquist mode uses the real part.
pub fn plane_wave_symbol(alpha: f64, delta: f64, grid: &FrequencyGrid, k: i64) -> Complex64 {
    if k == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let xi = PI * k as f64 / grid.half_length();
    let psi = |z: f64| -> Complex64 {
        let theta = -delta * PI / 2.0 * z.signum();
        -z.abs().powf(alpha) * Complex64::new(theta.cos(), theta.sin())
    };
    if k == -(grid.points_per_axis() as i64) / 2 {
        Complex64::new(psi(xi).re, 0.0)
    } else {
        psi(-xi)
    }
}

/// `Σ_j f(x_j) e^{iξ_k x_j} Δx` by a direct sum.
pub fn direct_transform(grid: &FrequencyGrid, f: &[f64], k: i64) -> Complex64 {
    let xi = PI * k as f64 / grid.half_length();
    (0..grid.points_per_axis())
        .map(|j| {
            let x = grid.coordinate(j);
            Complex64::from_polar(f[j], xi * x)
        })
        .sum::<Complex64>()
        * grid.spacing()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
