//! Mild-solution and controlled dynamics on the periodic grid.
//!
//! One step of length `dt` maps spectral coefficients `c` to
//!
//! ```text
//! c' = E (c + √ε F[σ(u)·dW]) + dt·Φ F[b(u) + σ(u)·p],
//! E = exp(dt ψ),  Φ = (exp(dt ψ) - 1)/(dt ψ)
//! ```
//!
//! where `p` is the physical control field. The stochastic integrand is
//! frozen at the left point; the deterministic forcing is integrated exactly
//! over the step, which makes piecewise-constant controls exact.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coeffs::Coefficient;
use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, SpectralTransform};
use crate::kernel::{grid_symbol, StableIndex};
use crate::noise::{
    check_integrability, default_radii, mode_weights, IntegrabilityReport, NoiseIncrement, NoiseStream,
    SpectralMeasure, Verdict,
};
use crate::skeleton::{pairing_drift, ControlPath};

/// A real field on the grid at one time, with its plane-wave amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub coeffs: Vec<Complex64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(grid: &FrequencyGrid, time: f64) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
            time,
        }
    }

    pub fn from_values(transform: &SpectralTransform, values: Vec<f64>, time: f64) -> Self {
        let coeffs = transform.forward(&values);
        Self { values, coeffs, time }
    }

    pub fn from_coeffs(transform: &SpectralTransform, coeffs: Vec<Complex64>, time: f64) -> Self {
        let values = transform.inverse(&coeffs);
        Self { values, coeffs, time }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Spatial mean, i.e. the mode-0 amplitude.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }
}

/// Everything that defines one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub idx: StableIndex,
    pub grid: FrequencyGrid,
    pub measure: SpectralMeasure,
    pub eta: f64,
    pub horizon: f64,
    pub n_steps: usize,
    /// Save a snapshot every `save_every` steps (the initial field is always saved).
    pub save_every: usize,
    pub epsilon: f64,
    /// Drift `b`.
    pub drift: Coefficient,
    /// Diffusion `σ`.
    pub diffusion: Coefficient,
    pub seed: u64,
    /// Run even when the integrability check does not report "satisfied".
    pub allow_unverified_measure: bool,
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.idx.dim() != self.grid.dim() {
            return Err(Error::Validation(format!(
                "index dimension {} differs from grid dimension {}",
                self.idx.dim(),
                self.grid.dim()
            )));
        }
        self.measure.validate(self.grid.dim())?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Validation(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::Validation("n_steps must be positive".into()));
        }
        if self.save_every == 0 || self.n_steps % self.save_every != 0 {
            return Err(Error::Validation(format!(
                "save_every = {} must divide n_steps = {}",
                self.save_every, self.n_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Validation(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        self.drift.validate("b")?;
        self.diffusion.validate("sigma")?;
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }
}

/// Solution snapshots at the saved times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub fields: Vec<Field>,
    /// Noise stream the path was driven by.
    pub stream: u64,
}

impl Trajectory {
    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("trajectory always holds the initial field")
    }

    pub fn times(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.time).collect()
    }

    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .fold(0.0, |m, (a, b)| m.max(a.sup_distance(b)))
    }
}

/// `(e^z - 1)/z`, continuous at 0.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        Complex64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Precomputed operators for one configuration. Cheap to share across
/// replicas; all methods take `&self`.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SimConfig,
    transform: SpectralTransform,
    symbol: Vec<Complex64>,
    propagator: Vec<Complex64>,
    forcing: Vec<Complex64>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    measure_report: Option<IntegrabilityReport>,
}

impl Solver {
    /// Validate the configuration, check the integrability condition, and
    /// precompute the step operators.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let report = if cfg.grid.dim() <= 3 {
            Some(check_integrability(&cfg.measure, &cfg.idx, cfg.eta, &default_radii())?)
        } else {
            None
        };
        let verdict = report.as_ref().map(|r| r.verdict);
        if verdict != Some(Verdict::Satisfied) && !cfg.allow_unverified_measure {
            return Err(Error::Validation(format!(
                "integrability condition is {} for eta = {}; set allow_unverified_measure to override",
                verdict.map_or("unchecked".to_string(), |v| v.to_string()),
                cfg.eta
            )));
        }
        Ok(Self::build(cfg, report))
    }

    fn build(cfg: SimConfig, measure_report: Option<IntegrabilityReport>) -> Self {
        let grid = &cfg.grid;
        let dt = cfg.dt();
        let transform = SpectralTransform::new(grid);
        let symbol: Vec<Complex64> = (0..grid.len()).map(|k| grid_symbol(&cfg.idx, grid, k)).collect();
        let propagator = symbol.iter().map(|&s| (s * dt).exp()).collect();
        let forcing = symbol.iter().map(|&s| phi1(s * dt) * dt).collect();
        let weights = mode_weights(&cfg.measure, grid);
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Self {
            cfg,
            transform,
            symbol,
            propagator,
            forcing,
            weights,
            sqrt_weights,
            measure_report,
        }
    }

    /// Same operators with a different noise intensity.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let cfg = self.cfg.with_epsilon(epsilon);
        cfg.validate()?;
        Ok(Self {
            cfg,
            ..self.clone()
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.cfg.grid
    }

    pub fn transform(&self) -> &SpectralTransform {
        &self.transform
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// Grid symbol `ψ(k)` of the generator for every mode.
    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    /// `exp(dt ψ)` per mode.
    pub fn propagator(&self) -> &[Complex64] {
        &self.propagator
    }

    /// `dt·φ1(dt ψ)` per mode.
    pub fn forcing(&self) -> &[Complex64] {
        &self.forcing
    }

    pub fn measure_report(&self) -> Option<&IntegrabilityReport> {
        self.measure_report.as_ref()
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt()
    }

    pub fn noise_stream(&self, replica: u64) -> NoiseStream {
        NoiseStream::new(self.cfg.seed, replica)
    }

    pub fn noise_increment(&self, replica: u64, step: usize) -> NoiseIncrement {
        self.noise_stream(replica)
            .increment(step as u64, &self.weights, &self.cfg.grid, self.dt())
    }

    /// Spectral coefficients of `σ(u)·dW`.
    fn noise_forcing(&self, state: &Field, dw: &NoiseIncrement) -> Vec<Complex64> {
        match self.cfg.diffusion.as_constant() {
            Some(s) => dw.coeffs.iter().map(|c| c * s).collect(),
            None => {
                let phys = self.transform.inverse(&dw.coeffs);
                let prod: Vec<f64> = state
                    .values
                    .iter()
                    .zip(&phys)
                    .map(|(&u, &w)| self.cfg.diffusion.eval(u) * w)
                    .collect();
                self.transform.forward(&prod)
            }
        }
    }

    /// Spectral coefficients of `b(u)`, or `None` when `b ≡ 0`.
    fn drift_forcing(&self, state: &Field) -> Option<Vec<Complex64>> {
        let b = self.cfg.drift;
        if b.is_identically_zero() {
            return None;
        }
        Some(match b.as_constant() {
            Some(v) => {
                let mut c = vec![Complex64::new(0.0, 0.0); state.values.len()];
                c[0] = Complex64::new(v, 0.0);
                c
            }
            None => {
                let vals: Vec<f64> = state.values.iter().map(|&u| b.eval(u)).collect();
                self.transform.forward(&vals)
            }
        })
    }

    /// One exponential-integrator step. `control_term` is the physical
    /// control drift `σ(u)·p` from [`pairing_drift`]; `step` is only used to
    /// label a blow-up.
    pub fn step_mild(
        &self,
        state: &Field,
        dw: Option<&NoiseIncrement>,
        control_term: Option<&Field>,
        step: usize,
    ) -> Result<Field> {
        let eps = self.cfg.epsilon;
        let mut inner = state.coeffs.clone();
        if let Some(dw) = dw.filter(|_| eps > 0.0) {
            let amp = eps.sqrt();
            for (c, n) in inner.iter_mut().zip(self.noise_forcing(state, dw)) {
                *c += n * amp;
            }
        }
        let mut coeffs: Vec<Complex64> = inner
            .iter()
            .zip(&self.propagator)
            .map(|(c, e)| c * e)
            .collect();
        let drift = self.drift_forcing(state);
        if drift.is_some() || control_term.is_some() {
            for k in 0..coeffs.len() {
                let mut f = Complex64::new(0.0, 0.0);
                if let Some(d) = &drift {
                    f += d[k];
                }
                if let Some(ct) = control_term {
                    f += ct.coeffs[k];
                }
                coeffs[k] += self.forcing[k] * f;
            }
        }
        let values = self.transform.inverse(&coeffs);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        Ok(Field {
            values,
            coeffs,
            time: state.time + self.dt(),
        })
    }

    /// Drive the dynamics with `noise(step)` and an optional control, keeping
    /// every `save_every`-th snapshot.
    pub fn run_with<N>(&self, control: Option<&ControlPath>, stream: u64, mut noise: N) -> Result<Trajectory>
    where
        N: FnMut(usize) -> Option<NoiseIncrement>,
    {
        if let Some(h) = control {
            h.check_layout(self)?;
        }
        let mut state = Field::zeros(&self.cfg.grid, 0.0);
        let mut fields = Vec::with_capacity(self.cfg.n_steps / self.cfg.save_every + 1);
        fields.push(state.clone());
        for m in 0..self.cfg.n_steps {
            let dw = if self.cfg.epsilon > 0.0 { noise(m) } else { None };
            let ctrl = control.map(|h| pairing_drift(self, &state, h, m));
            state = self.step_mild(&state, dw.as_ref(), ctrl.as_ref(), m)?;
            if (m + 1) % self.cfg.save_every == 0 {
                fields.push(state.clone());
            }
        }
        Ok(Trajectory { fields, stream })
    }

    /// Simulate one replica of the mild (or controlled, when `control` is
    /// given) dynamics. Deterministic in `(seed, replica, control)`.
    pub fn simulate_path(&self, control: Option<&ControlPath>, replica: u64) -> Result<Trajectory> {
        let stream = self.noise_stream(replica);
        let (weights, grid, dt) = (&self.weights, &self.cfg.grid, self.dt());
        self.run_with(control, replica, |m| Some(stream.increment(m as u64, weights, grid, dt)))
    }

    /// Run `n` replicas in parallel; results are ordered by replica id.
    pub fn replicas<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        (0..n as u64).into_par_iter().map(f).collect()
    }

    /// Fixed-point iteration of the discrete Duhamel map with the noise of
    /// `replica` frozen. Small instances only.
    pub fn picard_solve(
        &self,
        control: Option<&ControlPath>,
        replica: u64,
        max_iter: usize,
        tol: f64,
    ) -> Result<PicardReport> {
        let n = self.cfg.grid.points_per_axis();
        let steps = self.cfg.n_steps;
        if n > 64 || steps > 64 {
            return Err(Error::Argument(format!(
                "picard_solve is limited to N ≤ 64 and n_steps ≤ 64 (got N = {n}, n_steps = {steps})"
            )));
        }
        if let Some(h) = control {
            h.check_layout(self)?;
        }
        let len = self.cfg.grid.len();
        let dt = self.dt();
        let noise: Vec<Option<NoiseIncrement>> = (0..steps)
            .map(|m| (self.cfg.epsilon > 0.0).then(|| self.noise_increment(replica, m)))
            .collect();
        // lag tables exp(l·dt·ψ) for l = 0..=steps
        let lag: Vec<Vec<Complex64>> = (0..=steps)
            .map(|l| self.symbol.iter().map(|&s| (s * (l as f64 * dt)).exp()).collect())
            .collect();

        let mut iterate: Vec<Field> = (0..=steps).map(|m| Field::zeros(&self.cfg.grid, m as f64 * dt)).collect();
        let mut distances = Vec::new();
        for _ in 0..max_iter {
            // per-step forcings evaluated on the current iterate
            let mut det = Vec::with_capacity(steps);
            let mut stoch = Vec::with_capacity(steps);
            for m in 0..steps {
                let state = &iterate[m];
                let mut f = self
                    .drift_forcing(state)
                    .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); len]);
                if let Some(h) = control {
                    let ct = pairing_drift(self, state, h, m);
                    f.iter_mut().zip(&ct.coeffs).for_each(|(a, b)| *a += b);
                }
                det.push(f);
                stoch.push(noise[m].as_ref().map(|dw| {
                    let amp = self.cfg.epsilon.sqrt();
                    self.noise_forcing(state, dw)
                        .into_iter()
                        .map(|c| c * amp)
                        .collect::<Vec<_>>()
                }));
            }
            let mut next = Vec::with_capacity(steps + 1);
            next.push(Field::zeros(&self.cfg.grid, 0.0));
            for m in 1..=steps {
                let mut c = vec![Complex64::new(0.0, 0.0); len];
                for j in 0..m {
                    let e_tail = &lag[m - 1 - j];
                    let e_full = &lag[m - j];
                    for k in 0..len {
                        c[k] += e_tail[k] * self.forcing[k] * det[j][k];
                        if let Some(s) = &stoch[j] {
                            c[k] += e_full[k] * s[k];
                        }
                    }
                }
                let field = Field::from_coeffs(&self.transform, c, m as f64 * dt);
                if field.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { step: m });
                }
                next.push(field);
            }
            let dist = next
                .iter()
                .zip(&iterate)
                .fold(0.0f64, |acc, (a, b)| acc.max(a.sup_distance(b)));
            distances.push(dist);
            iterate = next;
            if dist < tol {
                return Ok(PicardReport {
                    fields: iterate,
                    distances,
                });
            }
            let k = distances.len();
            if k >= 4 && distances[k - 4..].windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::NonContraction { distances });
            }
        }
        Err(Error::Numeric(format!(
            "Picard iteration did not reach tolerance {tol} in {max_iter} iterations (last distance {:.3e})",
            distances.last().copied().unwrap_or(f64::NAN)
        )))
    }

    /// `sup_{(t,x)} E|u(t,x)|^q` over the saved snapshots, estimated from
    /// `n_replicas` independent paths.
    pub fn moment_estimate(&self, q: f64, n_replicas: usize, control: Option<&ControlPath>) -> Result<MomentEstimate> {
        if !(2.0..=8.0).contains(&q) {
            return Err(Error::Argument(format!("moment order must lie in [2, 8], got {q}")));
        }
        if n_replicas < 2 {
            return Err(Error::Argument("need at least two replicas".into()));
        }
        let samples = self.replicas(n_replicas, |r| {
            let traj = self.simulate_path(control, r)?;
            Ok(traj
                .fields
                .iter()
                .flat_map(|f| f.values.iter().map(|v| v.abs().powf(q)))
                .collect::<Vec<f64>>())
        })?;
        let width = samples[0].len();
        let mut sum = vec![0.0; width];
        let mut sum_sq = vec![0.0; width];
        for s in &samples {
            for i in 0..width {
                sum[i] += s[i];
                sum_sq[i] += s[i] * s[i];
            }
        }
        let n = n_replicas as f64;
        let (arg, mean) = sum
            .iter()
            .map(|s| s / n)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, m)| if m > best.1 { (i, m) } else { best });
        let var = ((sum_sq[arg] / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let std_err = (var / n).sqrt();
        let points = self.cfg.grid.len();
        Ok(MomentEstimate {
            value: mean,
            std_err,
            ci: (mean - 1.96 * std_err, mean + 1.96 * std_err),
            snapshot: arg / points,
            point: arg % points,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    /// Fixed point at every step (not only saved ones).
    pub fields: Vec<Field>,
    /// Sup-distance between successive iterates.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_err: f64,
    /// 95% normal confidence interval.
    pub ci: (f64, f64),
    /// Snapshot and grid point where the supremum was attained.
    pub snapshot: usize,
    pub point: usize,
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn linear_config(n: usize, n_steps: usize, horizon: f64) -> SimConfig {
        SimConfig {
            idx: StableIndex::new(vec![2.0], vec![0.0]).unwrap(),
            grid: FrequencyGrid::new(1, std::f64::consts::PI, n).unwrap(),
            measure: SpectralMeasure::White { amplitude: 1.0 },
            eta: 1.0,
            horizon,
            n_steps,
            save_every: 1,
            epsilon: 1.0,
            drift: Coefficient::ZERO,
            diffusion: Coefficient::constant(1.0),
            seed: 2024,
            allow_unverified_measure: false,
        }
    }
}
