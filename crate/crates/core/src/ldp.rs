//! Desk-scale diagnostics for the small-noise behaviour: discrete Hölder
//! norms, convergence of the controlled process to the skeleton, increment
//! regularity, and tail probabilities against the linear rate.
//!
//! The compact probe set is the central half of the periodic box in every
//! axis; suprema in time are taken over the saved snapshots only, which
//! under-approximates the continuous-time supremum.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::noise::NoiseIncrement;
use crate::ratefn::{least_norm_control, RateVerdict};
use crate::skeleton::{solve_skeleton, ControlPath};
use crate::solver::{Field, Solver, Trajectory};

/// Exponents of the discrete Hölder norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoelderParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub alpha0: f64,
}

impl HoelderParams {
    /// Exponents must sit strictly below `α₀(1-η)/2` in time and `1-η` in
    /// space; `η = 1` leaves no admissible exponent.
    pub fn validate(&self) -> Result<()> {
        let t_max = self.alpha0 * (1.0 - self.eta) / 2.0;
        let x_max = 1.0 - self.eta;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Validation(format!("hoelder.eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.eta >= 1.0 {
            return Err(Error::Validation("eta = 1 admits no positive Hölder exponents".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < t_max) {
            return Err(Error::Validation(format!(
                "beta1 = {} must lie in (0, {t_max})",
                self.beta1
            )));
        }
        if !(self.beta2 > 0.0 && self.beta2 < x_max) {
            return Err(Error::Validation(format!(
                "beta2 = {} must lie in (0, {x_max})",
                self.beta2
            )));
        }
        Ok(())
    }
}

/// Values of a space-time field on a set of points and times.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// `values[time][point]`.
    pub values: Vec<Vec<f64>>,
}

impl Samples {
    pub fn from_trajectory(grid: &FrequencyGrid, traj: &Trajectory, window: &[usize]) -> Self {
        Self {
            times: traj.times(),
            positions: window.iter().map(|&f| grid.position(f)).collect(),
            values: traj
                .fields
                .iter()
                .map(|f| window.iter().map(|&i| f.values[i]).collect())
                .collect(),
        }
    }

    /// Samples of `a - b`.
    pub fn from_difference(grid: &FrequencyGrid, a: &Trajectory, b: &Trajectory, window: &[usize]) -> Self {
        let mut s = Self::from_trajectory(grid, a, window);
        for (row, f) in s.values.iter_mut().zip(&b.fields) {
            for (v, &i) in row.iter_mut().zip(window) {
                *v -= f.values[i];
            }
        }
        s
    }

    /// Samples of an explicit function `f(t, x)`.
    pub fn from_fn<F: Fn(f64, &[f64]) -> f64>(times: Vec<f64>, positions: Vec<Vec<f64>>, f: F) -> Self {
        let values = times
            .iter()
            .map(|&t| positions.iter().map(|x| f(t, x)).collect())
            .collect();
        Self {
            times,
            positions,
            values,
        }
    }
}

const MAX_PAIRS: usize = 1_000_000;

/// `sup|f| + sup |f(t,x) - f(s,y)| / (|t-s|^β₁ + ‖x-y‖^β₂)` over sample pairs.
/// All pairs are used when there are at most a million, otherwise a seeded
/// uniform subsample of that size.
pub fn hoelder_norm(samples: &Samples, params: &HoelderParams, seed: u64) -> f64 {
    let nx = samples.positions.len();
    let total = samples.times.len() * nx;
    let sup = samples
        .values
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if total < 2 {
        return sup;
    }
    let ratio = |a: usize, b: usize| -> f64 {
        let (ta, xa) = (a / nx, a % nx);
        let (tb, xb) = (b / nx, b % nx);
        let dt = (samples.times[ta] - samples.times[tb]).abs();
        let dx = samples.positions[xa]
            .iter()
            .zip(&samples.positions[xb])
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        let denom = dt.powf(params.beta1) + dx.powf(params.beta2);
        if denom == 0.0 {
            return 0.0;
        }
        (samples.values[ta][xa] - samples.values[tb][xb]).abs() / denom
    };
    let pairs = total * (total - 1) / 2;
    let mut worst = 0.0f64;
    if pairs <= MAX_PAIRS {
        for a in 0..total {
            for b in a + 1..total {
                worst = worst.max(ratio(a, b));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_PAIRS {
            let a = rng.random_range(0..total);
            let b = rng.random_range(0..total);
            worst = worst.max(ratio(a, b));
        }
    }
    sup + worst
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// `sup` over probe points of the empirical `E|u^{ε,v} - Z^v|^q`.
    pub moment: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub q: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `log moment` against `log ε`; `NaN` if any moment vanishes.
    pub slope: f64,
}

/// Simulate the controlled equation with a fixed control for every `ε` and
/// measure its distance to the skeleton. Replica `r` uses the same noise
/// stream for every `ε` (common random numbers).
pub fn controlled_convergence_test(
    solver: &Solver,
    v: &ControlPath,
    eps_list: &[f64],
    q: f64,
    n_replicas: usize,
) -> Result<ConvergenceReport> {
    if q != 2.0 && q != 4.0 {
        return Err(Error::Argument(format!("q must be 2 or 4, got {q}")));
    }
    if eps_list.len() < 4 {
        return Err(Error::Argument("need at least four values of epsilon".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::Argument("epsilon values must lie in (0, 1]".into()));
    }
    if n_replicas < 2 {
        return Err(Error::Argument("need at least two replicas".into()));
    }
    let z = solve_skeleton(solver, v)?;
    let window = solver.grid().central_window();
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let s = solver.with_epsilon(eps)?;
        let gaps = s.replicas(n_replicas, |r| {
            let u = s.simulate_path(Some(v), r)?;
            Ok(u.fields[1..]
                .iter()
                .zip(&z.fields[1..])
                .flat_map(|(a, b)| window.iter().map(move |&i| (a.values[i] - b.values[i]).abs().powf(q)))
                .collect::<Vec<f64>>())
        })?;
        let probes = gaps[0].len();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for p in 0..probes {
            let col: Vec<f64> = gaps.iter().map(|g| g[p]).collect();
            let (m, se) = mean_and_se(&col);
            if m > best.0 {
                best = (m, se);
            }
        }
        rows.push(ConvergenceRow {
            epsilon: eps,
            moment: best.0,
            std_err: best.1,
        });
    }
    let slope = if rows.iter().all(|r| r.moment > 0.0) {
        let e: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.moment).collect();
        loglog_slope(&e, &m)
    } else {
        f64::NAN
    };
    Ok(ConvergenceReport { q, rows, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LagKind {
    Time,
    Space,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementRatio {
    pub kind: LagKind,
    /// Dyadic level: lags are `base / 2^level`.
    pub level: usize,
    pub time_lag: f64,
    pub space_lag: f64,
    /// `E|Δu|^q / (|Δt|^β₁ + |Δx|^β₂)^q`.
    pub ratio: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub q: f64,
    pub ratios: Vec<IncrementRatio>,
    pub max_ratio: f64,
    /// Largest relative change `|r_j - r_{j+1}| / max(r_j, r_{j+1})` between
    /// consecutive levels of the same lag kind.
    pub variation: f64,
    /// Slope of `log E|Δ_τ u|²` against `log τ`, halved.
    pub time_exponent: f64,
}

/// Empirical increment moments at three dyadic levels in time, space and
/// both. The trajectory must be saved at least 5 times and the grid must have
/// at least 16 points per axis.
pub fn increment_regularity_test(
    solver: &Solver,
    params: &HoelderParams,
    q: f64,
    n_replicas: usize,
) -> Result<RegularityReport> {
    params.validate()?;
    if q < 2.0 {
        return Err(Error::Argument(format!("q must be at least 2, got {q}")));
    }
    let cfg = solver.config();
    let grid = solver.grid();
    let snaps = cfg.n_steps / cfg.save_every;
    if snaps < 8 || grid.points_per_axis() < 16 {
        return Err(Error::Argument(
            "regularity test needs at least 8 saved snapshots and 16 points per axis".into(),
        ));
    }
    let dt_save = solver.dt() * cfg.save_every as f64;
    let h = grid.spacing();
    let window = grid.central_window();
    let n = grid.points_per_axis();
    let axis_stride = n.pow(grid.dim() as u32 - 1);
    // (kind, level, time lag in snapshots, space lag in points)
    let mut lags = Vec::new();
    for level in 0..3 {
        let l = 4 >> level;
        lags.push((LagKind::Time, level, l, 0));
        lags.push((LagKind::Space, level, 0, l));
        lags.push((LagKind::Mixed, level, l, l));
    }
    let exponent_lags = [1usize, 2, 4, 8];

    let per_replica = solver.replicas(n_replicas, |r| {
        let traj = solver.simulate_path(None, r)?;
        let f = &traj.fields;
        let moment = |lt: usize, lx: usize, power: f64| -> f64 {
            let mut acc = 0.0;
            let mut count = 0usize;
            for t in 1..f.len() - lt {
                for &p in &window {
                    let axes = grid.axis_indices(p);
                    let shifted = p - axes[0] * axis_stride + ((axes[0] + lx) % n) * axis_stride;
                    acc += (f[t + lt].values[shifted] - f[t].values[p]).abs().powf(power);
                    count += 1;
                }
            }
            acc / count as f64
        };
        let inc: Vec<f64> = lags.iter().map(|&(_, _, lt, lx)| moment(lt, lx, q)).collect();
        let tex: Vec<f64> = exponent_lags.iter().map(|&lt| moment(lt, 0, 2.0)).collect();
        Ok((inc, tex))
    })?;

    let mut ratios = Vec::with_capacity(lags.len());
    for (i, &(kind, level, lt, lx)) in lags.iter().enumerate() {
        let col: Vec<f64> = per_replica.iter().map(|(inc, _)| inc[i]).collect();
        let (m, se) = mean_and_se(&col);
        let (tl, sl) = (lt as f64 * dt_save, lx as f64 * h);
        let denom = (tl.powf(params.beta1) + sl.powf(params.beta2)).powf(q);
        ratios.push(IncrementRatio {
            kind,
            level,
            time_lag: tl,
            space_lag: sl,
            ratio: m / denom,
            std_err: se / denom,
        });
    }
    let max_ratio = ratios.iter().fold(0.0f64, |a, r| a.max(r.ratio));
    let mut variation = 0.0f64;
    for kind in [LagKind::Time, LagKind::Space, LagKind::Mixed] {
        let rs: Vec<f64> = ratios.iter().filter(|r| r.kind == kind).map(|r| r.ratio).collect();
        for w in rs.windows(2) {
            let top = w[0].max(w[1]);
            if top > 0.0 {
                variation = variation.max((w[0] - w[1]).abs() / top);
            }
        }
    }
    let tex: Vec<f64> = (0..exponent_lags.len())
        .map(|j| per_replica.iter().map(|(_, t)| t[j]).sum::<f64>() / n_replicas as f64)
        .collect();
    let time_exponent = if tex.iter().all(|v| *v > 0.0) {
        let taus: Vec<f64> = exponent_lags.iter().map(|&l| l as f64 * dt_save).collect();
        0.5 * loglog_slope(&taus, &tex)
    } else {
        f64::NAN
    };
    Ok(RegularityReport {
        q,
        ratios,
        max_ratio,
        variation,
        time_exponent,
    })
}

/// Cheapest way for the linear skeleton to reach level `a`.
#[derive(Debug, Clone)]
pub struct BoundaryRate {
    pub rate: f64,
    /// Step at which the optimal path first touches the level.
    pub step: usize,
    /// Flat index of the touching point.
    pub point: usize,
    pub control: ControlPath,
}

/// `inf{I(f) : sup_{window, saved t} |f| ≥ a}` for the linear family. By
/// translation invariance the touching point can be fixed at the origin; for
/// each saved step the boundary target is the response of the skeleton to
/// the optimal impulse, `f = a·K(·, x₀)/K(x₀, x₀)`, and the least-norm
/// oracle is solved for it. Returns `None` when no control reaches the level.
pub fn boundary_rate(solver: &Solver, a: f64) -> Result<Option<BoundaryRate>> {
    let cfg = solver.config();
    let s = cfg
        .diffusion
        .as_constant()
        .filter(|_| cfg.drift.is_identically_zero())
        .ok_or_else(|| Error::Argument("boundary rate needs b ≡ 0 and constant σ".into()))?;
    let grid = solver.grid();
    let origin = grid.flat_index(&vec![grid.points_per_axis() / 2; grid.dim()]);
    let dt = solver.dt();
    let mut best: Option<BoundaryRate> = None;
    if s == 0.0 || a == 0.0 {
        return Ok(None);
    }
    for m in (cfg.save_every..=cfg.n_steps).step_by(cfg.save_every) {
        // per-mode controllability energy Σ_j |a_kj|² / dt
        let energy: Vec<f64> = (0..grid.len())
            .map(|k| {
                let amp = (solver.forcing()[k] * (s * solver.sqrt_weights()[k])).norm_sqr();
                let decay = (2.0 * solver.symbol()[k].re * dt).exp();
                (0..m).map(|j| amp * decay.powi((m - 1 - j) as i32)).sum::<f64>() / dt
            })
            .collect();
        let total: f64 = energy.iter().sum();
        if total == 0.0 {
            continue;
        }
        let pos = grid.position(origin);
        let coeffs: Vec<Complex64> = (0..grid.len())
            .map(|k| {
                let phase: f64 = grid.mode_frequency(k).iter().zip(&pos).map(|(x, y)| x * y).sum();
                Complex64::from_polar(a * energy[k] / total, -phase)
            })
            .collect();
        let target = Field::from_coeffs(solver.transform(), coeffs, m as f64 * dt);
        if let RateVerdict::Finite { rate, control } = least_norm_control(solver, &[(m, &target)])? {
            if best.as_ref().is_none_or(|b| rate < b.rate) {
                best = Some(BoundaryRate {
                    rate,
                    step: m,
                    point: origin,
                    control,
                });
            }
        }
    }
    Ok(best)
}

/// How a tail row was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVerdict {
    /// The dynamics are deterministic, so the probability is exactly 0 or 1.
    Exact,
    Estimated,
    /// Plain Monte Carlo saw no hits; no estimate is reported.
    InsufficientSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub epsilon: f64,
    pub p_hat: Option<f64>,
    /// `-ε log P̂`.
    pub rate: Option<f64>,
    /// 95% interval for `P̂`.
    pub ci: (f64, f64),
    pub std_err: f64,
    /// Replicas in which the event occurred.
    pub hits: usize,
    pub verdict: TailVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub threshold: f64,
    pub eps_list: Vec<f64>,
    pub n_replicas: usize,
    #[serde(default)]
    pub importance: bool,
}

#[derive(Debug, Clone)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    /// Linear-oracle boundary rate, when computable.
    pub oracle_rate: Option<f64>,
}

fn event_hit(traj: &Trajectory, window: &[usize], a: f64) -> bool {
    traj.fields
        .iter()
        .any(|f| window.iter().any(|&i| f.values[i].abs() >= a))
}

/// Estimate `P(sup_{window, saved t} |u^ε| ≥ a)` for each `ε`. With
/// `importance`, the noise is shifted by the optimal boundary control
/// (rescaled so the tilted mean path reaches `a` exactly) and each replica is
/// reweighted by the likelihood ratio.
pub fn estimate_tail(solver: &Solver, spec: &TailSpec) -> Result<TailReport> {
    let a = spec.threshold;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Argument(format!("threshold must be non-negative, got {a}")));
    }
    if spec.eps_list.is_empty() || spec.eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::Argument("epsilon values must lie in (0, 1]".into()));
    }
    if spec.n_replicas < 2 {
        return Err(Error::Argument("need at least two replicas".into()));
    }
    let cfg = solver.config();
    let window = solver.grid().central_window();
    let linear = cfg.drift.is_identically_zero() && cfg.diffusion.as_constant().is_some();
    let oracle = if linear { boundary_rate(solver, a)? } else { None };
    let deterministic = cfg.diffusion.is_identically_zero() || solver.weights().iter().all(|&w| w == 0.0);

    let mut rows = Vec::with_capacity(spec.eps_list.len());
    if deterministic {
        let traj = solve_skeleton(solver, &ControlPath::zeros_for(solver))?;
        let p = if event_hit(&traj, &window, a) { 1.0 } else { 0.0 };
        for &eps in &spec.eps_list {
            rows.push(TailRow {
                epsilon: eps,
                p_hat: Some(p),
                rate: Some(if p > 0.0 { 0.0 } else { f64::INFINITY }),
                ci: (p, p),
                std_err: 0.0,
                hits: if p > 0.0 { spec.n_replicas } else { 0 },
                verdict: TailVerdict::Exact,
            });
        }
        return Ok(TailReport {
            rows,
            oracle_rate: oracle.map(|o| o.rate),
        });
    }

    let tilt = if spec.importance {
        if !linear {
            return Err(Error::Argument("importance sampling needs the linear family".into()));
        }
        oracle.as_ref().map(|o| tilt_control(solver, o, a)).transpose()?
    } else {
        None
    };

    for &eps in &spec.eps_list {
        let s = solver.with_epsilon(eps)?;
        let samples = s.replicas(spec.n_replicas, |r| match &tilt {
            None => {
                let hit = event_hit(&s.simulate_path(None, r)?, &window, a);
                Ok((if hit { 1.0 } else { 0.0 }, hit))
            }
            Some(h) => {
                let (traj, log_lr) = tilted_path(&s, h, r)?;
                let hit = event_hit(&traj, &window, a);
                Ok((if hit { log_lr.exp() } else { 0.0 }, hit))
            }
        })?;
        let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let hits = samples.iter().filter(|s| s.1).count();
        let (p, se) = mean_and_se(&values);
        let ci = ((p - 1.96 * se).max(0.0), p + 1.96 * se);
        let row = if hits == 0 && tilt.is_none() {
            TailRow {
                epsilon: eps,
                p_hat: None,
                rate: None,
                ci: (0.0, 3.0 / spec.n_replicas as f64),
                std_err: 0.0,
                hits,
                verdict: TailVerdict::InsufficientSamples,
            }
        } else {
            TailRow {
                epsilon: eps,
                p_hat: Some(p),
                rate: Some(-eps * p.ln()),
                ci,
                std_err: se,
                hits,
                verdict: TailVerdict::Estimated,
            }
        };
        rows.push(row);
    }
    Ok(TailReport {
        rows,
        oracle_rate: oracle.map(|o| o.rate),
    })
}

/// Rescale the optimal boundary control so that the mean of the noise-shifted
/// dynamics touches `a` at the optimal point and step.
fn tilt_control(solver: &Solver, oracle: &BoundaryRate, a: f64) -> Result<ControlPath> {
    let unit = solver.with_epsilon(1.0)?;
    let h = &oracle.control;
    let mean = unit.run_with(None, 0, |m| Some(shift_increment(&unit, h, m, 1.0, None)))?;
    let save = unit.config().save_every;
    let reached = mean.fields[oracle.step / save].values[oracle.point];
    if reached.abs() < 1e-300 {
        return Err(Error::Numeric("tilted mean path does not move".into()));
    }
    Ok(h.scaled(a / reached))
}

/// `ΔB + h dt/√ε` in physical amplitudes (zero noise when `base` is `None`).
fn shift_increment(solver: &Solver, h: &ControlPath, step: usize, eps: f64, base: Option<NoiseIncrement>) -> NoiseIncrement {
    let dt = solver.dt();
    let shift = h.field_coeffs(solver, step);
    let mut inc = base.unwrap_or_else(|| NoiseIncrement {
        coeffs: vec![Complex64::new(0.0, 0.0); shift.len()],
        dt,
        lineage: (u64::MAX, step as u64),
    });
    let k = dt / eps.sqrt();
    inc.coeffs.iter_mut().zip(&shift).for_each(|(c, s)| *c += s * k);
    inc
}

/// Path driven by the shifted noise and the log likelihood ratio
/// `-⟨h, ΔB̃⟩/√ε - ½‖h‖²/ε` of the original law against the shifted one.
fn tilted_path(solver: &Solver, h: &ControlPath, replica: u64) -> Result<(Trajectory, f64)> {
    let eps = solver.config().epsilon;
    let stream = solver.noise_stream(replica);
    let weights = solver.weights();
    let dt = solver.dt();
    let mut pairing = 0.0;
    let traj = solver.run_with(None, replica, |m| {
        let base = stream.increment(m as u64, weights, solver.grid(), dt);
        let db = base.brownian(weights);
        pairing += h
            .modes
            .iter()
            .zip(&h.coeffs[m])
            .map(|(&k, c)| (c.conj() * db[k]).re)
            .sum::<f64>();
        Some(shift_increment(solver, h, m, eps, Some(base)))
    })?;
    Ok((traj, -pairing / eps.sqrt() - h.cost() / eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Coefficient;
    use crate::solver::test_support::linear_config;
    use approx::assert_abs_diff_eq;

    fn params() -> HoelderParams {
        HoelderParams {
            beta1: 0.3,
            beta2: 0.4,
            eta: 0.5,
            alpha0: 2.0,
        }
    }

    fn grid_samples<F: Fn(f64, &[f64]) -> f64>(f: F) -> Samples {
        let times: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
        let positions: Vec<Vec<f64>> = (0..16).map(|j| vec![-1.0 + j as f64 * 0.125]).collect();
        Samples::from_fn(times, positions, f)
    }

    #[test]
    fn hoelder_constant() {
        let s = grid_samples(|_, _| -1.5);
        assert_abs_diff_eq!(hoelder_norm(&s, &params(), 0), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn hoelder_linear_in_time() {
        let p = params();
        let s = grid_samples(|t, _| t);
        let t_max: f64 = 2.0;
        assert_abs_diff_eq!(hoelder_norm(&s, &p, 0), t_max + t_max.powf(1.0 - p.beta1), epsilon = 1e-12);
    }

    #[test]
    fn hoelder_linear_in_space() {
        let p = params();
        let s = grid_samples(|_, x| x[0]);
        let diam: f64 = 15.0 * 0.125;
        assert_abs_diff_eq!(hoelder_norm(&s, &p, 0), 1.0 + diam.powf(1.0 - p.beta2), epsilon = 1e-12);
    }

    #[test]
    fn hoelder_params_validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.eta = 1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.beta1 = 0.6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert_abs_diff_eq!(loglog_slope(&x, &y), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn no_noise_no_gap() {
        let mut cfg = linear_config(16, 8, 0.5);
        cfg.diffusion = Coefficient::ZERO;
        cfg.drift = Coefficient::linear(-1.0, 0.0);
        let s = Solver::new(cfg).unwrap();
        let v = ControlPath::zeros_for(&s);
        let rep = controlled_convergence_test(&s, &v, &[1.0, 0.5, 0.25, 0.125], 2.0, 4).unwrap();
        assert!(rep.rows.iter().all(|r| r.moment == 0.0));
    }

    #[test]
    fn degenerate_tails_exact() {
        let mut cfg = linear_config(16, 8, 0.5);
        cfg.diffusion = Coefficient::ZERO;
        let s = Solver::new(cfg).unwrap();
        for (a, p) in [(0.5, 0.0), (0.0, 1.0)] {
            let spec = TailSpec {
                threshold: a,
                eps_list: vec![0.1, 0.01],
                n_replicas: 8,
                importance: false,
            };
            let rep = estimate_tail(&s, &spec).unwrap();
            for row in rep.rows {
                assert_eq!(row.p_hat, Some(p));
                assert_eq!(row.verdict, TailVerdict::Exact);
            }
        }
    }

    #[test]
    fn plain_mc_reports_insufficient_samples() {
        let s = Solver::new(linear_config(16, 8, 0.5)).unwrap();
        let spec = TailSpec {
            threshold: 50.0,
            eps_list: vec![0.01],
            n_replicas: 8,
            importance: false,
        };
        let rep = estimate_tail(&s, &spec).unwrap();
        assert_eq!(rep.rows[0].verdict, TailVerdict::InsufficientSamples);
        assert!(rep.rows[0].p_hat.is_none());
    }

    #[test]
    fn boundary_rate_matches_closed_form() {
        let s = Solver::new(linear_config(16, 8, 0.5)).unwrap();
        let a = 0.7;
        let b = boundary_rate(&s, a).unwrap().unwrap();
        // brute-force controllability energy at the final step
        let dt = s.dt();
        let n = s.config().n_steps;
        let mut energy = 0.0;
        for k in 0..16 {
            for j in 0..n {
                let c = s.forcing()[k] * s.sqrt_weights()[k] * (s.symbol()[k] * ((n - 1 - j) as f64 * dt)).exp();
                energy += c.norm_sqr() / dt;
            }
        }
        assert_eq!(b.step, n);
        assert_abs_diff_eq!(b.rate, a * a / (2.0 * energy), epsilon = 1e-10);
        let z = solve_skeleton(&s, &b.control).unwrap();
        assert_abs_diff_eq!(z.final_field().values[b.point], a, epsilon = 1e-10);
    }
}
