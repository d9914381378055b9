mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use stable_spde::ldp::{estimate_tail, TailSpec};
use stable_spde::noise::NoiseStream;
use stable_spde::ratefn::{random_control, RateSpec};
use stable_spde::{
    mode_weights, rate_minimize, solve_skeleton, weak_continuity_probe, ControlPath, FrequencyGrid, SimConfig, Solver,
    SpectralMeasure, SpectralTransform,
};

use common::{linear_1d, mean_and_se, nonlinear_1d};

/// A smooth control on two low modes, defined in continuous time so it can be
/// resampled on any step size (midpoint of each step).
fn smooth_control(solver: &Solver) -> ControlPath {
    let dt = solver.dt();
    let grid = solver.grid().clone();
    ControlPath::from_fn(solver, |step, flat| {
        let t = (step as f64 + 0.5) * dt;
        match grid.signed_mode(flat) {
            1 => Complex64::new((2.0 * t).cos(), 0.5 * t),
            2 => Complex64::new(0.3, -(3.0 * t).sin()),
            _ => Complex64::new(0.0, 0.0),
        }
    })
}

fn refined(base: &SimConfig, level: u32) -> SimConfig {
    let f = 2usize.pow(level);
    SimConfig {
        n_steps: base.n_steps * f,
        save_every: f,
        ..base.clone()
    }
}

#[test]
fn skeleton_converges_at_first_order_in_dt() {
    let mut base = nonlinear_1d(1.5, 0.3, 16, 8, 0.5);
    base.epsilon = 0.0;
    let paths: Vec<_> = (0..=7)
        .map(|l| {
            let s = Solver::new(refined(&base, l)).unwrap();
            solve_skeleton(&s, &smooth_control(&s)).unwrap()
        })
        .collect();
    let reference = paths.last().unwrap();
    let err: Vec<f64> = paths[..4].iter().map(|p| p.sup_distance(reference)).collect();
    for w in err.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.9, "observed order {order:.3} from errors {err:?}");
    }
}

#[test]
fn picard_iterates_contract() {
    let solver = Solver::new(nonlinear_1d(1.5, 0.3, 16, 16, 0.25)).unwrap();
    let rep = solver.picard_solve(None, 1, 100, 1e-12).unwrap();
    let d = &rep.distances;
    assert!(d.len() >= 3 && *d.last().unwrap() < 1e-12);
    // geometric (in fact factorial) decay after the first iterate
    for w in d[1..].windows(2) {
        assert!(w[1] < 0.8 * w[0], "{d:?}");
    }
}

#[test]
fn picard_without_forcing_is_immediate() {
    let mut cfg = linear_1d(1.5, 0.3, 16, 16, 0.25);
    cfg.diffusion = stable_spde::Coefficient::ZERO;
    let rep = Solver::new(cfg).unwrap().picard_solve(None, 0, 10, 1e-14).unwrap();
    assert_eq!(rep.distances, vec![0.0]);
}

#[test]
fn moment_grows_with_horizon_and_noise() {
    let mut last = 0.0;
    for (t, n) in [(0.25, 8), (0.5, 16), (1.0, 32)] {
        let s = Solver::new(linear_1d(1.5, 0.3, 16, n, t)).unwrap();
        let m = s.moment_estimate(2.0, 200, None).unwrap();
        assert!(m.value >= last, "{} < {last}", m.value);
        last = m.value;
    }
    // bounded uniformly over epsilon for a bounded control
    let base = Solver::new(linear_1d(1.5, 0.3, 16, 16, 0.5)).unwrap();
    let v = random_control(&base, 0.5, 4);
    let mut prev = 0.0;
    for eps in [0.1, 0.5, 1.0] {
        let m = base.with_epsilon(eps).unwrap().moment_estimate(2.0, 200, Some(&v)).unwrap();
        assert!(m.value.is_finite() && m.value >= prev);
        assert!(m.ci.0 <= m.value && m.value <= m.ci.1);
        prev = m.value;
    }
}

#[test]
fn moment_ci_shrinks_like_root_n() {
    let s = Solver::new(linear_1d(2.0, 0.0, 16, 8, 0.25)).unwrap();
    let small = s.moment_estimate(2.0, 400, None).unwrap();
    let large = s.moment_estimate(2.0, 1600, None).unwrap();
    let ratio = small.std_err / large.std_err;
    assert!((1.4..2.8).contains(&ratio), "{ratio}");
}

#[test]
fn continuity_along_shrinking_perturbation() {
    let solver = Solver::new(linear_1d(1.5, 0.3, 16, 32, 1.0)).unwrap();
    let h = random_control(&solver, 1.0, 1);
    let g = random_control(&solver, 1.0, 2);
    let seq: Vec<ControlPath> = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|n| h.combine(1.0, &g, 1.0 / n))
        .collect();
    let probe = weak_continuity_probe(&solver, &seq, &h, None).unwrap();
    // linear response: n·d_n is constant
    for (n, d) in [1.0, 2.0, 4.0, 8.0, 16.0].iter().zip(&probe.sup) {
        assert!((n * d - probe.sup[0]).abs() <= 1e-9 * probe.sup[0]);
    }
    let same = weak_continuity_probe(&solver, &[h.clone(), h.clone()], &h, None).unwrap();
    assert_eq!(same.sup, vec![0.0, 0.0]);
}

#[test]
fn oscillating_perturbation_is_weakly_null() {
    let cfg = linear_1d(1.5, 0.3, 16, 512, 1.0);
    let solver = Solver::new(cfg).unwrap();
    let dt = solver.dt();
    let h = random_control(&solver, 0.5, 3);
    let g = smooth_control(&solver);
    let freqs = [1, 2, 4, 8, 16, 32, 64];
    let seq: Vec<ControlPath> = freqs
        .iter()
        .map(|&n| {
            let mut p = g.clone();
            for (step, row) in p.coeffs.iter_mut().enumerate() {
                let s = (2.0 * PI * n as f64 * (step as f64 + 0.5) * dt).sin();
                row.iter_mut().for_each(|c| *c *= s);
            }
            h.combine(1.0, &p, 1.0)
        })
        .collect();
    let params = stable_spde::ldp::HoelderParams {
        beta1: 0.2,
        beta2: 0.3,
        eta: 0.5,
        alpha0: 1.5,
    };
    let probe = weak_continuity_probe(&solver, &seq, &h, Some(&params)).unwrap();
    let d = &probe.sup;
    assert!(d[0] / d[6] >= 10.0, "{d:?}");
    assert_eq!(probe.hoelder.as_ref().unwrap().len(), freqs.len());
}

#[test]
fn skeleton_is_lipschitz_in_control() {
    let solver = Solver::new(nonlinear_1d(1.5, 0.3, 16, 16, 0.5)).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..6 {
        let h1 = random_control(&solver, 1.0, 10 + seed);
        let h2 = h1.combine(1.0, &random_control(&solver, 0.1, 20 + seed), 1.0);
        let dz = solve_skeleton(&solver, &h1).unwrap().sup_distance(&solve_skeleton(&solver, &h2).unwrap());
        let dh = h1.combine(1.0, &h2, -1.0).squared_norm().sqrt();
        ratios.push(dz / dh);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(max.is_finite() && max < 10.0, "{ratios:?}");
}

#[test]
fn penalty_stages_are_monotone() {
    let solver = Solver::new(nonlinear_1d(1.5, 0.3, 8, 16, 0.5)).unwrap();
    let h0 = random_control(&solver, 1.0, 8);
    let target = solve_skeleton(&solver, &h0).unwrap();
    let res = rate_minimize(&solver, &target, &RateSpec::default(), None).unwrap();
    for w in res.stages.windows(2) {
        assert!(w[1].objective >= w[0].objective * (1.0 - 1e-9));
        assert!(w[1].residual <= w[0].residual * (1.0 + 1e-6));
    }
    assert!(res.estimate() <= stable_spde::control_cost(&h0) + 1e-8);
}

#[test]
fn tail_probability_decreases_with_threshold() {
    let solver = Solver::new(linear_1d(1.5, 0.3, 16, 16, 0.5)).unwrap();
    let mut prev = f64::INFINITY;
    for a in [0.2, 0.4, 0.6, 0.8] {
        let spec = TailSpec {
            threshold: a,
            eps_list: vec![0.05],
            n_replicas: 400,
            importance: false,
        };
        let row = estimate_tail(&solver, &spec).unwrap().rows[0];
        let p = row.p_hat.unwrap_or(0.0);
        assert!(p <= prev);
        assert!(row.rate.is_none_or(|r| r >= 0.0));
        prev = p;
    }
}

#[test]
fn tail_estimates_are_reproducible() {
    let solver = Solver::new(linear_1d(1.5, 0.3, 16, 16, 0.5)).unwrap();
    let spec = TailSpec {
        threshold: 0.6,
        eps_list: vec![0.1, 0.05],
        n_replicas: 200,
        importance: true,
    };
    let a = estimate_tail(&solver, &spec).unwrap();
    let b = estimate_tail(&solver, &spec).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn noise_is_stationary_and_white_in_time() {
    let grid = FrequencyGrid::new(1, PI, 32).unwrap();
    let mu = SpectralMeasure::Riesz {
        amplitude: 1.0,
        exponent: 0.5,
    };
    let w = mode_weights(&mu, &grid);
    let transform = SpectralTransform::new(&grid);
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..10_000u64)
        .map(|r| {
            let s = NoiseStream::new(5, r);
            (
                transform.inverse(&s.increment(0, &w, &grid, 0.01).coeffs),
                transform.inverse(&s.increment(1, &w, &grid, 0.01).coeffs),
            )
        })
        .collect();
    let lag = 3;
    let covs: Vec<(f64, f64)> = [2usize, 11, 20]
        .iter()
        .map(|&x| mean_and_se(&draws.iter().map(|(a, _)| a[x] * a[x + lag]).collect::<Vec<_>>()))
        .collect();
    for pair in covs.windows(2) {
        let (m0, s0) = pair[0];
        let (m1, s1) = pair[1];
        // draws are shared, so this is conservative
        assert!((m0 - m1).abs() < 3.0 * (s0 * s0 + s1 * s1).sqrt(), "{covs:?}");
    }
    let (cross, se) = mean_and_se(&draws.iter().map(|(a, b)| a[7] * b[7]).collect::<Vec<_>>());
    assert!(cross.abs() < 3.0 * se, "{cross} ± {se}");
    let (mean, se) = mean_and_se(&draws.iter().map(|(a, _)| a[9]).collect::<Vec<_>>());
    assert!(mean.abs() < 4.0 * se);
}
