//! Controls in Cameron–Martin coordinates and the deterministic controlled
//! (skeleton) equation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::ldp::{hoelder_norm, HoelderParams, Samples};
use crate::solver::{Field, Solver, Trajectory};

/// A control `h ∈ L²([0,T]; H)` stored as coordinates `h_k(t)` on the active
/// modes, one row per time step (value at the step midpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    /// Flat indices of the active (positive-weight) modes.
    pub modes: Vec<usize>,
    /// `coeffs[step][i]` is the coordinate on `modes[i]`.
    pub coeffs: Vec<Vec<Complex64>>,
    pub dt: f64,
    /// Optional radius `N` of the ball the control must lie in.
    pub bound: Option<f64>,
}

impl ControlPath {
    pub fn zeros(modes: Vec<usize>, n_steps: usize, dt: f64) -> Self {
        let m = modes.len();
        Self {
            modes,
            coeffs: vec![vec![Complex64::new(0.0, 0.0); m]; n_steps],
            dt,
            bound: None,
        }
    }

    /// Zero control laid out for a solver's grid and time step.
    pub fn zeros_for(solver: &Solver) -> Self {
        Self::zeros(
            crate::noise::active_modes(solver.weights()),
            solver.config().n_steps,
            solver.dt(),
        )
    }

    /// Build from a function of `(step, mode flat index)`; the result is
    /// symmetrised so that `h(-k) = conj h(k)`.
    pub fn from_fn<F>(solver: &Solver, f: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let mut h = Self::zeros_for(solver);
        for step in 0..h.n_steps() {
            for i in 0..h.modes.len() {
                h.coeffs[step][i] = f(step, h.modes[i]);
            }
        }
        h.symmetrize(solver.grid());
        h
    }

    /// Gaussian random control with coordinate standard deviation `scale`.
    pub fn random<R: Rng + ?Sized>(solver: &Solver, scale: f64, rng: &mut R) -> Self {
        let mut h = Self::zeros_for(solver);
        for row in h.coeffs.iter_mut() {
            for c in row.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *c = Complex64::new(re, im) * scale;
            }
        }
        h.symmetrize(solver.grid());
        h
    }

    pub fn n_steps(&self) -> usize {
        self.coeffs.len()
    }

    fn position(&self, flat: usize) -> Option<usize> {
        self.modes.binary_search(&flat).ok()
    }

    /// Coordinate on mode `flat` at `step` (zero for inactive modes).
    pub fn get(&self, step: usize, flat: usize) -> Complex64 {
        self.position(flat)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[step][i])
    }

    /// Average with the conjugate partner so the control is a real field.
    /// Self-conjugate modes keep only their real part.
    pub fn symmetrize(&mut self, grid: &FrequencyGrid) {
        for row in self.coeffs.iter_mut() {
            let old = row.clone();
            for (i, &k) in self.modes.iter().enumerate() {
                let partner = grid.conjugate_index(k);
                let other = self
                    .modes
                    .binary_search(&partner)
                    .map_or(Complex64::new(0.0, 0.0), |j| old[j]);
                row[i] = 0.5 * (old[i] + other.conj());
            }
        }
    }

    pub fn hermitian_defect(&self, grid: &FrequencyGrid) -> f64 {
        let mut worst = 0.0f64;
        for step in 0..self.n_steps() {
            for &k in &self.modes {
                let d = (self.get(step, grid.conjugate_index(k)) - self.get(step, k).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `‖h‖²_{H_T} = Σ_steps Σ_k |h_k|² dt`.
    pub fn squared_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|row| row.iter().map(|c| c.norm_sqr()))
            .sum::<f64>()
            * self.dt
    }

    /// `½‖h‖²_{H_T}`.
    pub fn cost(&self) -> f64 {
        0.5 * self.squared_norm()
    }

    pub fn within_bound(&self) -> bool {
        self.bound.is_none_or(|n| self.squared_norm().sqrt() <= n)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs
            .iter_mut()
            .flat_map(|row| row.iter_mut())
            .for_each(|c| *c *= a);
        out
    }

    /// `a·self + b·other` (layouts must agree).
    pub fn combine(&self, a: f64, other: &ControlPath, b: f64) -> Self {
        let mut out = self.clone();
        for (ro, (r1, r2)) in out.coeffs.iter_mut().zip(self.coeffs.iter().zip(&other.coeffs)) {
            for (o, (x, y)) in ro.iter_mut().zip(r1.iter().zip(r2)) {
                *o = x * a + y * b;
            }
        }
        out
    }

    /// Real inner product `Σ Re(conj(a) b) dt`.
    pub fn inner(&self, other: &ControlPath) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(x, y)| (x.conj() * y).re))
            .sum::<f64>()
            * self.dt
    }

    pub(crate) fn check_layout(&self, solver: &Solver) -> Result<()> {
        let steps = solver.config().n_steps;
        if self.n_steps() != steps {
            return Err(Error::Argument(format!(
                "control has {} steps but the configuration uses {steps}",
                self.n_steps()
            )));
        }
        if (self.dt - solver.dt()).abs() > 1e-12 * solver.dt() {
            return Err(Error::Argument(format!(
                "control step {} differs from the solver step {}",
                self.dt,
                solver.dt()
            )));
        }
        let len = solver.grid().len();
        if self.modes.iter().any(|&k| k >= len) {
            return Err(Error::Argument("control refers to modes outside the grid".into()));
        }
        if self.coeffs.iter().any(|r| r.len() != self.modes.len()) {
            return Err(Error::Argument("ragged control coefficient table".into()));
        }
        if !self.within_bound() {
            return Err(Error::Argument(format!(
                "control norm {} exceeds its bound {:?}",
                self.squared_norm().sqrt(),
                self.bound
            )));
        }
        Ok(())
    }

    /// Full-grid amplitudes `√w_k h_k(step)` of the physical control field.
    pub fn field_coeffs(&self, solver: &Solver, step: usize) -> Vec<Complex64> {
        let sw = solver.sqrt_weights();
        let mut c = vec![Complex64::new(0.0, 0.0); solver.grid().len()];
        for (i, &k) in self.modes.iter().enumerate() {
            c[k] = self.coeffs[step][i] * sw[k];
        }
        c
    }
}

/// Physical drift `σ(Z)·Σ_k √w_k h_k(step) e^{iξ_k·x}`: the discrete
/// `⟨G(t-s, x-·) σ(Z(s,·)), h(s)⟩_H` with the kernel factor left to the
/// step's semigroup.
pub fn pairing_drift(solver: &Solver, state: &Field, h: &ControlPath, step: usize) -> Field {
    let coeffs = h.field_coeffs(solver, step);
    let sigma = solver.config().diffusion;
    match sigma.as_constant() {
        Some(s) => {
            let coeffs: Vec<Complex64> = coeffs.into_iter().map(|c| c * s).collect();
            let values = solver.transform().inverse(&coeffs);
            Field {
                values,
                coeffs,
                time: state.time,
            }
        }
        None => {
            let p = solver.transform().inverse(&coeffs);
            let values: Vec<f64> = state
                .values
                .iter()
                .zip(&p)
                .map(|(&u, &pv)| sigma.eval(u) * pv)
                .collect();
            Field::from_values(solver.transform(), values, state.time)
        }
    }
}

/// Deterministic controlled solution `Z^h`; no randomness is touched and the
/// noise intensity of the configuration is ignored.
pub fn solve_skeleton(solver: &Solver, h: &ControlPath) -> Result<Trajectory> {
    let deterministic = if solver.config().epsilon == 0.0 {
        solver.clone()
    } else {
        solver.with_epsilon(0.0)?
    };
    deterministic.run_with(Some(h), 0, |_| None)
}

/// Distances between `Z^{h_n}` and `Z^h` along a control sequence.
#[derive(Debug, Clone)]
pub struct ContinuityProbe {
    pub sup: Vec<f64>,
    /// Discrete Hölder norm of the difference on the central window, when
    /// exponents were supplied.
    pub hoelder: Option<Vec<f64>>,
}

pub fn weak_continuity_probe(
    solver: &Solver,
    sequence: &[ControlPath],
    limit: &ControlPath,
    params: Option<&HoelderParams>,
) -> Result<ContinuityProbe> {
    let z = solve_skeleton(solver, limit)?;
    let window = solver.grid().central_window();
    let mut sup = Vec::with_capacity(sequence.len());
    let mut hoelder = params.map(|_| Vec::with_capacity(sequence.len()));
    for h in sequence {
        let zn = solve_skeleton(solver, h)?;
        sup.push(zn.sup_distance(&z));
        if let (Some(p), Some(out)) = (params, hoelder.as_mut()) {
            let diff = Samples::from_difference(solver.grid(), &zn, &z, &window);
            out.push(hoelder_norm(&diff, p, 0));
        }
    }
    Ok(ContinuityProbe { sup, hoelder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Coefficient;
    use crate::solver::test_support::linear_config;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solver() -> Solver {
        Solver::new(linear_config(16, 16, 0.5)).unwrap()
    }

    #[test]
    fn zero_control_gives_zero_drift_and_path() {
        let s = solver();
        let h = ControlPath::zeros_for(&s);
        let z = Field::zeros(s.grid(), 0.0);
        assert!(pairing_drift(&s, &z, &h, 0).values.iter().all(|&v| v == 0.0));
        let traj = solve_skeleton(&s, &h).unwrap();
        assert!(traj.fields.iter().all(|f| f.sup_norm() == 0.0));
    }

    #[test]
    fn single_pair_drift_is_one_harmonic() {
        let s = solver();
        let k = 3usize;
        let kc = s.grid().conjugate_index(k);
        let a = Complex64::new(0.6, -0.8);
        let h = ControlPath::from_fn(&s, |_, m| {
            if m == k {
                a
            } else if m == kc {
                a.conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let drift = pairing_drift(&s, &Field::zeros(s.grid(), 0.0), &h, 0);
        let w = s.weights()[k];
        for (m, c) in drift.coeffs.iter().enumerate() {
            if m == k || m == kc {
                assert_abs_diff_eq!(c.norm(), w.sqrt() * a.norm(), epsilon = 1e-14);
            } else {
                assert!(c.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn drift_is_linear_in_control() {
        let mut cfg = linear_config(16, 8, 0.5);
        cfg.diffusion = Coefficient::Tanh {
            amplitude: 1.0,
            scale: 2.0,
            offset: 0.5,
        };
        let s = Solver::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h1 = ControlPath::random(&s, 1.0, &mut rng);
        let h2 = ControlPath::random(&s, 1.0, &mut rng);
        let state = Field::from_values(s.transform(), (0..16).map(|j| (j as f64 * 0.4).sin()).collect(), 0.0);
        let lhs = pairing_drift(&s, &state, &h1.combine(2.0, &h2, -0.5), 3);
        let d1 = pairing_drift(&s, &state, &h1, 3);
        let d2 = pairing_drift(&s, &state, &h2, 3);
        for i in 0..16 {
            assert_abs_diff_eq!(lhs.values[i], 2.0 * d1.values[i] - 0.5 * d2.values[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_bookkeeping() {
        let s = solver();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = ControlPath::random(&s, 0.7, &mut rng);
        assert!(h.hermitian_defect(s.grid()) < 1e-15);
        let a = 3.0;
        assert_abs_diff_eq!(h.scaled(a).cost(), a * a * h.cost(), epsilon = 1e-12 * h.cost());
        assert_abs_diff_eq!(h.inner(&h), h.squared_norm(), epsilon = 1e-12);
    }

    #[test]
    fn skeleton_deterministic() {
        let s = solver();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = ControlPath::random(&s, 1.0, &mut rng);
        assert_eq!(solve_skeleton(&s, &h).unwrap(), solve_skeleton(&s, &h).unwrap());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let s = solver();
        let other = Solver::new(linear_config(16, 8, 0.5)).unwrap();
        let h = ControlPath::zeros_for(&other);
        assert!(solve_skeleton(&s, &h).is_err());
        let mut bounded = ControlPath::zeros_for(&s);
        bounded.coeffs[0][0] = Complex64::new(10.0, 0.0);
        bounded.bound = Some(0.1);
        assert!(solve_skeleton(&s, &bounded).is_err());
    }

    #[test]
    fn constant_sequence_has_zero_distance() {
        let s = solver();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = ControlPath::random(&s, 1.0, &mut rng);
        let probe = weak_continuity_probe(&s, &[h.clone(), h.clone()], &h, None).unwrap();
        assert_eq!(probe.sup, vec![0.0, 0.0]);
    }
}
