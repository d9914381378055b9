//! Spectral laboratory for the fractional stochastic heat equation
//!
//! ```text
//! ∂u/∂t = D_δ^α u + b(u) + √ε σ(u) Ẇ
//! ```
//!
//! on a periodic box, driven by Gaussian noise that is white in time and
//! spatially correlated through a spectral measure. The crate evaluates the
//! stable Green function, synthesises the noise, integrates mild and
//! controlled solutions, solves the deterministic skeleton equation, and
//! evaluates the Freidlin–Wentzell rate function, together with Monte-Carlo
//! diagnostics of the small-noise behaviour.

pub mod cli;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod ldp;
pub mod noise;
pub mod quad;
pub mod ratefn;
pub mod skeleton;
pub mod solver;

pub use coeffs::Coefficient;
pub use error::{Error, Result};
pub use grid::{FrequencyGrid, SpectralTransform};
pub use kernel::{green_1d, green_nd, semigroup_apply, StableIndex};
pub use noise::{check_integrability, mode_weights, sample_increment, SpectralMeasure, Verdict};
pub use ratefn::{control_cost, rate_linear_oracle, rate_minimize, MatchMode, RateSpec, RateVerdict};
pub use skeleton::{pairing_drift, solve_skeleton, weak_continuity_probe, ControlPath};
pub use solver::{Field, SimConfig, Solver, Trajectory};
