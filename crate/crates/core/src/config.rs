//! JSON run configuration.
//!
//! Every section rejects unknown keys so that a typo cannot silently fall
//! back to a default.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::Coefficient;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::kernel::{default_quad, outside_mass, StableIndex};
use crate::ldp::{HoelderParams, TailSpec};
use crate::noise::SpectralMeasure;
use crate::ratefn::RateSpec;
use crate::solver::SimConfig;

/// Largest semigroup mass allowed outside the box under `strict_truncation`.
pub const TRUNCATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSection {
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_length: f64,
    pub points_per_axis: usize,
    /// Refuse to run when the Green function puts more than `1e-8` of its
    /// mass outside the box at the horizon.
    #[serde(default)]
    pub strict_truncation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub spectral: SpectralMeasure,
    /// Exponent of the integrability condition.
    pub eta: f64,
    #[serde(default)]
    pub allow_unverified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub b: Coefficient,
    pub sigma: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub save_every: usize,
    pub epsilon: f64,
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Evaluation points for `kernel-table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub times: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            times: vec![1.0],
            x_min: -5.0,
            x_max: 5.0,
            points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub index: IndexSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp: Option<TailSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hoelder: Option<HoelderParams>,
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("missing required section `{name}`")))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    /// Canonical JSON (sections in fixed order, no whitespace).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn stable_index(&self) -> Result<StableIndex> {
        StableIndex::new(self.index.alpha.clone(), self.index.delta.clone())
    }

    pub fn kernel_section(&self) -> KernelSection {
        self.kernel.clone().unwrap_or_default()
    }

    pub fn measure_section(&self) -> Result<&MeasureSection> {
        require(&self.measure, "measure")
    }

    pub fn time_section(&self) -> Result<&TimeSection> {
        require(&self.time, "time")
    }

    pub fn tail_spec(&self) -> Result<&TailSpec> {
        require(&self.ldp, "ldp")
    }

    pub fn hoelder_params(&self) -> Result<&HoelderParams> {
        require(&self.hoelder, "hoelder")
    }

    pub fn rate_spec(&self) -> RateSpec {
        self.rate.clone().unwrap_or_default()
    }

    pub fn set_seed(&mut self, seed: u64) -> Result<()> {
        self.time
            .as_mut()
            .ok_or_else(|| Error::Validation("missing required section `time`".into()))?
            .seed = seed;
        Ok(())
    }

    /// Build and validate the simulation configuration. Also returns the
    /// Green-function mass outside the box at the horizon.
    pub fn sim_config(&self) -> Result<(SimConfig, f64)> {
        let idx = self.stable_index()?;
        let g = require(&self.grid, "grid")?;
        let grid = FrequencyGrid::new(idx.dim(), g.half_length, g.points_per_axis)?;
        let m = self.measure_section()?;
        let c = require(&self.coefficients, "coefficients")?;
        let t = self.time_section()?;
        let cfg = SimConfig {
            idx,
            grid,
            measure: m.spectral.clone(),
            eta: m.eta,
            horizon: t.horizon,
            n_steps: t.n_steps,
            save_every: t.save_every,
            epsilon: t.epsilon,
            drift: c.b,
            diffusion: c.sigma,
            seed: t.seed,
            allow_unverified_measure: m.allow_unverified,
        };
        cfg.validate()?;
        let outside = outside_mass(&cfg.idx, cfg.horizon, g.half_length, default_quad())?;
        if g.strict_truncation && outside > TRUNCATION_TOLERANCE {
            return Err(Error::Validation(format!(
                "grid.half_length = {} leaves mass {outside:.3e} of the kernel outside the box at t = {} (limit {TRUNCATION_TOLERANCE:e})",
                g.half_length, cfg.horizon
            )));
        }
        if let Some(spec) = &self.rate {
            spec.validate()?;
        }
        if let Some(h) = &self.hoelder {
            h.validate()?;
        }
        Ok((cfg, outside))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"{
        "index": {"alpha": [2.0], "delta": [0.0]},
        "grid": {"half_length": 3.141592653589793, "points_per_axis": 16},
        "measure": {"spectral": {"kind": "white", "amplitude": 1.0}, "eta": 1.0},
        "coefficients": {"b": {"kind": "constant", "value": 0.0}, "sigma": {"kind": "constant", "value": 1.0}},
        "time": {"horizon": 0.5, "n_steps": 8, "epsilon": 0.1, "seed": 3}
    }"#;

    #[test]
    fn parses_example() {
        let c = Config::from_json(EXAMPLE).unwrap();
        let (cfg, outside) = c.sim_config().unwrap();
        assert_eq!(cfg.n_steps, 8);
        assert_eq!(cfg.save_every, 1);
        // Gaussian with variance 1 outside [-π, π]
        assert!((outside - 1.7e-3).abs() < 1e-4, "{outside}");
    }

    #[test]
    fn unknown_key_named() {
        let bad = EXAMPLE.replace("\"seed\": 3", "\"seed\": 3, \"sead\": 4");
        let err = Config::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("sead"), "{err}");
    }

    #[test]
    fn missing_field_is_validation() {
        let bad = EXAMPLE.replace("\"epsilon\": 0.1,", "");
        let err = Config::from_json(&bad).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn strict_truncation_rejects_small_box() {
        let strict = EXAMPLE.replace("\"points_per_axis\": 16", "\"points_per_axis\": 16, \"strict_truncation\": true");
        let c = Config::from_json(&strict).unwrap();
        assert!(c.sim_config().unwrap_err().is_validation());
    }

    #[test]
    fn hash_is_stable() {
        let a = Config::from_json(EXAMPLE).unwrap();
        let b = Config::from_json(&EXAMPLE.replace('\n', " ")).unwrap();
        assert_eq!(a.sha256(), b.sha256());
    }
}
