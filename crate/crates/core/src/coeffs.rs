//! Registered coefficient families for the drift `b` and diffusion `σ`.
//!
//! Only these families are accepted so the global Lipschitz condition can be
//! checked from the parameters alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Coefficient {
    /// `u ↦ value`
    Constant { value: f64 },
    /// `u ↦ slope·u + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `u ↦ amplitude·tanh(scale·u) + offset`
    Tanh { amplitude: f64, scale: f64, offset: f64 },
}

impl Coefficient {
    pub const ZERO: Coefficient = Coefficient::Constant { value: 0.0 };

    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn linear(slope: f64, intercept: f64) -> Self {
        Coefficient::Linear { slope, intercept }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::Linear { slope, intercept } => slope * u + intercept,
            Coefficient::Tanh {
                amplitude,
                scale,
                offset,
            } => amplitude * (scale * u).tanh() + offset,
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Coefficient::Constant { .. } => 0.0,
            Coefficient::Linear { slope, .. } => slope,
            Coefficient::Tanh { amplitude, scale, .. } => {
                let th = (scale * u).tanh();
                amplitude * scale * (1.0 - th * th)
            }
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Coefficient::Constant { .. } => 0.0,
            Coefficient::Linear { slope, .. } => slope.abs(),
            Coefficient::Tanh { amplitude, scale, .. } => (amplitude * scale).abs(),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        matches!(*self, Coefficient::Constant { value } if value == 0.0)
            || matches!(*self, Coefficient::Linear { slope, intercept } if slope == 0.0 && intercept == 0.0)
    }

    /// `Some(c)` when the coefficient does not depend on `u`.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Coefficient::Constant { value } => Some(value),
            Coefficient::Linear { slope, intercept } if slope == 0.0 => Some(intercept),
            _ => None,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let params: Vec<f64> = match *self {
            Coefficient::Constant { value } => vec![value],
            Coefficient::Linear { slope, intercept } => vec![slope, intercept],
            Coefficient::Tanh {
                amplitude,
                scale,
                offset,
            } => vec![amplitude, scale, offset],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "coefficients.{name}: parameters must be finite (Lipschitz constant would be unbounded)"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_matches_difference() {
        let fams = [
            Coefficient::constant(2.0),
            Coefficient::linear(-0.7, 0.3),
            Coefficient::Tanh {
                amplitude: 1.3,
                scale: 0.8,
                offset: 0.1,
            },
        ];
        for c in fams {
            for &u in &[-2.0, -0.1, 0.0, 0.5, 3.0] {
                let h = 1e-6;
                let fd = (c.eval(u + h) - c.eval(u - h)) / (2.0 * h);
                assert!((fd - c.derivative(u)).abs() < 1e-8);
                assert!(c.derivative(u).abs() <= c.lipschitz() + 1e-15);
            }
        }
    }

    #[test]
    fn parses_tagged_json() {
        let c: Coefficient = serde_json::from_str(r#"{"kind":"linear","slope":1.5,"intercept":0}"#).unwrap();
        assert_eq!(c, Coefficient::linear(1.5, 0.0));
        assert!(serde_json::from_str::<Coefficient>(r#"{"kind":"cubic","a":1}"#).is_err());
    }

    #[test]
    fn zero_detection() {
        assert!(Coefficient::ZERO.is_identically_zero());
        assert!(Coefficient::linear(0.0, 0.0).is_identically_zero());
        assert!(!Coefficient::linear(1.0, 0.0).is_identically_zero());
        assert_eq!(Coefficient::linear(0.0, 2.0).as_constant(), Some(2.0));
    }
}
