//! The parameter bundle of the traced process: detection delay `b`,
//! detection probability `p`, trace probability `alpha`, and the offspring
//! law of the underlying branching process.

use crate::offspring::OffspringDistribution;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parameter {name} = {value} outside [0, 1]")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
}

/// Parameters `(b, p, alpha)` together with an offspring law. Values are
/// immutable after construction and cheap to clone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtpParams {
    pub b: u32,
    pub p: f64,
    pub alpha: f64,
    pub dist: OffspringDistribution,
}

impl CtpParams {
    pub fn new(
        b: u32,
        p: f64,
        alpha: f64,
        dist: OffspringDistribution,
    ) -> Result<Self, ParamError> {
        for (name, value) in [("p", p), ("alpha", alpha)] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(ParamError { name, value });
            }
        }
        Ok(CtpParams { b, p, alpha, dist })
    }

    /// Offspring mean of the untreated process.
    pub fn lambda(&self) -> f64 {
        self.dist.mean()
    }

    /// Mean number of traceable children per individual.
    pub fn lambda_t(&self) -> f64 {
        self.lambda() * self.alpha
    }

    /// Mean number of untraceable children (fresh cluster seeds) per individual.
    pub fn lambda_u(&self) -> f64 {
        self.lambda() * (1.0 - self.alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        CtpParams {
            alpha,
            ..self.clone()
        }
    }

    pub fn with_p(&self, p: f64) -> Self {
        CtpParams { p, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_unit_interval() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        assert!(CtpParams::new(0, 1.1, 0.5, d.clone()).is_err());
        assert!(CtpParams::new(0, 0.5, -0.1, d.clone()).is_err());
        let p = CtpParams::new(2, 0.4, 0.5, d).unwrap();
        assert!((p.lambda_t() - 1.25).abs() < 1e-12);
        assert!((p.lambda_u() - 1.25).abs() < 1e-12);
    }
}
