//! Nonlinear least squares.
//!
//! Every fit in the crate goes through [`fit_least_squares`], a
//! Levenberg–Marquardt minimizer with central-difference Jacobians, box
//! constraints by clamping and covariance from the Gauss–Newton Hessian.
//!
//! Models are vectorized: a model receives the full abscissa slice and the
//! parameter vector (in [`ParamSpec`] order) and returns one prediction per
//! abscissa. Pointwise models can be adapted with [`pointwise`].

mod jacobian;
mod lm;
mod result;

use serde::{Deserialize, Serialize};

pub use jacobian::{forward_jacobian, numeric_jacobian};
pub use lm::{fit_least_squares, fit_least_squares_with, LmOptions};
pub use result::{FitResult, ParamEstimate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("parameter `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("x has {x} points but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("{points} data points cannot constrain {free} free parameters")]
    TooFewPoints { points: usize, free: usize },
    #[error("y_sigma[{index}] = {value} is not strictly positive")]
    BadSigma { index: usize, value: f64 },
    #[error("model returned {got} values for {expected} points")]
    ModelLength { expected: usize, got: usize },
    #[error("model output is not finite at parameters {params:?}")]
    NonFinite { params: Vec<f64> },
    #[error("non-finite model output while probing parameter `{param}`")]
    JacobianNonFinite { param: String },
    #[error("relative step must be positive, got {0}")]
    InvalidStep(f64),
}

/// One fit parameter: starting value, box bounds, and whether it is held
/// fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    pub frozen: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, initial: f64) -> Self {
        Self { name: name.into(), initial, lower: f64::NEG_INFINITY, upper: f64::INFINITY, frozen: false }
    }

    pub fn bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn min(mut self, lower: f64) -> Self {
        self.lower = lower;
        self
    }

    pub fn max(mut self, upper: f64) -> Self {
        self.upper = upper;
        self
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn frozen_if(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    fn validate(&self) -> Result<(), FitError> {
        let bad = |reason: &str| FitError::InvalidSpec { name: self.name.clone(), reason: reason.to_string() };
        if !self.initial.is_finite() {
            return Err(bad("initial value is not finite"));
        }
        if self.lower.is_nan() || self.upper.is_nan() || self.lower > self.upper {
            return Err(bad("invalid bounds"));
        }
        if self.initial < self.lower || self.initial > self.upper {
            return Err(bad("initial value outside bounds"));
        }
        Ok(())
    }
}

/// Adapts a scalar model `f(x, params)` to the vectorized model signature.
pub fn pointwise<F>(f: F) -> impl Fn(&[f64], &[f64]) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    move |xs: &[f64], p: &[f64]| xs.iter().map(|&x| f(x, p)).collect()
}
