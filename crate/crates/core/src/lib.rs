//! Simulation and analysis toolkit for single-photon emitters and their spins.
//!
//! The crate is split along the experimental pipeline:
//!
//! - [`optim`]: Levenberg–Marquardt least squares shared by every fit.
//! - [`photophysics`]: optical response models, heralded (check-probe)
//!   spectroscopy, spectral-diffusion fits, saturation, g² and collection
//!   efficiency, plus Monte Carlo forward simulators.
//! - [`spin`]: pulse sequences, a discrete-event sequence executor, readout
//!   normalization and the spin-coherence models and fits.
//! - [`survey`]: automated PLE peak detection and the ensemble statistics
//!   built on top of it.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled
//! (the default). Every simulator takes an explicit seed and derives one
//! random substream per repetition, so parallel and sequential execution
//! produce identical output.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod optim;
pub mod photophysics;
pub mod seed;
pub mod special;
pub mod spin;
pub mod survey;

mod grid;

pub use exec::Exec;
pub use grid::{linspace, trapezoid};
pub use optim::{fit_least_squares, FitError, FitResult, ParamSpec};
pub use seed::SeedTree;

/// Crate-level error, wrapping the per-module errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Fit(#[from] optim::FitError),
    #[error(transparent)]
    Photophysics(#[from] photophysics::PhotoError),
    #[error(transparent)]
    Spin(#[from] spin::SpinError),
    #[error(transparent)]
    Survey(#[from] survey::SurveyError),
    #[error(transparent)]
    Special(#[from] special::DomainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
