//! Spin control and readout.
//!
//! Units: frequencies and Rabi frequencies in MHz, pulse and delay times in
//! µs, coherence times T₂ in ms. Microwave detunings are taken in the
//! frame rotating at the microwave frequency, so a spin at `f₀` driven at
//! `f_M` sees `Δ = f₀ − f_M`.

mod executor;
mod fits;
mod models;
mod propagate;
mod readout;
mod sequence;

use serde::{Deserialize, Serialize};

use crate::optim::FitError;

pub use executor::{program_probability, run_spin_sequence};
pub use fits::{desr_fit, rabi_fit, ramsey_fit, stretched_decay_fit, t2_power_law_fit, DesrFit, RamseyFit};
pub use models::{desr_model, gaussian_peak, ramsey_model, stretched_decay, t2_power_law, t2_star_from_fwhm};
pub use propagate::{compose, free, pulse, rabi_chevron, transition_probability, Unitary, IDENTITY};
pub use readout::{
    normalize_readout, normalized_readout, read_sweep_csv, write_sweep_csv, ReadoutPoint, SpinSweepRecord,
};
pub use sequence::{
    BlockKind, Laser, MwKind, MwOp, MwProgram, MwSequence, PulseBlock, SpinSequence, Sweep, SweepParameter,
    SweepValues, XY4_PHASES, XY8_PHASES,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpinError {
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sweep value {sweep_value}: only {passed} repetitions pass the check threshold, need 2")]
    InsufficientRepetitions { sweep_value: f64, passed: usize },
    #[error("sweep value {sweep_value}: bright and dark references coincide")]
    DegenerateNormalization { sweep_value: f64 },
    #[error("{found} data points, need at least {required}")]
    InsufficientData { found: usize, required: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Coherence time under refocusing with `N` π pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoherenceLaw {
    /// `T₂ = β·N^α`.
    PowerLaw {
        beta_ms: f64,
        alpha: f64,
    },
    Fixed {
        t2_ms: f64,
    },
}

impl CoherenceLaw {
    pub fn t2_ms(&self, n_pi: usize) -> f64 {
        match *self {
            CoherenceLaw::PowerLaw { beta_ms, alpha } => t2_power_law(n_pi.max(1) as f64, alpha, beta_ms),
            CoherenceLaw::Fixed { t2_ms } => t2_ms,
        }
    }
}

/// Ground-state spin of one emitter plus the readout photon budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinModel {
    /// Default Rabi frequency Ω for payloads that do not set one [MHz].
    pub rabi_frequency: f64,
    /// Spin transition frequency f₀, nuclear average [MHz].
    pub transition_frequency: f64,
    pub hyperfine: f64,
    /// Dephasing time T₂* [µs].
    pub t2_star: f64,
    pub coherence: CoherenceLaw,
    /// Stretch exponent n of the refocused decay.
    pub decay_exponent: f64,
    /// Fractional count drop of the dark spin state.
    pub contrast: f64,
    /// Background counts per reference-length block, added to every
    /// counting block.
    pub baseline: f64,
    /// Block length at which the bright rate equals the emitter's `c0` [µs].
    pub reference_block_us: f64,
    /// Probability that the emitter is charge-stable and on resonance
    /// after a repump.
    pub ready_probability: f64,
}

impl Default for SpinModel {
    fn default() -> Self {
        Self {
            rabi_frequency: 10.0,
            transition_frequency: 183.93,
            hyperfine: 2.08,
            t2_star: 0.9,
            coherence: CoherenceLaw::PowerLaw { beta_ms: 0.46, alpha: 0.73 },
            decay_exponent: 2.0,
            contrast: 0.8,
            baseline: 0.0,
            reference_block_us: 60.0,
            ready_probability: 0.7,
        }
    }
}

impl SpinModel {
    pub fn validate(&self) -> Result<(), SpinError> {
        let bad = |m: &str| Err(SpinError::InvalidParameter(m.into()));
        if !(self.rabi_frequency > 0.0) || !self.rabi_frequency.is_finite() {
            return bad("rabi_frequency must be positive");
        }
        if !self.transition_frequency.is_finite() {
            return bad("transition_frequency must be finite");
        }
        if !(self.hyperfine >= 0.0) || !self.hyperfine.is_finite() {
            return bad("hyperfine must be finite and non-negative");
        }
        if !(self.t2_star > 0.0) || !self.t2_star.is_finite() {
            return bad("t2_star must be positive");
        }
        match self.coherence {
            CoherenceLaw::PowerLaw { beta_ms, alpha } => {
                if !(beta_ms > 0.0) || !(alpha > 0.0 && alpha < 1.5) {
                    return bad("coherence law needs beta > 0 and alpha in (0, 1.5)");
                }
            }
            CoherenceLaw::Fixed { t2_ms } => {
                if !(t2_ms > 0.0) {
                    return bad("t2 must be positive");
                }
            }
        }
        if !(self.decay_exponent > 0.0) {
            return bad("decay_exponent must be positive");
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return bad("contrast must lie in [0, 1]");
        }
        if !(self.baseline >= 0.0) || !self.baseline.is_finite() {
            return bad("baseline must be finite and non-negative");
        }
        if !(self.reference_block_us > 0.0) {
            return bad("reference_block_us must be positive");
        }
        if !(self.ready_probability > 0.0 && self.ready_probability <= 1.0) {
            return bad("ready_probability must lie in (0, 1]");
        }
        Ok(())
    }
}
