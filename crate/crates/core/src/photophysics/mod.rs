//! Optical response of a single emitter.
//!
//! Units: laser/emitter detunings in MHz, linewidths as FWHM in MHz,
//! delays in ms. Diffusion rates `gamma_d` are in MHz/ms so that the ratio
//! `gamma_d / gamma` that enters the diffusion models is in 1/ms; ionization
//! rates `gamma_i` are in 1/ms. Counts are per measurement block.

mod bayes;
mod checkprobe;
mod collection;
mod diffusion;
mod g2;
mod lineshape;
mod linewidth;
mod saturation;

use serde::{Deserialize, Serialize};

use crate::optim::FitError;
use crate::special::DomainError;

pub use bayes::{
    checkprobe_spectrum, checkprobe_spectrum_with_prior, emitter_grid, herald_probability, heralded_spectral_density,
    heralded_spectral_density_with_prior, FrequencyPrior,
};
pub use checkprobe::{
    postselected_spectrum, read_check_probe_csv, simulate_check_probe, write_check_probe_csv, CheckProbeRecord,
    CheckProbeSim, SpectrumPoint,
};
pub use collection::{collection_efficiency, FarFieldProfile};
pub use diffusion::{
    bin_by_delay, fit_spectral_diffusion, simulate_diffusion_records, DelayBin, DiffusionFit, DiffusionFitOptions,
    DiffusionModel, DiffusionSim,
};
pub use g2::{
    g2_histogram, read_timestamps_binary, read_timestamps_csv, simulate_g2, write_timestamps_binary,
    write_timestamps_csv, G2Histogram, G2Sim, Photon,
};
pub use lineshape::{diffusion_only_model, lorentzian_response, no_recapture_model};
pub use linewidth::{fit_checkprobe_linewidth, LinewidthFit, LinewidthFitOptions, ThresholdSpectrum};
pub use saturation::{rho_at_psat, saturation_curve, saturation_fit, SaturationFit};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhotoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency grid must be strictly ascending")]
    GridNotAscending,
    #[error("grid must span at least ±{half_span_required} MHz around the check laser")]
    GridTooNarrow { half_span_required: f64 },
    #[error("grid holds only {captured:.5} of the heralded probability mass (need 0.999)")]
    Truncated { captured: f64 },
    #[error("no frequency on the grid can pass the threshold")]
    NoHeraldMass,
    #[error("{found} delay bins pass the threshold, need at least {required}")]
    InsufficientData { found: usize, required: usize },
    #[error("detection channel {0} has no photons")]
    EmptyChannel(u8),
    #[error("frequency grids of different thresholds do not overlap")]
    NonOverlappingGrids,
    #[error("prior must be a proper distribution for sampling")]
    ImproperPrior,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for PhotoError {
    fn from(e: csv::Error) -> Self {
        PhotoError::Csv(e.to_string())
    }
}

/// Spectral parameters of one emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    /// Homogeneous FWHM [MHz].
    pub gamma: f64,
    /// On-resonance mean counts per probe block.
    pub c0: f64,
    /// Spectral diffusion rate [MHz/ms].
    pub gamma_d: f64,
    /// Ionization rate [1/ms].
    pub gamma_i: f64,
    /// Center frequency offset [GHz].
    pub f0: f64,
    /// Lifetime-limited FWHM [MHz].
    pub gamma_lifetime: f64,
}

impl EmitterModel {
    pub fn new(gamma: f64, c0: f64) -> Self {
        Self { gamma, c0, gamma_d: 0.0, gamma_i: 0.0, f0: 0.0, gamma_lifetime: gamma.min(26.0) }
    }

    pub fn validate(&self) -> Result<(), PhotoError> {
        let bad = |m: &str| Err(PhotoError::InvalidParameter(m.to_string()));
        if !(self.gamma_lifetime > 0.0) || !(self.gamma >= self.gamma_lifetime) {
            return bad("need gamma >= gamma_lifetime > 0");
        }
        if !(self.c0 >= 0.0) || !self.c0.is_finite() {
            return bad("c0 must be finite and non-negative");
        }
        if !(self.gamma_d >= 0.0) || !(self.gamma_i >= 0.0) {
            return bad("rates must be non-negative");
        }
        Ok(())
    }

    /// Mean check/probe counts with the laser detuned by `f` from the emitter.
    pub fn response(&self, f: f64) -> f64 {
        lorentzian_response(f, self.gamma, self.c0)
    }
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self { gamma: 39.0, c0: 7.42, gamma_d: 0.0, gamma_i: 0.0, f0: 0.0, gamma_lifetime: 26.0 }
    }
}

pub(crate) fn poisson<R: rand::Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}
