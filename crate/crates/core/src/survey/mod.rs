//! PLE peak surveys and ensemble statistics.
//!
//! Units: PLE laser offsets and peak centers in GHz, peak widths in MHz,
//! count rates in kHz, pulse energies in µJ.

mod damage;
mod peaks;
mod plmap;
mod sim;
mod stats;
mod voigt;

use crate::optim::FitError;

pub use damage::{amorphization_fit, read_damage_csv, AmorphizationFit, DamageRegime, DamageRow, DamageTable};
pub use peaks::{
    detect_ple_peaks, detect_ple_peaks_with_diagnostics, read_ple_csv, write_ple_csv, PeakDetectionOptions, PlePeak,
    PleSpectrum,
};
pub use plmap::{read_pl_map_csv, rescale_pl_maps, write_pl_map_csv, PlMap, RescaledMaps};
pub use sim::{random_pillar_peaks, simulate_ple, PeakSpec, PleSim, RandomPillarOptions};
pub use stats::{
    exceedance_curve, inhomogeneous_fit, occurrence_stats, ExceedancePoint, InhomogeneousFit, OccurrenceStats,
};
pub use voigt::{faddeeva, voigt_density, voigt_fwhm, voigt_profile};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurveyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{found} values, need at least {required}")]
    InsufficientData { found: usize, required: usize },
    #[error("all values coincide; the distribution has no width")]
    Degenerate,
    #[error("baseline mean of the {0} map is not positive")]
    ZeroBaseline(&'static str),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for SurveyError {
    fn from(e: csv::Error) -> Self {
        SurveyError::Csv(e.to_string())
    }
}
