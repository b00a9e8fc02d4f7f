use serde::{Deserialize, Serialize};

use super::bayes::{emitter_grid, spectrum_on_grid};
use super::{FrequencyPrior, PhotoError, SpectrumPoint};
use crate::optim::{fit_least_squares, FitResult, ParamSpec};

const MIN_THRESHOLDS: usize = 3;

/// Post-selected probe spectrum at one check threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpectrum {
    pub threshold: u32,
    pub points: Vec<SpectrumPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthFitOptions {
    /// Prior over the emitter frequency the data was taken under.
    pub prior: FrequencyPrior,
    /// Check laser frequency [MHz].
    pub f1: f64,
    /// Starting (Γ, C₀); estimated from the highest-threshold spectrum when absent.
    pub init: Option<(f64, f64)>,
}

impl Default for LinewidthFitOptions {
    fn default() -> Self {
        Self { prior: FrequencyPrior::Flat, f1: 0.0, init: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthFit {
    /// Parameters `gamma` [MHz] and `c0`.
    pub fit: FitResult,
    /// Γ / Γ_lifetime.
    pub ratio: f64,
    pub ratio_sigma: f64,
}

/// Global fit of (Γ, C₀) to probe spectra taken at several check thresholds,
/// each modeled as the heralded density convolved with the Lorentzian.
pub fn fit_checkprobe_linewidth(
    spectra: &[ThresholdSpectrum],
    gamma_lifetime: f64,
    opts: &LinewidthFitOptions,
) -> Result<LinewidthFit, PhotoError> {
    if !(gamma_lifetime > 0.0) {
        return Err(PhotoError::InvalidParameter("gamma_lifetime must be positive".into()));
    }
    let spectra: Vec<&ThresholdSpectrum> = spectra.iter().filter(|s| !s.points.is_empty()).collect();
    if spectra.len() < MIN_THRESHOLDS {
        return Err(PhotoError::InsufficientData { found: spectra.len(), required: MIN_THRESHOLDS });
    }
    if spectra.iter().any(|s| s.threshold < 1) {
        return Err(PhotoError::InvalidParameter("thresholds must be >= 1".into()));
    }
    let lo = spectra.iter().map(|s| first(s)).fold(f64::NEG_INFINITY, f64::max);
    let hi = spectra.iter().map(|s| last(s)).fold(f64::INFINITY, f64::min);
    if lo >= hi {
        return Err(PhotoError::NonOverlappingGrids);
    }

    let (g0, c0) = opts.init.unwrap_or_else(|| initial_guess(&spectra, gamma_lifetime));
    let min_gamma = gamma_lifetime / 4.0;
    let g0 = g0.max(min_gamma * 1.01);
    let t_min = spectra.iter().map(|s| s.threshold).min().expect("non-empty");
    // One fixed emitter grid for the whole fit: fine enough for the
    // narrowest allowed Γ, wide enough for twice the starting Γ and C₀.
    let grid = emitter_grid(2.0 * g0, 2.0 * c0.max(1e-3), t_min, opts.f1, &opts.prior, min_gamma / 20.0)?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut sigma = Vec::new();
    for s in &spectra {
        for p in &s.points {
            x.push(p.detuning);
            y.push(p.mean);
            sigma.push(p.sem);
        }
    }
    let weighted = sigma.iter().all(|s| *s > 0.0 && s.is_finite());
    let model = |_: &[f64], p: &[f64]| {
        let mut out = Vec::with_capacity(y.len());
        for s in &spectra {
            let probes: Vec<f64> = s.points.iter().map(|q| q.detuning).collect();
            out.extend(spectrum_on_grid(&probes, &grid, s.threshold, p[0], p[1], opts.f1, &opts.prior));
        }
        out
    };
    let specs = [ParamSpec::new("gamma", g0).min(min_gamma), ParamSpec::new("c0", c0).min(0.0)];
    let fit =
        fit_least_squares(model, &specs, &x, &y, weighted.then_some(&sigma[..]))?.with_model("checkprobe_convolution");
    Ok(LinewidthFit {
        ratio: fit.value("gamma") / gamma_lifetime,
        ratio_sigma: fit.sigma("gamma") / gamma_lifetime,
        fit,
    })
}

fn first(s: &ThresholdSpectrum) -> f64 {
    s.points.iter().map(|p| p.detuning).fold(f64::INFINITY, f64::min)
}

fn last(s: &ThresholdSpectrum) -> f64 {
    s.points.iter().map(|p| p.detuning).fold(f64::NEG_INFINITY, f64::max)
}

/// Peak height and half-maximum width of the highest-threshold spectrum.
fn initial_guess(spectra: &[&ThresholdSpectrum], gamma_lifetime: f64) -> (f64, f64) {
    let s = spectra.iter().max_by_key(|s| s.threshold).expect("non-empty");
    let mut pts = s.points.clone();
    pts.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
    let x: Vec<f64> = pts.iter().map(|p| p.detuning).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.mean).collect();
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let width = crate::grid::fwhm(&x, &y).unwrap_or(2.0 * gamma_lifetime);
    (width.max(gamma_lifetime), peak.max(1e-3))
}
