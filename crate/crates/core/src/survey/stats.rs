use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::peaks::PlePeak;
use super::SurveyError;
use crate::optim::{fit_least_squares, pointwise, FitResult, ParamSpec};

/// Peaks at or above one amplitude threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePoint {
    pub threshold_khz: f64,
    pub peaks: usize,
    /// Share of all peaks in the cohort.
    pub fraction_of_peaks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceStats {
    pub threshold_khz: f64,
    pub n_pillars: usize,
    /// Pillars with 0, 1, 2 and 3 or more peaks at or above the threshold.
    pub histogram: [usize; 4],
    pub fractions: [f64; 4],
    /// Step curve evaluated at zero and at every distinct amplitude.
    pub exceedance: Vec<ExceedancePoint>,
}

pub fn exceedance_curve(amplitudes: &[f64], thresholds: &[f64]) -> Vec<ExceedancePoint> {
    let mut sorted = amplitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    thresholds
        .iter()
        .map(|&t| {
            let peaks = total - sorted.partition_point(|&a| a < t);
            ExceedancePoint {
                threshold_khz: t,
                peaks,
                fraction_of_peaks: if total == 0 { 0.0 } else { peaks as f64 / total as f64 },
            }
        })
        .collect()
}

pub fn occurrence_stats(
    peaks_by_pillar: &BTreeMap<String, Vec<PlePeak>>,
    threshold_khz: f64,
) -> Result<OccurrenceStats, SurveyError> {
    if !(threshold_khz >= 0.0) || !threshold_khz.is_finite() {
        return Err(SurveyError::InvalidInput(format!("threshold {threshold_khz} must be finite and >= 0")));
    }
    let mut histogram = [0usize; 4];
    for peaks in peaks_by_pillar.values() {
        let n = peaks.iter().filter(|p| p.amplitude_khz >= threshold_khz).count();
        histogram[n.min(3)] += 1;
    }
    let n_pillars = peaks_by_pillar.len();
    let fractions = histogram.map(|h| if n_pillars == 0 { 0.0 } else { h as f64 / n_pillars as f64 });
    let amplitudes: Vec<f64> = peaks_by_pillar.values().flatten().map(|p| p.amplitude_khz).collect();
    let mut grid = amplitudes.clone();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(OccurrenceStats {
        threshold_khz,
        n_pillars,
        histogram,
        fractions,
        exceedance: exceedance_curve(&amplitudes, &grid),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousFit {
    /// Parameters `amplitude` [counts per bin], `center` [GHz], `fwhm` [GHz].
    pub fit: FitResult,
    pub bin_width_ghz: f64,
    /// Bin centers [GHz] and counts.
    pub bins: Vec<(f64, usize)>,
}

/// Gaussian fit to the histogram of emitter frequencies.
///
/// Bins are `bin_width_ghz` wide and aligned to multiples of it; when the
/// spread of the centers is below two bins the width drops to half the
/// standard deviation so that narrow ensembles stay resolved.
pub fn inhomogeneous_fit(centers_ghz: &[f64], bin_width_ghz: f64) -> Result<InhomogeneousFit, SurveyError> {
    const MIN_CENTERS: usize = 10;
    if centers_ghz.len() < MIN_CENTERS {
        return Err(SurveyError::InsufficientData { found: centers_ghz.len(), required: MIN_CENTERS });
    }
    if centers_ghz.iter().any(|c| !c.is_finite()) || !(bin_width_ghz > 0.0) {
        return Err(SurveyError::InvalidInput("centers must be finite and the bin width positive".into()));
    }
    let n = centers_ghz.len() as f64;
    let mean = centers_ghz.iter().sum::<f64>() / n;
    let sd = (centers_ghz.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(SurveyError::Degenerate);
    }
    let bin = bin_width_ghz.min(0.5 * sd);
    let (lo, hi) = centers_ghz.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    let k_lo = (lo / bin).floor() as i64 - 1;
    let k_hi = (hi / bin).floor() as i64 + 1;
    let mut counts = vec![0usize; (k_hi - k_lo + 1) as usize];
    for &c in centers_ghz {
        counts[((c / bin).floor() as i64 - k_lo) as usize] += 1;
    }
    let x: Vec<f64> = (k_lo..=k_hi).map(|k| (k as f64 + 0.5) * bin).collect();
    let y: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let specs = [
        ParamSpec::new("amplitude", peak).min(0.0),
        ParamSpec::new("center", mean),
        ParamSpec::new("fwhm", 2.3548 * sd).min(1e-12 * sd),
    ];
    let model = pointwise(|x, p: &[f64]| p[0] * (-4.0 * std::f64::consts::LN_2 * ((x - p[1]) / p[2]).powi(2)).exp());
    let mut fit = fit_least_squares(model, &specs, &x, &y, None)?.with_model("inhomogeneous_gaussian");
    let (center, fwhm) = (fit.value("center"), fit.value("fwhm"));
    if !(lo..=hi).contains(&center) || fwhm > 2.0 * (hi - lo) {
        fit.converged = false;
        fit.warn("centers show no peak inside the observed range");
    }
    Ok(InhomogeneousFit { fit, bin_width_ghz: bin, bins: x.into_iter().zip(counts).collect() })
}
