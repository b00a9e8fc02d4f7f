use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::peaks::PleSpectrum;
use super::voigt::voigt_profile;
use super::SurveyError;
use crate::SeedTree;

/// Generator line for synthetic PLE scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub center_ghz: f64,
    pub amplitude_khz: f64,
    pub sigma_g_mhz: f64,
    pub gamma_l_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PleSim {
    /// Scan runs over `±span_ghz`.
    pub span_ghz: f64,
    pub step_ghz: f64,
    /// Gaussian read noise per point [kHz].
    pub noise_khz: f64,
    pub background_khz: f64,
    pub peaks: Vec<PeakSpec>,
}

impl Default for PleSim {
    fn default() -> Self {
        Self { span_ghz: 30.0, step_ghz: 0.01, noise_khz: 0.02, background_khz: 0.05, peaks: Vec::new() }
    }
}

/// Noisy PLE scan; rates are clipped at zero.
pub fn simulate_ple(pillar_id: &str, sim: &PleSim, seed: u64) -> Result<PleSpectrum, SurveyError> {
    if !(sim.span_ghz > 0.0) || !(sim.step_ghz > 0.0) || !(sim.noise_khz >= 0.0) || !(sim.background_khz >= 0.0) {
        return Err(SurveyError::InvalidInput(
            "span and step must be positive, noise and background non-negative".into(),
        ));
    }
    if sim.peaks.iter().any(|p| !(p.sigma_g_mhz >= 0.0 && p.gamma_l_mhz >= 0.0) || p.sigma_g_mhz + p.gamma_l_mhz == 0.0)
    {
        return Err(SurveyError::InvalidInput("every line needs a non-negative, non-zero width".into()));
    }
    let n = (2.0 * sim.span_ghz / sim.step_ghz).round() as usize + 1;
    let frequency_ghz = crate::linspace(-sim.span_ghz, sim.span_ghz, n);
    let mut rng = SeedTree::new(seed).child("ple").child(pillar_id).stream(0);
    let noise = Normal::new(0.0, sim.noise_khz).expect("noise checked");
    let rate_khz = frequency_ghz
        .iter()
        .map(|&f| {
            let clean: f64 = sim.background_khz
                + sim
                    .peaks
                    .iter()
                    .map(|p| {
                        voigt_profile(f, 1e-3 * p.sigma_g_mhz, 1e-3 * p.gamma_l_mhz, p.amplitude_khz, p.center_ghz)
                    })
                    .sum::<f64>();
            (clean + noise.sample(&mut rng)).max(0.0)
        })
        .collect();
    Ok(PleSpectrum { pillar_id: pillar_id.to_string(), frequency_ghz, rate_khz })
}

/// Ranges for randomly drawn, constraint-satisfying pillars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomPillarOptions {
    pub center_span_ghz: f64,
    pub min_separation_ghz: f64,
    pub amplitude_khz: (f64, f64),
    /// Range of the Gaussian FWHM [MHz].
    pub gaussian_fwhm_mhz: (f64, f64),
    /// Range of the Lorentzian FWHM [MHz].
    pub lorentzian_fwhm_mhz: (f64, f64),
}

impl Default for RandomPillarOptions {
    fn default() -> Self {
        Self {
            center_span_ghz: 25.0,
            min_separation_ghz: 3.0,
            amplitude_khz: (0.2, 2.0),
            gaussian_fwhm_mhz: (80.0, 600.0),
            lorentzian_fwhm_mhz: (0.0, 400.0),
        }
    }
}

/// Draws `n_peaks` lines with centers in `±center_span_ghz` and pairwise
/// separation above `min_separation_ghz`.
pub fn random_pillar_peaks<R: Rng + ?Sized>(rng: &mut R, n_peaks: usize, opts: &RandomPillarOptions) -> Vec<PeakSpec> {
    let mut out: Vec<PeakSpec> = Vec::with_capacity(n_peaks);
    while out.len() < n_peaks {
        let c = rng.random_range(-opts.center_span_ghz..=opts.center_span_ghz);
        if out.iter().any(|p| (p.center_ghz - c).abs() <= opts.min_separation_ghz) {
            continue;
        }
        let fg = rng.random_range(opts.gaussian_fwhm_mhz.0..=opts.gaussian_fwhm_mhz.1);
        let fl = rng.random_range(opts.lorentzian_fwhm_mhz.0..=opts.lorentzian_fwhm_mhz.1);
        out.push(PeakSpec {
            center_ghz: c,
            amplitude_khz: rng.random_range(opts.amplitude_khz.0..=opts.amplitude_khz.1),
            sigma_g_mhz: fg / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()),
            gamma_l_mhz: 0.5 * fl,
        });
    }
    out.sort_by(|a, b| a.center_ghz.total_cmp(&b.center_ghz));
    out
}
