use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::voigt::{voigt_fwhm, voigt_profile};
use super::SurveyError;
use crate::optim::{fit_least_squares, pointwise, FitResult, ParamSpec};

/// One PLE scan of one pillar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleSpectrum {
    pub pillar_id: String,
    /// Laser offset [GHz], ascending.
    pub frequency_ghz: Vec<f64>,
    /// Count rate [kHz].
    pub rate_khz: Vec<f64>,
}

impl PleSpectrum {
    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |m: String| Err(SurveyError::InvalidInput(format!("pillar {}: {m}", self.pillar_id)));
        if self.frequency_ghz.len() != self.rate_khz.len() {
            return bad("frequency and rate columns differ in length".into());
        }
        if self.frequency_ghz.iter().any(|f| !f.is_finite()) || self.frequency_ghz.windows(2).any(|w| w[1] <= w[0]) {
            return bad("frequencies must be finite and strictly ascending".into());
        }
        if let Some(r) = self.rate_khz.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return bad(format!("rate {r} is negative or not finite"));
        }
        Ok(())
    }

    pub fn span_ghz(&self) -> f64 {
        match (self.frequency_ghz.first(), self.frequency_ghz.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// A fitted Voigt line. Widths: `sigma_g` is the Gaussian standard
/// deviation, `gamma_l` the Lorentzian half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlePeak {
    pub center_ghz: f64,
    pub amplitude_khz: f64,
    pub fwhm_mhz: f64,
    pub sigma_g_mhz: f64,
    pub gamma_l_mhz: f64,
    /// Local background under the line [kHz].
    pub baseline_khz: f64,
    pub center_sigma_ghz: f64,
    pub amplitude_sigma_khz: f64,
    pub fwhm_sigma_mhz: f64,
    pub sigma_g_sigma_mhz: f64,
    pub gamma_l_sigma_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakDetectionOptions {
    /// Lines closer than this are one A1/A2 pair; the brighter survives.
    pub min_separation_ghz: f64,
    pub fwhm_min_mhz: f64,
    pub fwhm_max_mhz: f64,
    /// Detection floor on the fitted amplitude.
    pub min_amplitude_khz: f64,
    /// Candidate prominence in units of the robust noise.
    pub prominence_factor: f64,
    /// Fitted amplitude in units of its own standard error.
    pub min_significance: f64,
    /// Largest accepted `σ_FWHM / FWHM`; larger means the line shape is
    /// not resolved.
    pub max_fwhm_rel_sigma: f64,
    pub median_window: usize,
    pub min_span_ghz: f64,
}

impl Default for PeakDetectionOptions {
    fn default() -> Self {
        Self {
            min_separation_ghz: 2.0,
            fwhm_min_mhz: 50.0,
            fwhm_max_mhz: 3000.0,
            min_amplitude_khz: 0.03,
            prominence_factor: 3.0,
            min_significance: 6.0,
            max_fwhm_rel_sigma: 0.5,
            median_window: 5,
            min_span_ghz: 20.0,
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_filter(y: &[f64], window: usize) -> Vec<f64> {
    let h = window / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(y.len());
            median(&mut y[lo..hi].to_vec())
        })
        .collect()
}

/// Prominence of the local maximum at `i`: height above the higher of the
/// lowest points on either side before a taller point.
fn prominence(s: &[f64], i: usize) -> f64 {
    let walk = |range: &mut dyn Iterator<Item = usize>| {
        let mut low = s[i];
        for j in range {
            if s[j] > s[i] {
                break;
            }
            low = low.min(s[j]);
        }
        low
    };
    let left = walk(&mut (0..i).rev());
    let right = walk(&mut (i + 1..s.len()));
    s[i] - left.max(right)
}

/// Index range around `i` where `s` stays above `level`.
fn half_width(s: &[f64], i: usize, level: f64) -> (usize, usize) {
    let mut lo = i;
    while lo > 0 && s[lo - 1] > level {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < s.len() && s[hi + 1] > level {
        hi += 1;
    }
    (lo, hi)
}

fn fit_candidate(f: &[f64], y: &[f64], s: &[f64], i: usize, prom: f64, noise: f64) -> Result<FitResult, String> {
    let base = s[i] - prom;
    let (lo, hi) = half_width(s, i, base + 0.5 * prom);
    let step = (f[f.len() - 1] - f[0]) / (f.len() - 1) as f64;
    let fwhm_est = (f[hi] - f[lo]).max(2.0 * step);
    let half = (4.0 * fwhm_est).clamp(0.3, 6.0);
    let a = f.partition_point(|&x| x < f[i] - half);
    let b = f.partition_point(|&x| x <= f[i] + half);
    if b - a < 8 {
        return Err("window holds too few points".into());
    }
    let (fx, fy) = (&f[a..b], &y[a..b]);
    let part = fwhm_est / 1.6376;
    let specs = [
        ParamSpec::new("baseline", base),
        ParamSpec::new("amplitude", prom.max(1e-6)).min(0.0),
        ParamSpec::new("center", f[i]).bounds(fx[0], fx[fx.len() - 1]),
        ParamSpec::new("sigma_g", part / 2.3548).min(1e-6),
        ParamSpec::new("gamma_l", part / 2.0).min(0.0),
    ];
    let model = pointwise(|x, p: &[f64]| p[0] + voigt_profile(x, p[3], p[4], p[1], p[2]));
    let sigma = vec![noise; fx.len()];
    let fit = fit_least_squares(model, &specs, fx, fy, Some(&sigma)).map_err(|e| e.to_string())?;
    if fit.values().iter().any(|v| !v.is_finite()) {
        return Err("fit diverged".into());
    }
    Ok(fit)
}

fn to_peak(fit: &FitResult) -> PlePeak {
    let (sg, gl) = (fit.value("sigma_g"), fit.value("gamma_l"));
    let fwhm = voigt_fwhm(sg, gl);
    // σ of the FWHM from the width covariance, central differences
    let h = 1e-6 * (sg + gl);
    let dg = (voigt_fwhm(sg + h, gl) - voigt_fwhm((sg - h).max(0.0), gl)) / (sg + h - (sg - h).max(0.0));
    let dl = (voigt_fwhm(sg, gl + h) - voigt_fwhm(sg, (gl - h).max(0.0))) / (gl + h - (gl - h).max(0.0));
    let var = dg * dg * fit.covariance_of("sigma_g", "sigma_g")
        + dl * dl * fit.covariance_of("gamma_l", "gamma_l")
        + 2.0 * dg * dl * fit.covariance_of("sigma_g", "gamma_l");
    PlePeak {
        center_ghz: fit.value("center"),
        amplitude_khz: fit.value("amplitude"),
        fwhm_mhz: 1e3 * fwhm,
        sigma_g_mhz: 1e3 * sg,
        gamma_l_mhz: 1e3 * gl,
        baseline_khz: fit.value("baseline"),
        center_sigma_ghz: fit.sigma("center"),
        amplitude_sigma_khz: fit.sigma("amplitude"),
        fwhm_sigma_mhz: 1e3 * var.max(0.0).sqrt(),
        sigma_g_sigma_mhz: 1e3 * fit.sigma("sigma_g"),
        gamma_l_sigma_mhz: 1e3 * fit.sigma("gamma_l"),
    }
}

pub fn detect_ple_peaks(spectrum: &PleSpectrum, opts: &PeakDetectionOptions) -> Result<Vec<PlePeak>, SurveyError> {
    detect_ple_peaks_with_diagnostics(spectrum, opts).map(|(p, _)| p)
}

/// Like [`detect_ple_peaks`], also returning one message per discarded
/// candidate.
pub fn detect_ple_peaks_with_diagnostics(
    spectrum: &PleSpectrum,
    opts: &PeakDetectionOptions,
) -> Result<(Vec<PlePeak>, Vec<String>), SurveyError> {
    spectrum.validate()?;
    if spectrum.span_ghz() < opts.min_span_ghz {
        return Err(SurveyError::InvalidInput(format!(
            "pillar {}: scan covers {:.3} GHz, need {} GHz",
            spectrum.pillar_id,
            spectrum.span_ghz(),
            opts.min_span_ghz
        )));
    }
    let (f, y) = (&spectrum.frequency_ghz, &spectrum.rate_khz);
    let s = median_filter(y, opts.median_window.max(1));
    let mut resid: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a - b).collect();
    let centre = median(&mut resid.clone());
    resid.iter_mut().for_each(|r| *r = (*r - centre).abs());
    let noise = 1.4826 * median(&mut resid);
    let min_prominence = (opts.prominence_factor * noise).max(0.5 * opts.min_amplitude_khz);

    let mut diagnostics = Vec::new();
    let mut accepted: Vec<PlePeak> = Vec::new();
    for i in 1..s.len() - 1 {
        if !(s[i] > s[i - 1] && s[i] >= s[i + 1]) {
            continue;
        }
        let prom = prominence(&s, i);
        if prom < min_prominence || prom <= 0.0 {
            continue;
        }
        let fit = match fit_candidate(f, y, &s, i, prom, noise.max(1e-9)) {
            Ok(fit) => fit,
            Err(e) => {
                diagnostics.push(format!("candidate at {:.4} GHz dropped: {e}", f[i]));
                continue;
            }
        };
        let peak = to_peak(&fit);
        let reject = if !(peak.fwhm_mhz > opts.fwhm_min_mhz && peak.fwhm_mhz < opts.fwhm_max_mhz) {
            Some(format!("FWHM {:.1} MHz outside ({}, {})", peak.fwhm_mhz, opts.fwhm_min_mhz, opts.fwhm_max_mhz))
        } else if peak.amplitude_khz < opts.min_amplitude_khz {
            Some(format!("amplitude {:.4} kHz below {}", peak.amplitude_khz, opts.min_amplitude_khz))
        } else if !(peak.amplitude_khz >= opts.min_significance * peak.amplitude_sigma_khz) {
            Some(format!(
                "amplitude {:.4} ± {:.4} kHz below {}σ",
                peak.amplitude_khz, peak.amplitude_sigma_khz, opts.min_significance
            ))
        } else if !(peak.fwhm_sigma_mhz <= opts.max_fwhm_rel_sigma * peak.fwhm_mhz) {
            Some(format!("FWHM {:.1} ± {:.1} MHz not resolved", peak.fwhm_mhz, peak.fwhm_sigma_mhz))
        } else {
            None
        };
        match reject {
            Some(why) => diagnostics.push(format!("candidate at {:.4} GHz dropped: {why}", f[i])),
            None => {
                if !fit.converged {
                    diagnostics.push(format!("candidate at {:.4} GHz: fit hit the iteration limit", f[i]));
                }
                accepted.push(peak);
            }
        }
    }
    accepted.sort_by(|a, b| b.amplitude_khz.total_cmp(&a.amplitude_khz));
    let mut kept: Vec<PlePeak> = Vec::new();
    for p in accepted {
        if let Some(q) = kept.iter().find(|q| (q.center_ghz - p.center_ghz).abs() <= opts.min_separation_ghz) {
            diagnostics.push(format!(
                "peak at {:.4} GHz dropped: within {} GHz of brighter peak at {:.4} GHz",
                p.center_ghz, opts.min_separation_ghz, q.center_ghz
            ));
        } else {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| a.center_ghz.total_cmp(&b.center_ghz));
    Ok((kept, diagnostics))
}

#[derive(Debug, Serialize, Deserialize)]
struct PleRow {
    pillar_id: String,
    frequency_ghz: f64,
    rate_khz: f64,
}

/// Reads `pillar_id,frequency_ghz,rate_khz` rows, grouped by pillar in
/// order of first appearance.
pub fn read_ple_csv<R: Read>(reader: R) -> Result<Vec<PleSpectrum>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by_pillar: IndexMap<String, PleSpectrum> = IndexMap::new();
    for row in rdr.deserialize() {
        let r: PleRow = row?;
        let s = by_pillar.entry(r.pillar_id.clone()).or_insert_with(|| PleSpectrum {
            pillar_id: r.pillar_id.clone(),
            frequency_ghz: Vec::new(),
            rate_khz: Vec::new(),
        });
        s.frequency_ghz.push(r.frequency_ghz);
        s.rate_khz.push(r.rate_khz);
    }
    let spectra: Vec<PleSpectrum> = by_pillar.into_values().collect();
    for s in &spectra {
        s.validate()?;
    }
    Ok(spectra)
}

pub fn write_ple_csv<W: Write>(writer: W, spectra: &[PleSpectrum]) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pillar_id", "frequency_ghz", "rate_khz"])?;
    for s in spectra {
        for (f, r) in s.frequency_ghz.iter().zip(&s.rate_khz) {
            w.write_record([s.pillar_id.as_str(), &f.to_string(), &r.to_string()])?;
        }
    }
    w.flush().map_err(|e| SurveyError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::sim::{simulate_ple, PeakSpec, PleSim};
    use proptest::prelude::*;

    fn spectrum(peaks: Vec<PeakSpec>, noise: f64, seed: u64) -> PleSpectrum {
        let sim = PleSim { noise_khz: noise, peaks, ..PleSim::default() };
        simulate_ple("p", &sim, seed).unwrap()
    }

    fn line(center_ghz: f64, amplitude_khz: f64) -> PeakSpec {
        // 300 MHz FWHM, half Gaussian half Lorentzian
        PeakSpec { center_ghz, amplitude_khz, sigma_g_mhz: 183.2 / 2.3548, gamma_l_mhz: 91.6 }
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let s = PleSpectrum {
            pillar_id: "flat".into(),
            frequency_ghz: crate::linspace(-30.0, 30.0, 3001),
            rate_khz: vec![0.2; 3001],
        };
        assert!(detect_ple_peaks(&s, &PeakDetectionOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn three_lines_recovered() {
        let s = spectrum(vec![line(-12.0, 0.4), line(3.5, 0.8), line(17.0, 1.5)], 0.02, 4);
        let peaks = detect_ple_peaks(&s, &PeakDetectionOptions::default()).unwrap();
        assert_eq!(peaks.len(), 3, "{peaks:?}");
        for (p, c) in peaks.iter().zip([-12.0, 3.5, 17.0]) {
            assert!((p.center_ghz - c).abs() < 0.05, "{p:?}");
            assert!((p.fwhm_mhz - 300.0).abs() < 60.0, "{p:?}");
        }
    }

    #[test]
    fn doublet_collapses_to_brighter_line() {
        let s = spectrum(vec![line(0.0, 0.6), line(1.0, 1.0)], 0.02, 5);
        let (peaks, diag) = detect_ple_peaks_with_diagnostics(&s, &PeakDetectionOptions::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].center_ghz - 1.0).abs() < 0.05);
        assert!(diag.iter().any(|d| d.contains("brighter")), "{diag:?}");
    }

    #[test]
    fn narrow_scan_rejected() {
        let s = PleSpectrum {
            pillar_id: "n".into(),
            frequency_ghz: crate::linspace(-5.0, 5.0, 100),
            rate_khz: vec![0.0; 100],
        };
        assert!(matches!(detect_ple_peaks(&s, &PeakDetectionOptions::default()), Err(SurveyError::InvalidInput(_))));
    }

    #[test]
    fn csv_round_trip() {
        let a = spectrum(vec![line(0.0, 1.0)], 0.02, 1);
        let mut b = spectrum(vec![], 0.02, 2);
        b.pillar_id = "q".into();
        let mut buf = Vec::new();
        write_ple_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        assert!(buf.starts_with(b"pillar_id,frequency_ghz,rate_khz\n"));
        assert_eq!(read_ple_csv(&buf[..]).unwrap(), vec![a, b]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn returned_peaks_satisfy_constraints(
            centers in proptest::collection::vec(-28.0f64..28.0, 0..5),
            amps in proptest::collection::vec(0.0f64..2.0, 5),
            widths in proptest::collection::vec(5.0f64..2000.0, 5),
            seed in 0u64..1000,
        ) {
            let specs: Vec<PeakSpec> = centers.iter().enumerate().map(|(k, &c)| PeakSpec {
                center_ghz: c, amplitude_khz: amps[k], sigma_g_mhz: widths[k] / 2.3548, gamma_l_mhz: 0.3 * widths[k],
            }).collect();
            let s = spectrum(specs, 0.02, seed);
            let opts = PeakDetectionOptions::default();
            let peaks = detect_ple_peaks(&s, &opts).unwrap();
            for (k, p) in peaks.iter().enumerate() {
                prop_assert!(p.fwhm_mhz > 50.0 && p.fwhm_mhz < 3000.0);
                prop_assert!(p.amplitude_khz >= 0.03);
                for q in &peaks[k + 1..] {
                    prop_assert!((q.center_ghz - p.center_ghz).abs() > 2.0);
                }
            }
        }
    }
}
