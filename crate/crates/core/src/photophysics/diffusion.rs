use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{no_recapture_model, poisson, CheckProbeRecord, EmitterModel, PhotoError};
use crate::grid::OrderedF64;
use crate::optim::{fit_least_squares, pointwise, FitResult, ParamSpec};
use crate::{Exec, SeedTree};

const MIN_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionModel {
    NoRecapture,
    DiffusionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFitOptions {
    pub threshold: u64,
    pub model: DiffusionModel,
    /// Homogeneous linewidth used to turn the fitted `γ_d/Γ` into a rate [MHz].
    pub gamma_assumed: f64,
    pub gamma_lifetime: f64,
    /// Range of `Γ/Γ_lifetime` for the reported γ_d band.
    pub ratio_band: (f64, f64),
}

impl Default for DiffusionFitOptions {
    fn default() -> Self {
        Self {
            threshold: 1,
            model: DiffusionModel::NoRecapture,
            gamma_assumed: 36.0,
            gamma_lifetime: 26.0,
            ratio_band: (1.0, 3.0),
        }
    }
}

/// Post-selected mean probe counts at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBin {
    pub delay_ms: f64,
    pub mean: f64,
    /// Poisson standard error `sqrt(mean / n)`, floored at one count in the bin.
    pub sem: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFit {
    /// Parameters `c0`, `gamma_d_over_gamma` [1/ms] and `gamma_i` [1/ms].
    pub fit: FitResult,
    /// γ_d at `gamma_assumed` [MHz/ms].
    pub gamma_d: f64,
    pub gamma_d_sigma: f64,
    /// γ_d for `Γ = ratio_band.0·Γ_lifetime` and `ratio_band.1·Γ_lifetime`.
    pub band: (f64, f64),
    pub bins: Vec<DelayBin>,
}

/// Groups records by delay, keeps those whose check counts reach
/// `threshold`, and averages the probe counts.
pub fn bin_by_delay(records: &[CheckProbeRecord], threshold: u64) -> Vec<DelayBin> {
    let mut groups: BTreeMap<OrderedF64, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.check_counts >= threshold) {
        let e = groups.entry(OrderedF64(r.delay_ms)).or_insert((0.0, 0));
        e.0 += r.probe_counts as f64;
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|(t, (sum, n))| {
            let mean = sum / n as f64;
            DelayBin { delay_ms: t.0, mean, sem: (mean.max(1.0 / n as f64) / n as f64).sqrt(), n }
        })
        .collect()
}

pub fn fit_spectral_diffusion(
    records: &[CheckProbeRecord],
    opts: &DiffusionFitOptions,
) -> Result<DiffusionFit, PhotoError> {
    if opts.threshold < 1 {
        return Err(PhotoError::InvalidParameter("threshold must be >= 1".into()));
    }
    if !(opts.gamma_assumed > 0.0) || !(opts.gamma_lifetime > 0.0) {
        return Err(PhotoError::InvalidParameter("linewidths must be positive".into()));
    }
    let has_past = records.iter().any(|r| r.delay_ms < 0.0);
    let has_future = records.iter().any(|r| r.delay_ms > 0.0);
    if !(has_past && has_future) {
        return Err(PhotoError::InvalidParameter("records need both negative and positive delays".into()));
    }
    let bins = bin_by_delay(records, opts.threshold);
    if bins.len() < MIN_BINS {
        return Err(PhotoError::InsufficientData { found: bins.len(), required: MIN_BINS });
    }
    let t: Vec<f64> = bins.iter().map(|b| b.delay_ms).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.mean).collect();
    let s: Vec<f64> = bins.iter().map(|b| b.sem).collect();

    let (c0, r, gi) = initial_guess(&bins);
    let ionizes = opts.model == DiffusionModel::NoRecapture;
    let specs = [
        ParamSpec::new("c0", c0).min(0.0),
        ParamSpec::new("gamma_d_over_gamma", r).min(0.0),
        ParamSpec::new("gamma_i", if ionizes { gi } else { 0.0 }).min(0.0).frozen_if(!ionizes),
    ];
    let model = pointwise(|t, p: &[f64]| no_recapture_model(t, p[1], p[2], 1.0, p[0]));
    let name = match opts.model {
        DiffusionModel::NoRecapture => "no_recapture",
        DiffusionModel::DiffusionOnly => "diffusion_only",
    };
    let fit = fit_least_squares(model, &specs, &t, &y, Some(&s))?.with_model(name);
    let ratio = fit.value("gamma_d_over_gamma");
    let ratio_sigma = fit.sigma("gamma_d_over_gamma");
    let band_base = ratio * opts.gamma_lifetime;
    Ok(DiffusionFit {
        gamma_d: ratio * opts.gamma_assumed,
        gamma_d_sigma: ratio_sigma * opts.gamma_assumed,
        band: (band_base * opts.ratio_band.0, band_base * opts.ratio_band.1),
        fit,
        bins,
    })
}

fn initial_guess(bins: &[DelayBin]) -> (f64, f64, f64) {
    let nearest = bins.iter().min_by(|a, b| a.delay_ms.abs().total_cmp(&b.delay_ms.abs())).expect("non-empty");
    let c0 = nearest.mean.max(1e-3);
    // Past side only feels diffusion: C0/C - 1 = r |t|.
    let past: Vec<&DelayBin> = bins.iter().filter(|b| b.delay_ms < 0.0).collect();
    let slopes: Vec<f64> = past
        .iter()
        .filter(|b| b.mean > 0.0)
        .map(|b| (c0 / b.mean - 1.0) / b.delay_ms.abs())
        .filter(|v| v.is_finite())
        .collect();
    let r = if slopes.is_empty() { 0.1 } else { (slopes.iter().sum::<f64>() / slopes.len() as f64).max(1e-6) };
    // Future over past at matching |t| isolates e^{-γ_i t}.
    let mut rates = Vec::new();
    for f in bins.iter().filter(|b| b.delay_ms > 0.0 && b.mean > 0.0) {
        if let Some(p) = past
            .iter()
            .filter(|p| p.mean > 0.0)
            .min_by(|a, b| (a.delay_ms + f.delay_ms).abs().total_cmp(&(b.delay_ms + f.delay_ms).abs()))
        {
            rates.push((p.mean / f.mean).ln() / f.delay_ms);
        }
    }
    let gi = if rates.is_empty() { 0.0 } else { (rates.iter().sum::<f64>() / rates.len() as f64).max(1e-6) };
    (c0, r, gi)
}

/// Generator for diffusion fits: Poisson samples around the analytic mean
/// curve at each delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSim {
    pub emitter: EmitterModel,
    /// Mean check counts; defaults to the emitter's `c0`.
    pub check_mean: Option<f64>,
}

pub fn simulate_diffusion_records(
    sim: &DiffusionSim,
    delays: &[f64],
    reps_per_delay: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<CheckProbeRecord>, PhotoError> {
    let e = &sim.emitter;
    if !(e.gamma > 0.0) || !(e.c0 >= 0.0) || !(e.gamma_d >= 0.0) || !(e.gamma_i >= 0.0) {
        return Err(PhotoError::InvalidParameter("emitter parameters out of range".into()));
    }
    if let Some(t) = delays.iter().find(|t| !t.is_finite()) {
        return Err(PhotoError::InvalidParameter(format!("delay {t} is not finite")));
    }
    let check_mean = sim.check_mean.unwrap_or(e.c0);
    let tree = SeedTree::new(seed).child("diffusion");
    Ok(exec.map_range(delays.len() * reps_per_delay, |rep| {
        let t = delays[rep / reps_per_delay];
        let mut rng = tree.stream(rep as u64);
        let check_counts = poisson(&mut rng, check_mean);
        let probe_counts = poisson(&mut rng, no_recapture_model(t, e.gamma_d, e.gamma_i, e.gamma, e.c0));
        CheckProbeRecord { rep: rep as u64, delay_ms: t, check_counts, probe_counts, probe_detuning_mhz: None }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linspace;

    fn emitter(gd_over_g: f64, gi: f64) -> EmitterModel {
        let mut e = EmitterModel::new(36.0, 10.0);
        e.gamma_d = gd_over_g * 36.0;
        e.gamma_i = gi;
        e
    }

    fn records(e: EmitterModel, reps: usize, seed: u64) -> Vec<CheckProbeRecord> {
        let delays = linspace(-10.0, 10.0, 21);
        simulate_diffusion_records(&DiffusionSim { emitter: e, check_mean: None }, &delays, reps, seed, Exec::default())
            .unwrap()
    }

    #[test]
    fn round_trip_recovers_rates() {
        let recs = records(emitter(1.0, 0.2), 500, 2);
        let fit = fit_spectral_diffusion(&recs, &DiffusionFitOptions::default()).unwrap();
        assert!(fit.fit.converged);
        assert!((fit.fit.value("gamma_d_over_gamma") - 1.0).abs() < 0.1);
        assert!((fit.fit.value("gamma_i") - 0.2).abs() < 0.02);
        assert!((fit.gamma_d - 36.0).abs() < 3.6);
    }

    #[test]
    fn band_is_proportional_to_fitted_rate() {
        let recs = records(emitter(0.5, 0.0), 200, 9);
        let opts = DiffusionFitOptions { model: DiffusionModel::DiffusionOnly, ..Default::default() };
        let fit = fit_spectral_diffusion(&recs, &opts).unwrap();
        assert_eq!(fit.fit.value("gamma_i"), 0.0);
        let scale = fit.gamma_d / 36.0;
        assert!((fit.band.0 - scale * 26.0).abs() < 1e-12 * fit.band.0.abs().max(1.0));
        assert!((fit.band.1 - scale * 78.0).abs() < 1e-12 * fit.band.1.abs().max(1.0));
    }

    #[test]
    fn one_sided_delays_rejected() {
        let recs: Vec<_> = records(emitter(1.0, 0.0), 5, 1).into_iter().filter(|r| r.delay_ms >= 0.0).collect();
        assert!(matches!(
            fit_spectral_diffusion(&recs, &DiffusionFitOptions::default()),
            Err(PhotoError::InvalidParameter(_))
        ));
    }

    #[test]
    fn too_few_bins_rejected() {
        let delays = [-1.0, 0.0, 1.0, 2.0];
        let recs = simulate_diffusion_records(
            &DiffusionSim { emitter: emitter(1.0, 0.0), check_mean: None },
            &delays,
            50,
            1,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(
            fit_spectral_diffusion(&recs, &DiffusionFitOptions::default()).unwrap_err(),
            PhotoError::InsufficientData { found: 4, required: 5 }
        );
    }

    #[test]
    fn bins_postselect_on_check() {
        let mk = |rep, check, probe| CheckProbeRecord {
            rep,
            delay_ms: 1.0,
            check_counts: check,
            probe_counts: probe,
            probe_detuning_mhz: None,
        };
        let bins = bin_by_delay(&[mk(0, 0, 100), mk(1, 2, 4), mk(2, 3, 6)], 2);
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].mean, 5.0);
        assert_eq!(bins[0].n, 2);
    }
}
