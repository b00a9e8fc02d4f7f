//! Heralded (check-probe) spectroscopy.
//!
//! A check block with the laser at `f1` passes when it records at least `T`
//! photons. For an emitter at frequency `f` the check counts are Poisson with
//! mean `λ(f - f1)` (a Lorentzian), so the posterior over the emitter
//! frequency after a passing check is proportional to the prior times
//! `P(Poisson(λ) ≥ T) = 1 - Γ_i[T, λ]`. The expected probe spectrum is that
//! posterior convolved with the Lorentzian response.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{lorentzian_response, EmitterModel, PhotoError};
use crate::grid::trapezoid;
use crate::special::{incomplete_gamma_lower, ln_gamma, ln_incomplete_gamma_lower};

/// Fraction of heralded probability that must fall on the grid.
const MIN_CAPTURED: f64 = 0.999;

/// Prior over the emitter frequency before the check block [MHz].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyPrior {
    /// Improper flat prior: the inhomogeneous distribution is much wider
    /// than anything the check can resolve.
    Flat,
    Uniform {
        low: f64,
        high: f64,
    },
    Gaussian {
        center: f64,
        fwhm: f64,
    },
    Dirac {
        at: f64,
    },
}

impl FrequencyPrior {
    /// Unnormalized prior weight, 1 at the mode.
    pub fn weight(&self, f: f64) -> f64 {
        match *self {
            FrequencyPrior::Flat => 1.0,
            FrequencyPrior::Uniform { low, high } => {
                if (low..=high).contains(&f) {
                    1.0
                } else {
                    0.0
                }
            }
            FrequencyPrior::Gaussian { center, fwhm } => {
                let s = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
                (-0.5 * ((f - center) / s).powi(2)).exp()
            }
            FrequencyPrior::Dirac { at } => {
                if f == at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, PhotoError> {
        match *self {
            FrequencyPrior::Flat => Err(PhotoError::ImproperPrior),
            FrequencyPrior::Uniform { low, high } => Ok(low + (high - low) * rng.random::<f64>()),
            FrequencyPrior::Gaussian { center, fwhm } => {
                let s = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
                Ok(Normal::new(center, s).map_err(|e| PhotoError::InvalidParameter(e.to_string()))?.sample(rng))
            }
            FrequencyPrior::Dirac { at } => Ok(at),
        }
    }

    fn validate(&self) -> Result<(), PhotoError> {
        let ok = match *self {
            FrequencyPrior::Flat => true,
            FrequencyPrior::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            FrequencyPrior::Gaussian { center, fwhm } => center.is_finite() && fwhm > 0.0 && fwhm.is_finite(),
            FrequencyPrior::Dirac { at } => at.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(PhotoError::InvalidParameter(format!("malformed prior {self:?}")))
        }
    }
}

/// `P(Poisson(lambda) >= threshold)`.
pub fn herald_probability(threshold: u32, lambda: f64) -> f64 {
    if threshold == 0 {
        return 1.0;
    }
    if lambda <= 0.0 {
        return 0.0;
    }
    incomplete_gamma_lower(threshold as f64, lambda).expect("validated arguments")
}

fn check_inputs(threshold: u32, gamma: f64, c0: f64) -> Result<(), PhotoError> {
    if threshold < 1 {
        return Err(PhotoError::InvalidParameter("threshold must be >= 1".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(PhotoError::InvalidParameter("gamma must be positive".into()));
    }
    if !(c0 >= 0.0) || c0.is_nan() {
        return Err(PhotoError::InvalidParameter("c0 must be non-negative".into()));
    }
    Ok(())
}

fn check_ascending(grid: &[f64]) -> Result<(), PhotoError> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PhotoError::GridNotAscending);
    }
    Ok(())
}

/// Log of an upper bound on the heralded mass beyond the grid ends, using
/// `P(Poisson(λ) ≥ T) ≤ λ^T / T!` and `λ(u) ≤ c0 (Γ/2)² / u²`.
fn ln_tail_mass_bound(threshold: u32, gamma: f64, c0: f64, f1: f64, prior: &FrequencyPrior, lo: f64, hi: f64) -> f64 {
    if c0 == 0.0 {
        return f64::NEG_INFINITY;
    }
    let t = threshold as f64;
    let k = c0 * 0.25 * gamma * gamma;
    let side = |dist: f64| {
        if dist <= 0.0 {
            return f64::INFINITY;
        }
        t * k.ln() - ln_gamma(t + 1.0) - (2.0 * t - 1.0).ln() - (2.0 * t - 1.0) * dist.ln()
    };
    let (wl, wr) = match *prior {
        FrequencyPrior::Flat => (1.0, 1.0),
        FrequencyPrior::Uniform { low, high } => ((low < lo) as u8 as f64, (high > hi) as u8 as f64),
        FrequencyPrior::Gaussian { center, .. } => {
            (if lo < center { prior.weight(lo) } else { 1.0 }, if hi > center { prior.weight(hi) } else { 1.0 })
        }
        FrequencyPrior::Dirac { .. } => (0.0, 0.0),
    };
    let left = if wl > 0.0 { wl.ln() + side(f1 - lo) } else { f64::NEG_INFINITY };
    let right = if wr > 0.0 { wr.ln() + side(hi - f1) } else { f64::NEG_INFINITY };
    let m = left.max(right);
    if m.is_infinite() {
        return m;
    }
    m + ((left - m).exp() + (right - m).exp()).ln()
}

fn ln_herald_probability(threshold: u32, lambda: f64) -> f64 {
    if threshold == 0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_incomplete_gamma_lower(threshold as f64, lambda).expect("validated arguments")
}

/// Unnormalized posterior on `grid`, scaled by `e^{-shift}` so its largest
/// value is one. Works in logs because `P(N ≥ T)` underflows for `λ ≪ T`.
fn unnormalized_density(
    grid: &[f64],
    threshold: u32,
    gamma: f64,
    c0: f64,
    f1: f64,
    prior: &FrequencyPrior,
) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = grid
        .iter()
        .map(|&f| {
            let w = prior.weight(f);
            if w == 0.0 {
                f64::NEG_INFINITY
            } else {
                w.ln() + ln_herald_probability(threshold, lorentzian_response(f - f1, gamma, c0))
            }
        })
        .collect();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return (vec![0.0; grid.len()], shift);
    }
    (logs.into_iter().map(|l| (l - shift).exp()).collect(), shift)
}

/// Fraction of the heralded mass that lies on the grid.
fn captured_fraction(mass: f64, shift: f64, ln_tail: f64) -> f64 {
    mass / (mass + (ln_tail - shift).exp())
}

/// Posterior density of the emitter frequency given a passing check, on
/// `f_grid`, for a flat prior. Integrates to one by the trapezoid rule.
pub fn heralded_spectral_density(
    f_grid: &[f64],
    threshold: u32,
    emitter: &EmitterModel,
    f1: f64,
) -> Result<Vec<f64>, PhotoError> {
    heralded_spectral_density_with_prior(f_grid, threshold, emitter, f1, &FrequencyPrior::Flat)
}

pub fn heralded_spectral_density_with_prior(
    f_grid: &[f64],
    threshold: u32,
    emitter: &EmitterModel,
    f1: f64,
    prior: &FrequencyPrior,
) -> Result<Vec<f64>, PhotoError> {
    density_impl(f_grid, threshold, emitter.gamma, emitter.c0, f1, prior)
}

fn density_impl(
    f_grid: &[f64],
    threshold: u32,
    gamma: f64,
    c0: f64,
    f1: f64,
    prior: &FrequencyPrior,
) -> Result<Vec<f64>, PhotoError> {
    check_inputs(threshold, gamma, c0)?;
    prior.validate()?;
    if let FrequencyPrior::Dirac { .. } = prior {
        return Err(PhotoError::InvalidParameter("a Dirac prior has no density on a grid".into()));
    }
    check_ascending(f_grid)?;
    let lo = f_grid[0];
    let hi = f_grid[f_grid.len() - 1];
    let half = 5.0 * gamma;
    if lo > f1 - half || hi < f1 + half {
        return Err(PhotoError::GridTooNarrow { half_span_required: half });
    }
    let (raw, shift) = unnormalized_density(f_grid, threshold, gamma, c0, f1, prior);
    let mass = trapezoid(f_grid, &raw);
    if !(mass > 0.0) {
        return Err(PhotoError::NoHeraldMass);
    }
    let ln_tail = ln_tail_mass_bound(threshold, gamma, c0, f1, prior, lo, hi);
    let captured = captured_fraction(mass, shift, ln_tail);
    if !(captured >= MIN_CAPTURED) {
        return Err(PhotoError::Truncated { captured });
    }
    Ok(raw.into_iter().map(|v| v / mass).collect())
}

/// Uniform emitter-frequency grid for the convolution: spacing at most
/// `max_spacing` (and at most Γ/20), covering at least ±10Γ around `f1`,
/// the support of a bounded prior, and, for a flat prior, enough span to
/// hold 99.9% of the heralded mass.
pub fn emitter_grid(
    gamma: f64,
    c0: f64,
    threshold: u32,
    f1: f64,
    prior: &FrequencyPrior,
    max_spacing: f64,
) -> Result<Vec<f64>, PhotoError> {
    check_inputs(threshold, gamma, c0)?;
    prior.validate()?;
    let dx = max_spacing.min(gamma / 20.0);
    let half = 10.0 * gamma;
    let (lo, hi) = match *prior {
        FrequencyPrior::Uniform { low, high } => (low.min(f1 - half), high.max(f1 + half)),
        FrequencyPrior::Gaussian { center, fwhm } => {
            let reach = 4.0 * fwhm;
            ((center - reach).min(f1 - half), (center + reach).max(f1 + half))
        }
        FrequencyPrior::Dirac { at } => ((at).min(f1 - half), at.max(f1 + half)),
        FrequencyPrior::Flat => {
            let mut span = half;
            loop {
                let g = uniform_grid(f1 - span, f1 + span, dx);
                let (raw, shift) = unnormalized_density(&g, threshold, gamma, c0, f1, prior);
                let mass = trapezoid(&g, &raw);
                if !(mass > 0.0) {
                    return Err(PhotoError::NoHeraldMass);
                }
                let ln_tail = ln_tail_mass_bound(threshold, gamma, c0, f1, prior, f1 - span, f1 + span);
                let captured = captured_fraction(mass, shift, ln_tail);
                if captured >= MIN_CAPTURED {
                    break (f1 - span, f1 + span);
                }
                span *= 2.0;
                if span > 4096.0 * half {
                    return Err(PhotoError::Truncated { captured });
                }
            }
        }
    };
    Ok(uniform_grid(lo, hi, dx))
}

fn uniform_grid(lo: f64, hi: f64, max_dx: f64) -> Vec<f64> {
    let n = ((hi - lo) / max_dx).ceil() as usize + 1;
    crate::grid::linspace(lo, hi, n.max(2))
}

/// Expected probe counts at each probe-laser detuning in `f_grid`, for a
/// flat prior over the emitter frequency.
pub fn checkprobe_spectrum(
    f_grid: &[f64],
    threshold: u32,
    gamma: f64,
    c0: f64,
    f1: f64,
) -> Result<Vec<f64>, PhotoError> {
    checkprobe_spectrum_with_prior(f_grid, threshold, gamma, c0, f1, &FrequencyPrior::Flat)
}

pub fn checkprobe_spectrum_with_prior(
    f_grid: &[f64],
    threshold: u32,
    gamma: f64,
    c0: f64,
    f1: f64,
    prior: &FrequencyPrior,
) -> Result<Vec<f64>, PhotoError> {
    check_inputs(threshold, gamma, c0)?;
    prior.validate()?;
    if let FrequencyPrior::Dirac { at } = *prior {
        if ln_herald_probability(threshold, lorentzian_response(at - f1, gamma, c0)) == f64::NEG_INFINITY {
            return Err(PhotoError::NoHeraldMass);
        }
        return Ok(f_grid.iter().map(|&f| lorentzian_response(f - at, gamma, c0)).collect());
    }
    let grid = emitter_grid(gamma, c0, threshold, f1, prior, gamma / 20.0)?;
    let density = density_impl(&grid, threshold, gamma, c0, f1, prior)?;
    Ok(convolve(f_grid, &grid, &density, gamma, c0))
}

/// Convolution of a density on `grid` with the Lorentzian response,
/// evaluated at each probe detuning. No truncation checks.
pub(crate) fn convolve(probe: &[f64], grid: &[f64], density: &[f64], gamma: f64, c0: f64) -> Vec<f64> {
    let n = grid.len();
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            let left = if j > 0 { grid[j] - grid[j - 1] } else { 0.0 };
            let right = if j + 1 < n { grid[j + 1] - grid[j] } else { 0.0 };
            0.5 * (left + right) * density[j]
        })
        .collect();
    probe
        .iter()
        .map(|&f| {
            grid.iter()
                .zip(&weights)
                .filter(|(_, w)| **w != 0.0)
                .map(|(&g, w)| w * lorentzian_response(f - g, gamma, c0))
                .sum()
        })
        .collect()
}

/// Convolved spectrum on a caller-fixed emitter grid. Used inside fits so
/// the model stays a smooth function of (Γ, C₀).
pub(crate) fn spectrum_on_grid(
    probe: &[f64],
    grid: &[f64],
    threshold: u32,
    gamma: f64,
    c0: f64,
    f1: f64,
    prior: &FrequencyPrior,
) -> Vec<f64> {
    let (raw, _) = unnormalized_density(grid, threshold, gamma, c0, f1, prior);
    let mass = trapezoid(grid, &raw);
    if !(mass > 0.0) {
        return vec![f64::NAN; probe.len()];
    }
    let density: Vec<f64> = raw.iter().map(|v| v / mass).collect();
    convolve(probe, grid, &density, gamma, c0)
}
