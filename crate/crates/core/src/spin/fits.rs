use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::models::{desr_model, gaussian_peak, ramsey_model, stretched_decay, t2_star_from_fwhm};
use super::propagate::rabi_chevron;
use super::SpinError;
use crate::optim::{fit_least_squares, pointwise, FitResult, ParamSpec};

fn check_data(x: &[f64], y: &[f64], sigma: Option<&[f64]>, required: usize) -> Result<(), SpinError> {
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != y.len()) {
        return Err(SpinError::InvalidParameter("x, y and sigma lengths differ".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SpinError::InvalidParameter("data must be finite".into()));
    }
    if x.len() < required {
        return Err(SpinError::InsufficientData { found: x.len(), required });
    }
    Ok(())
}

/// Weighted linear least squares `y ≈ Σ cⱼ colⱼ`; returns coefficients and
/// the weighted residual sum of squares.
fn linear_solve(cols: &[Vec<f64>], y: &[f64], sigma: Option<&[f64]>) -> Option<(Vec<f64>, f64)> {
    let w = |i: usize| sigma.map_or(1.0, |s| 1.0 / s[i]);
    let a = DMatrix::from_fn(y.len(), cols.len(), |i, j| cols[j][i] * w(i));
    let b = DVector::from_fn(y.len(), |i, _| y[i] * w(i));
    let c = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let sse = (&a * &c - &b).norm_squared();
    sse.is_finite().then(|| (c.iter().copied().collect(), sse))
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn span(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn median_spacing(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let mut d: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    d.sort_by(f64::total_cmp);
    d.get(d.len() / 2).copied().unwrap_or(f64::NAN)
}

/// Local maxima of the periodogram of `y` on `[0, f_max]`, strongest first.
fn periodogram_peaks(x: &[f64], y: &[f64], f_max: f64, resolution: f64) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let m = (f_max / resolution).ceil() as usize + 1;
    let power: Vec<f64> = (0..m)
        .map(|k| {
            let f = k as f64 * resolution;
            let (c, s) = x.iter().zip(y).fold((0.0, 0.0), |(c, s), (&t, &v)| {
                let ph = 2.0 * PI * f * t;
                (c + (v - mean) * ph.cos(), s + (v - mean) * ph.sin())
            });
            c * c + s * s
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..m)
        .filter(|&k| power[k] >= power[k - 1] && (k + 1 == m || power[k] > power[k + 1]))
        .map(|k| (k as f64 * resolution, power[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.into_iter().map(|p| p.0).collect()
}

/// Two-Gaussian DESR fit with derived hyperfine splitting and T₂*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesrFit {
    /// Parameters `b`, `a1`, `center1`, `a2`, `center2`, `fwhm`
    /// (`center1 < center2`).
    pub fit: FitResult,
    pub f_hf: f64,
    pub f_hf_sigma: f64,
    /// T₂* from the shared FWHM [µs].
    pub t2_star: f64,
    pub t2_star_sigma: f64,
    /// Both lines carry amplitude above 2σ and sit more than half a
    /// linewidth apart.
    pub resolved: bool,
}

pub fn desr_fit(freqs: &[f64], r: &[f64], sigma: Option<&[f64]>) -> Result<DesrFit, SpinError> {
    check_data(freqs, r, sigma, 10)?;
    let (lo, hi) = span(freqs);
    let width = hi - lo;
    if !(width > 0.0) {
        return Err(SpinError::InvalidParameter("frequencies must span a range".into()));
    }
    let dx = median_spacing(freqs);
    let mut centers: Vec<f64> = freqs.to_vec();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    if centers.len() > 80 {
        let step = centers.len() as f64 / 80.0;
        centers = (0..80).map(|k| centers[(k as f64 * step) as usize]).collect();
    }
    let widths = geometric(2.0 * dx, 0.5 * width, 12);
    let mut best: Option<(f64, [f64; 6])> = None;
    for &w in &widths {
        let shapes: Vec<Vec<f64>> =
            centers.iter().map(|&c| freqs.iter().map(|&f| gaussian_peak(f, c, w)).collect()).collect();
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let cols = [vec![1.0; freqs.len()], shapes[i].clone(), shapes[j].clone()];
                if let Some((c, sse)) = linear_solve(&cols, r, sigma) {
                    if best.as_ref().is_none_or(|b| sse < b.0) {
                        best = Some((sse, [c[0], c[1], centers[i], c[2], centers[j], w]));
                    }
                }
            }
        }
    }
    let (_, init) = best.ok_or_else(|| SpinError::InvalidParameter("no usable initial guess".into()))?;
    let model = pointwise(|f, p: &[f64]| desr_model(f, p[0], p[1], p[2], p[3], p[4], p[5]));
    let run = |p: [f64; 6]| {
        let specs = [
            ParamSpec::new("b", p[0]),
            ParamSpec::new("a1", p[1]),
            ParamSpec::new("center1", p[2]).bounds(lo, hi),
            ParamSpec::new("a2", p[3]),
            ParamSpec::new("center2", p[4]).bounds(lo, hi),
            ParamSpec::new("fwhm", p[5]).bounds(0.1 * dx, 2.0 * width),
        ];
        fit_least_squares(&model, &specs, freqs, r, sigma)
    };
    let mut fit = run(init)?;
    if fit.value("center1") > fit.value("center2") {
        let v = fit.values();
        fit = run([v[0], v[3], v[4], v[1], v[2], v[5]])?;
    }
    let mut fit = fit.with_model("desr_two_gaussian");
    let (c1, c2, fwhm) = (fit.value("center1"), fit.value("center2"), fit.value("fwhm"));
    let f_hf = c2 - c1;
    let f_hf_sigma = (fit.sigma("center1").powi(2) + fit.sigma("center2").powi(2)
        - 2.0 * fit.covariance_of("center1", "center2"))
    .max(0.0)
    .sqrt();
    let t2_star = t2_star_from_fwhm(fwhm);
    let t2_star_sigma = t2_star * fit.sigma("fwhm") / fwhm;
    let significant = |a: &str| fit.value(a) > 2.0 * fit.sigma(a);
    let resolved = significant("a1") && significant("a2") && f_hf > 0.5 * fwhm;
    if !resolved {
        fit.warn("second line not resolved; f_hf is unreliable");
    }
    Ok(DesrFit { fit, f_hf, f_hf_sigma, t2_star, t2_star_sigma, resolved })
}

/// Two-frequency Ramsey fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    /// Parameters `b`, `a0`, `a1`, `phi0`, `phi1` [rad], `f_c`, `f_hf`
    /// [MHz] and `t2_star` [µs].
    pub fit: FitResult,
    /// Highest fitted frequency lies within 10% of the Nyquist bound of the
    /// delay sampling.
    pub aliased: bool,
}

impl RamseyFit {
    pub fn f_hf(&self) -> (f64, f64) {
        (self.fit.value("f_hf"), self.fit.sigma("f_hf"))
    }

    pub fn t2_star(&self) -> (f64, f64) {
        (self.fit.value("t2_star"), self.fit.sigma("t2_star"))
    }
}

#[derive(Debug, Clone, Copy)]
struct RamseyInit {
    b: f64,
    freqs: [f64; 2],
    amps: [f64; 2],
    phases: [f64; 2],
    t2: f64,
}

impl RamseyInit {
    /// Orders components so the first has the higher frequency and folds
    /// negative frequencies back to positive ones.
    fn canonical(mut self) -> Self {
        for k in 0..2 {
            if self.freqs[k] < 0.0 {
                self.freqs[k] = -self.freqs[k];
                self.phases[k] = -self.phases[k];
            }
        }
        if self.freqs[1] > self.freqs[0] {
            self.freqs.swap(0, 1);
            self.amps.swap(0, 1);
            self.phases.swap(0, 1);
        }
        self
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// `n_components` is 1 (single damped cosine, `f_hf = 0`) or 2.
pub fn ramsey_fit(tau: &[f64], r: &[f64], sigma: Option<&[f64]>, n_components: usize) -> Result<RamseyFit, SpinError> {
    if !(1..=2).contains(&n_components) {
        return Err(SpinError::InvalidParameter("n_components must be 1 or 2".into()));
    }
    let n_free = 2 + 3 * n_components;
    check_data(tau, r, sigma, n_free + 2)?;
    let (t_lo, t_hi) = span(tau);
    if t_lo < 0.0 || !(t_hi > t_lo) {
        return Err(SpinError::InvalidParameter("delays must be non-negative and span a range".into()));
    }
    let nyquist = 0.5 / median_spacing(tau);
    let duration = t_hi - t_lo;
    let mut peaks = periodogram_peaks(tau, r, nyquist, 0.125 / duration);
    peaks.truncate(4);
    peaks.push(0.0);

    let mut candidates: Vec<[f64; 2]> = Vec::new();
    for (i, &fa) in peaks.iter().enumerate() {
        if n_components == 1 {
            candidates.push([fa, 0.0]);
        } else {
            for &fb in &peaks[i + 1..] {
                candidates.push([fa.max(fb), fa.min(fb)]);
            }
        }
    }
    let mut scored: Vec<(f64, RamseyInit)> = Vec::new();
    for f in &candidates {
        for t2 in geometric(duration / 20.0, 2.0 * duration, 10) {
            let env: Vec<f64> = tau.iter().map(|&t| (-(t / t2).powi(2)).exp()).collect();
            let mut cols = vec![vec![1.0; tau.len()]];
            for &fk in &f[..n_components] {
                cols.push(tau.iter().zip(&env).map(|(&t, e)| e * (2.0 * PI * fk * t).cos()).collect());
                cols.push(tau.iter().zip(&env).map(|(&t, e)| e * (2.0 * PI * fk * t).sin()).collect());
            }
            if let Some((c, sse)) = linear_solve(&cols, r, sigma) {
                let mut amps = [0.0; 2];
                let mut phases = [0.0; 2];
                for k in 0..n_components {
                    let (cc, ss) = (c[1 + 2 * k], c[2 + 2 * k]);
                    amps[k] = cc.hypot(ss);
                    phases[k] = (-ss).atan2(cc);
                }
                scored.push((sse, RamseyInit { b: c[0], freqs: *f, amps, phases, t2 }));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let model = pointwise(|t, p: &[f64]| ramsey_model(t, p[0], [p[1], p[2]], [p[3], p[4]], p[5], p[6], p[7]));
    let single = n_components == 1;
    let run = |init: RamseyInit| {
        let f_c = if single { init.freqs[0] } else { 0.5 * (init.freqs[0] + init.freqs[1]) };
        let f_hf = if single { 0.0 } else { init.freqs[0] - init.freqs[1] };
        let specs = [
            ParamSpec::new("b", init.b),
            ParamSpec::new("a0", init.amps[0]),
            ParamSpec::new("a1", init.amps[1]).frozen_if(single),
            ParamSpec::new("phi0", init.phases[0]),
            ParamSpec::new("phi1", init.phases[1]).frozen_if(single),
            ParamSpec::new("f_c", f_c).min(0.0),
            ParamSpec::new("f_hf", f_hf).min(0.0).frozen_if(single),
            ParamSpec::new("t2_star", init.t2).min(1e-6 * duration),
        ];
        fit_least_squares(&model, &specs, tau, r, sigma)
    };
    let from_fit = |fit: &FitResult| {
        let v = fit.values();
        RamseyInit {
            b: v[0],
            freqs: [v[5] + 0.5 * v[6], v[5] - 0.5 * v[6]],
            amps: [v[1], v[2]],
            phases: [v[3], v[4]],
            t2: v[7],
        }
    };
    let cost = |fit: &FitResult| fit.chi2_reduced;
    let mut best: Option<FitResult> = None;
    for (_, init) in scored.iter().take(3) {
        let mut fit = run(init.canonical())?;
        // a negative lower frequency is the same signal as its mirror image
        if !single && fit.value("f_c") < 0.5 * fit.value("f_hf") {
            fit = run(from_fit(&fit).canonical())?;
        }
        if best.as_ref().is_none_or(|b| cost(&fit) < cost(b)) {
            best = Some(fit);
        }
    }
    let mut fit =
        best.ok_or_else(|| SpinError::InvalidParameter("no usable initial guess".into()))?.with_model("ramsey");
    for name in ["phi0", "phi1"] {
        let p = fit.params.get_mut(name).expect("phase parameter");
        p.value = wrap_phase(p.value);
    }
    let f_top = fit.value("f_c") + 0.5 * fit.value("f_hf");
    let aliased = f_top > 0.9 * nyquist;
    if aliased {
        fit.warn(format!("fitted frequency {f_top:.4} MHz is near the Nyquist bound {nyquist:.4} MHz"));
    }
    if !single && t_hi * fit.value("f_hf") < 1.0 {
        fit.warn("delays do not cover one hyperfine beat period");
    }
    Ok(RamseyFit { fit, aliased })
}

/// Fits `b + A e^{-(t/T₂)ⁿ}` to a Hahn or DD decay over total free
/// evolution time `t`.
///
/// `converged` is cleared when the decay is not observed within the span
/// of `t`: amplitude below 2σ, less than 10% decayed at the last point, or
/// more than 90% decayed at the first.
pub fn stretched_decay_fit(t: &[f64], r: &[f64], sigma: Option<&[f64]>) -> Result<FitResult, SpinError> {
    check_data(t, r, sigma, 5)?;
    if t[0] <= 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpinError::InvalidParameter("times must be positive and strictly ascending".into()));
    }
    let (t_lo, t_hi) = (t[0], t[t.len() - 1]);
    let mut best: Option<(f64, [f64; 4])> = None;
    for t2 in geometric(0.5 * t_lo, 3.0 * t_hi, 24) {
        for n in [0.75, 1.0, 1.5, 2.0, 3.0] {
            let decay: Vec<f64> = t.iter().map(|&x| (-(x / t2).powf(n)).exp()).collect();
            if let Some((c, sse)) = linear_solve(&[vec![1.0; t.len()], decay], r, sigma) {
                if best.as_ref().is_none_or(|b| sse < b.0) {
                    best = Some((sse, [c[0], c[1], t2, n]));
                }
            }
        }
    }
    let (_, p) = best.ok_or_else(|| SpinError::InvalidParameter("no usable initial guess".into()))?;
    let specs = [
        ParamSpec::new("b", p[0]),
        ParamSpec::new("a", p[1]),
        ParamSpec::new("t2", p[2]).bounds(1e-3 * t_lo, 1e3 * t_hi),
        ParamSpec::new("n", p[3]).bounds(0.1, 10.0),
    ];
    let model = pointwise(|x, p: &[f64]| stretched_decay(x, p[0], p[1], p[2], p[3]));
    let mut fit = fit_least_squares(model, &specs, t, r, sigma)?.with_model("stretched_decay");
    let (t2, n) = (fit.value("t2"), fit.value("n"));
    if (-(t_hi / t2).powf(n)).exp() > 0.9 || !(fit.value("a").abs() > 2.0 * fit.sigma("a")) {
        fit.converged = false;
        fit.warn("no decay within the measured span; amplitude is unconstrained");
    } else if (-(t_lo / t2).powf(n)).exp() < 0.1 {
        fit.converged = false;
        fit.warn("decay completes before the first point");
    }
    Ok(fit)
}

/// `T₂ = β·N^α` fitted as a straight line in log-log space. `sigma` holds
/// absolute T₂ uncertainties, mapped to `σ/T₂` on the log scale.
pub fn t2_power_law_fit(n_pulses: &[f64], t2: &[f64], sigma: Option<&[f64]>) -> Result<FitResult, SpinError> {
    check_data(n_pulses, t2, sigma, 3)?;
    if let Some(v) = t2.iter().find(|v| **v <= 0.0) {
        return Err(SpinError::Domain(format!("T2 = {v} is not positive")));
    }
    if let Some(n) = n_pulses.iter().find(|n| **n < 2.0) {
        return Err(SpinError::InvalidParameter(format!("N = {n}: the power law is fitted to N >= 2 only")));
    }
    let mut distinct = n_pulses.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(SpinError::InsufficientData { found: distinct.len(), required: 3 });
    }
    let ln_n: Vec<f64> = n_pulses.iter().map(|n| n.ln()).collect();
    let ln_t2: Vec<f64> = t2.iter().map(|v| v.ln()).collect();
    let ln_sigma: Option<Vec<f64>> = sigma.map(|s| s.iter().zip(t2).map(|(s, v)| s / v).collect());
    let (c, _) = linear_solve(&[vec![1.0; ln_n.len()], ln_n.clone()], &ln_t2, ln_sigma.as_deref())
        .ok_or_else(|| SpinError::InvalidParameter("degenerate pulse counts".into()))?;
    let specs = [ParamSpec::new("alpha", c[1].max(1e-3)).min(0.0), ParamSpec::new("beta", c[0].exp()).min(1e-300)];
    let model = pointwise(|x, p: &[f64]| p[1].ln() + p[0] * x);
    Ok(fit_least_squares(model, &specs, &ln_n, &ln_t2, ln_sigma.as_deref())?.with_model("t2_power_law_loglog"))
}

/// Rabi oscillation `b + A·P(t; Δ, Ω, f_HF)` over burst length `t` [µs],
/// with the hyperfine splitting held at `f_hf`.
///
/// Parameters `b`, `a`, `omega`, `detuning` (`detuning >= 0`: the
/// chevron is even in Δ).
pub fn rabi_fit(t: &[f64], r: &[f64], sigma: Option<&[f64]>, f_hf: f64) -> Result<FitResult, SpinError> {
    check_data(t, r, sigma, 6)?;
    if !(f_hf >= 0.0) {
        return Err(SpinError::InvalidParameter("f_hf must be non-negative".into()));
    }
    let (t_lo, t_hi) = span(t);
    if t_lo < 0.0 || !(t_hi > t_lo) {
        return Err(SpinError::InvalidParameter("burst lengths must be non-negative and span a range".into()));
    }
    let nyquist = 0.5 / median_spacing(t);
    let mut peaks = periodogram_peaks(t, r, nyquist, 0.125 / (t_hi - t_lo));
    peaks.truncate(3);
    let mut best: Option<(f64, [f64; 4])> = None;
    for &f in &peaks {
        for scale in [0.6, 0.8, 0.9, 1.0, 1.1] {
            for frac in [0.0f64, 0.3, 0.6] {
                let w = f * scale;
                let (omega, delta) = (w * (1.0 - frac * frac).sqrt(), w * frac);
                let p: Vec<f64> = t.iter().map(|&x| rabi_chevron(x, delta, omega, f_hf)).collect();
                if let Some((c, sse)) = linear_solve(&[vec![1.0; t.len()], p], r, sigma) {
                    if best.as_ref().is_none_or(|b| sse < b.0) {
                        best = Some((sse, [c[0], c[1], omega, delta]));
                    }
                }
            }
        }
    }
    let (_, p) = best.ok_or_else(|| SpinError::InvalidParameter("no oscillation found".into()))?;
    let specs = [
        ParamSpec::new("b", p[0]),
        ParamSpec::new("a", p[1]),
        ParamSpec::new("omega", p[2]).bounds(1e-9, 2.0 * nyquist),
        ParamSpec::new("detuning", p[3]).bounds(0.0, 2.0 * nyquist),
    ];
    let model = pointwise(move |x, p: &[f64]| p[0] + p[1] * rabi_chevron(x, p[3], p[2], f_hf));
    Ok(fit_least_squares(model, &specs, t, r, sigma)?.with_model("rabi"))
}
