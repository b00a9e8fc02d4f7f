use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::PhotoError;
use crate::optim::{fit_least_squares, pointwise, FitResult, ParamSpec};

const MIN_POWERS: usize = 5;

/// `B·p + A·p/(p + p_sat)`: linear background plus a saturating emitter.
pub fn saturation_curve(p: f64, a: f64, b: f64, p_sat: f64) -> f64 {
    b * p + a * p / (p + p_sat)
}

/// Emitter-to-background ratio at saturation, `A_sat / (A_sat + B_sat)`
/// with `A_sat = A/2`, `B_sat = B·p_sat`.
pub fn rho_at_psat(a: f64, b: f64, p_sat: f64) -> f64 {
    let a_sat = 0.5 * a;
    let b_sat = b * p_sat;
    if a_sat + b_sat > 0.0 {
        a_sat / (a_sat + b_sat)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    /// Parameters `a` [kHz], `b` [kHz/µW], `p_sat` [µW].
    pub fit: FitResult,
    pub rho_at_psat: f64,
    /// Set when the data shows no saturating component.
    pub linear_only: bool,
}

pub fn saturation_fit(powers: &[f64], counts: &[f64]) -> Result<SaturationFit, PhotoError> {
    if powers.len() != counts.len() {
        return Err(PhotoError::InvalidParameter("powers and counts differ in length".into()));
    }
    if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(PhotoError::InvalidParameter("powers and counts must be finite and non-negative".into()));
    }
    let mut distinct: Vec<f64> = powers.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_POWERS {
        return Err(PhotoError::InsufficientData { found: distinct.len(), required: MIN_POWERS });
    }
    let (a0, b0, ps0) = initial_guess(powers, counts, &distinct);
    let specs =
        [ParamSpec::new("a", a0).min(0.0), ParamSpec::new("b", b0).min(0.0), ParamSpec::new("p_sat", ps0).min(0.0)];
    let model = pointwise(|p, q: &[f64]| saturation_curve(p, q[0], q[1], q[2]));
    let mut fit = fit_least_squares(model, &specs, powers, counts, None)?.with_model("saturation");
    let (a, b, ps) = (fit.value("a"), fit.value("b"), fit.value("p_sat"));
    let scale = counts.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let linear_only = a <= 1e-9 * scale;
    if linear_only {
        fit.warn("no saturating component: A is zero, rho set to 0");
    }
    if ps < distinct[0] {
        fit.warn("p_sat lies below the lowest measured power");
    }
    Ok(SaturationFit { rho_at_psat: if linear_only { 0.0 } else { rho_at_psat(a, b, ps) }, linear_only, fit })
}

/// Scans `p_sat` over a log grid spanning the measured powers; for each
/// candidate the curve is linear in (A, B) and solved exactly.
fn initial_guess(powers: &[f64], counts: &[f64], distinct: &[f64]) -> (f64, f64, f64) {
    let lo = distinct.iter().cloned().find(|p| *p > 0.0).unwrap_or(1e-3);
    let hi = distinct[distinct.len() - 1].max(lo * 10.0);
    let mut best = (f64::INFINITY, 0.0, 0.0, lo);
    let steps = 200;
    for k in 0..=steps {
        let ps = (lo / 10.0) * (100.0 * hi / lo).powf(k as f64 / steps as f64);
        let mut m = Matrix2::zeros();
        let mut v = Vector2::zeros();
        for (&p, &c) in powers.iter().zip(counts) {
            let row = Vector2::new(p / (p + ps), p);
            m += row * row.transpose();
            v += row * c;
        }
        let Some(sol) = m.try_inverse().map(|inv| inv * v) else { continue };
        let (a, b) = (sol[0].max(0.0), sol[1].max(0.0));
        let sse: f64 = powers.iter().zip(counts).map(|(&p, &c)| (c - saturation_curve(p, a, b, ps)).powi(2)).sum();
        if sse < best.0 {
            best = (sse, a, b, ps);
        }
    }
    (best.1, best.2, best.3)
}
