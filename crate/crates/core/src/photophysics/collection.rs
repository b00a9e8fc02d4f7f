use serde::{Deserialize, Serialize};

use super::PhotoError;

/// Far-field power through the boundary above the emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldProfile {
    /// Polar angles from the optical axis [rad], ascending within [0, π/2].
    pub theta: Vec<f64>,
    /// Power density normal to the boundary at each angle [arb.].
    pub p_boundary: Vec<f64>,
    /// Total emitted power [arb.].
    pub p_tot: f64,
}

impl FarFieldProfile {
    pub fn validate(&self) -> Result<(), PhotoError> {
        let bad = |m: &str| Err(PhotoError::InvalidParameter(m.to_string()));
        if self.theta.len() != self.p_boundary.len() || self.theta.len() < 2 {
            return bad("theta and p_boundary need equal length >= 2");
        }
        if self.theta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PhotoError::GridNotAscending);
        }
        if self.theta[0] < 0.0 || self.theta[self.theta.len() - 1] > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return bad("angles must lie in [0, pi/2]");
        }
        if self.p_boundary.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return bad("p_boundary must be finite and non-negative");
        }
        if !(self.p_tot > 0.0) || !self.p_tot.is_finite() {
            return bad("p_tot must be positive");
        }
        if crate::trapezoid(&self.theta, &self.p_boundary) > self.p_tot * (1.0 + 1e-9) {
            return bad("boundary power exceeds p_tot");
        }
        Ok(())
    }
}

/// Fraction of the emitted power inside the acceptance cone of an
/// objective with numerical aperture `na`:
/// `η = ∫₀^{asin NA} P_boundary(θ) dθ / P_tot` by the trapezoid rule, with
/// the profile linearly interpolated at the cone edge.
pub fn collection_efficiency(profile: &FarFieldProfile, na: f64) -> Result<f64, PhotoError> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(PhotoError::InvalidParameter(format!("numerical aperture {na} outside (0, 1]")));
    }
    profile.validate()?;
    let edge = na.asin();
    let (th, p) = (&profile.theta, &profile.p_boundary);
    let mut total = 0.0;
    for i in 1..th.len() {
        let (a, b) = (th[i - 1], th[i]);
        if a >= edge {
            break;
        }
        if b <= edge {
            total += 0.5 * (b - a) * (p[i - 1] + p[i]);
        } else {
            let pe = p[i - 1] + (p[i] - p[i - 1]) * (edge - a) / (b - a);
            total += 0.5 * (edge - a) * (p[i - 1] + pe);
        }
    }
    Ok((total / profile.p_tot).clamp(0.0, 1.0))
}
