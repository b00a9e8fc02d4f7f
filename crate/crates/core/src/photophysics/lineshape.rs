/// Lorentzian response `c0 (Γ/2)² / (f² + (Γ/2)²)` for detuning `f`
/// and FWHM `gamma`.
pub fn lorentzian_response(f: f64, gamma: f64, c0: f64) -> f64 {
    let h2 = 0.25 * gamma * gamma;
    c0 * h2 / (f * f + h2)
}

/// Heralded brightness at signed delay `t` [ms] when the emitter can drift
/// away (rate `gamma_d` relative to the linewidth `gamma`) and, for future
/// delays, ionize at `gamma_i` [1/ms] without recapture.
pub fn no_recapture_model(t: f64, gamma_d: f64, gamma_i: f64, gamma: f64, c0: f64) -> f64 {
    let diffusion = c0 / (1.0 + gamma_d * t.abs() / gamma);
    if t > 0.0 {
        diffusion * (-gamma_i * t).exp()
    } else {
        diffusion
    }
}

/// Diffusion-only brightness; even in `t`.
pub fn diffusion_only_model(t: f64, gamma_d: f64, gamma: f64, c0: f64) -> f64 {
    c0 / (1.0 + gamma_d * t.abs() / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lorentzian_anchors() {
        assert_eq!(lorentzian_response(0.0, 39.0, 7.42), 7.42);
        assert!((lorentzian_response(19.5, 39.0, 7.42) - 3.71).abs() < 1e-12);
        assert!((lorentzian_response(-2.5, 5.0, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_anchors() {
        assert_eq!(no_recapture_model(0.0, 3.0, 0.4, 36.0, 10.0), 10.0);
        // γ_d/Γ = 1 ms⁻¹ at t = 1 ms halves the counts.
        assert!((no_recapture_model(1.0, 36.0, 0.0, 36.0, 10.0) - 5.0).abs() < 1e-12);
        assert!((diffusion_only_model(10.0, 3.6, 36.0, 8.0) - 4.0).abs() < 1e-12);
        assert_eq!(diffusion_only_model(0.0, 3.6, 36.0, 8.0), 8.0);
    }

    #[test]
    fn ionization_only_acts_on_future_delays() {
        let past = no_recapture_model(-2.0, 10.0, 0.5, 36.0, 1.0);
        let future = no_recapture_model(2.0, 10.0, 0.5, 36.0, 1.0);
        assert!((future - past * (-1.0f64).exp()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn lorentzian_even_and_bounded(f in -1e3..1e3f64, g in 0.1..500.0f64, c0 in 0.0..100.0f64) {
            prop_assert_eq!(lorentzian_response(f, g, c0), lorentzian_response(-f, g, c0));
            prop_assert!(lorentzian_response(f, g, c0) <= c0);
        }

        #[test]
        fn diffusion_models_symmetric(t in -100.0..100.0f64, gd in 0.0..500.0f64, g in 1.0..100.0f64) {
            prop_assert_eq!(diffusion_only_model(t, gd, g, 3.0), diffusion_only_model(-t, gd, g, 3.0));
            prop_assert_eq!(no_recapture_model(t, gd, 0.0, g, 3.0), no_recapture_model(-t, gd, 0.0, g, 3.0));
            prop_assert_eq!(no_recapture_model(t, gd, 0.0, g, 3.0), diffusion_only_model(t, gd, g, 3.0));
        }

        #[test]
        fn no_recapture_monotone_in_abs_delay(t in 0.0..50.0f64, dt in 0.0..5.0f64, gd in 0.0..100.0f64, gi in 0.0..2.0f64) {
            for sign in [-1.0, 1.0] {
                let a = no_recapture_model(sign * t, gd, gi, 36.0, 1.0);
                let b = no_recapture_model(sign * (t + dt), gd, gi, 36.0, 1.0);
                prop_assert!(b <= a + 1e-15);
            }
        }
    }
}
