use std::f64::consts::{LN_2, PI};

/// `b + e^{-(τ/T₂*)²} Σᵢ Aᵢ cos(2π(f_c ± f_HF/2)τ + φᵢ)`; the first
/// component sits at `f_c + f_HF/2`.
#[allow(clippy::too_many_arguments)]
pub fn ramsey_model(
    tau: f64,
    b: f64,
    amplitudes: [f64; 2],
    phases: [f64; 2],
    f_c: f64,
    f_hf: f64,
    t2_star: f64,
) -> f64 {
    let env = (-(tau / t2_star).powi(2)).exp();
    let f = [f_c + 0.5 * f_hf, f_c - 0.5 * f_hf];
    let osc: f64 = (0..2).map(|i| amplitudes[i] * (2.0 * PI * f[i] * tau + phases[i]).cos()).sum();
    b + env * osc
}

/// `b + A e^{-(t/T₂)ⁿ}`.
pub fn stretched_decay(t: f64, b: f64, a: f64, t2: f64, n: f64) -> f64 {
    b + a * (-(t / t2).powf(n)).exp()
}

/// Gaussian line of unit height and full width at half maximum `fwhm`.
pub fn gaussian_peak(f: f64, center: f64, fwhm: f64) -> f64 {
    (-4.0 * LN_2 * ((f - center) / fwhm).powi(2)).exp()
}

/// Two Gaussian lines with a shared width on a flat offset.
pub fn desr_model(f: f64, b: f64, a1: f64, c1: f64, a2: f64, c2: f64, fwhm: f64) -> f64 {
    b + a1 * gaussian_peak(f, c1, fwhm) + a2 * gaussian_peak(f, c2, fwhm)
}

/// Dephasing time from a Gaussian DESR linewidth, `2√ln2 / (π·FWHM)`.
pub fn t2_star_from_fwhm(fwhm: f64) -> f64 {
    2.0 * LN_2.sqrt() / (PI * fwhm)
}

/// `β·N^α`.
pub fn t2_power_law(n_pulses: f64, alpha: f64, beta: f64) -> f64 {
    beta * n_pulses.powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        assert!((t2_star_from_fwhm(2.0 * LN_2.sqrt() / PI) - 1.0).abs() < 1e-15);
        assert!((stretched_decay(0.49, 0.1, 0.8, 0.49, 2.0) - (0.1 + 0.8 / std::f64::consts::E)).abs() < 1e-15);
        assert_eq!(t2_power_law(1.0, 0.73, 0.46), 0.46);
        assert!((t2_power_law(16.0, 0.73, 0.46) - 3.48).abs() < 0.01);
        let r0 = ramsey_model(0.0, 0.3, [0.2, 0.1], [0.5, -1.0], 2.13, 2.08, 0.9);
        assert!((r0 - (0.3 + 0.2 * 0.5f64.cos() + 0.1 * (-1.0f64).cos())).abs() < 1e-15);
        assert_eq!(gaussian_peak(1.25, 1.0, 0.5), 0.5);
    }

    proptest! {
        #[test]
        fn stretched_decay_within_offset_and_amplitude(t in 0.0..100.0f64, b in -1.0..1.0f64, a in 0.0..2.0f64, t2 in 0.01..10.0f64, n in 0.2..5.0f64) {
            let r = stretched_decay(t, b, a, t2, n);
            prop_assert!(r >= b - 1e-15 && r <= b + a + 1e-15);
        }

        #[test]
        fn ramsey_within_envelope(tau in 0.0..10.0f64, a0 in 0.0..1.0f64, a1 in 0.0..1.0f64, p0 in -4.0..4.0f64, p1 in -4.0..4.0f64) {
            let r = ramsey_model(tau, 0.5, [a0, a1], [p0, p1], 2.13, 2.08, 0.9);
            prop_assert!((r - 0.5).abs() <= a0 + a1 + 1e-12);
        }
    }
}
