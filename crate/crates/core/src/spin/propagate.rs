//! Two-level propagation in the frame rotating at the microwave frequency.
//!
//! `H = 2π (Δ/2 σz + Ω/2 (cos φ σx + sin φ σy))` with frequencies in MHz
//! and times in µs. The state starts in the lower level; transition
//! probabilities are `|⟨1|U|0⟩|²`.

use std::f64::consts::PI;

use num_complex::Complex64;

pub type Unitary = [[Complex64; 2]; 2];

pub const IDENTITY: Unitary =
    [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];

/// Exact propagator for a constant drive of Rabi frequency `omega`,
/// detuning `delta` and phase `phase_deg` over `t`.
pub fn pulse(omega: f64, delta: f64, phase_deg: f64, t: f64) -> Unitary {
    let w = (omega * omega + delta * delta).sqrt();
    if w == 0.0 || t == 0.0 {
        return IDENTITY;
    }
    let phi = phase_deg.to_radians();
    let (nx, ny, nz) = (omega * phi.cos() / w, omega * phi.sin() / w, delta / w);
    // U = cos(θ) I - i sin(θ) n·σ with θ = π w t
    let theta = PI * w * t;
    let (c, s) = (theta.cos(), theta.sin());
    let i = Complex64::i();
    [[c - i * s * nz, -i * s * Complex64::new(nx, -ny)], [-i * s * Complex64::new(nx, ny), c + i * s * nz]]
}

/// Free precession at detuning `delta` for `t`.
pub fn free(delta: f64, t: f64) -> Unitary {
    let e = Complex64::from_polar(1.0, -PI * delta * t);
    [[e, Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), e.conj()]]
}

/// `a · b` (apply `b` first).
pub fn compose(a: &Unitary, b: &Unitary) -> Unitary {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub fn transition_probability(u: &Unitary) -> f64 {
    u[1][0].norm_sqr().clamp(0.0, 1.0)
}

/// Rabi chevron averaged over the two nuclear projections `δ = Δ ± f_HF/2`:
/// `½ Σ Ω²/(Ω²+δ²) · sin²(π √(Ω²+δ²) t)`.
pub fn rabi_chevron(t: f64, detuning: f64, omega: f64, f_hf: f64) -> f64 {
    let one = |d: f64| {
        let w2 = omega * omega + d * d;
        if w2 == 0.0 {
            return 0.0;
        }
        omega * omega / w2 * (PI * w2.sqrt() * t).sin().powi(2)
    };
    0.5 * (one(detuning + 0.5 * f_hf) + one(detuning - 0.5 * f_hf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_unitary(u: &Unitary) -> bool {
        let p0 = u[0][0].norm_sqr() + u[1][0].norm_sqr();
        let p1 = u[0][1].norm_sqr() + u[1][1].norm_sqr();
        let overlap = u[0][0].conj() * u[0][1] + u[1][0].conj() * u[1][1];
        (p0 - 1.0).abs() < 1e-12 && (p1 - 1.0).abs() < 1e-12 && overlap.norm() < 1e-12
    }

    #[test]
    fn resonant_pi_pulse_flips() {
        assert!((transition_probability(&pulse(2.0, 0.0, 0.0, 0.25)) - 1.0).abs() < 1e-15);
        assert!((rabi_chevron(0.25, 0.0, 2.0, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(rabi_chevron(0.0, 0.3, 2.0, 2.19), 0.0);
    }

    #[test]
    fn xy_pi_pairs_compose_to_minus_i_sigma_z() {
        let x = pulse(1.0, 0.0, 0.0, 0.5);
        let y = pulse(1.0, 0.0, 90.0, 0.5);
        let xy = compose(&y, &x);
        assert!(
            (xy[0][0] - Complex64::new(0.0, 1.0)).norm() < 1e-12
                || (xy[0][0] + Complex64::new(0.0, 1.0)).norm() < 1e-12
        );
        assert!(xy[1][0].norm() < 1e-12);
    }

    #[test]
    fn ramsey_fringe() {
        let h = pulse(1.0, 0.0, 0.0, 0.25);
        for tau in [0.0, 0.3, 1.7] {
            let u = compose(&h, &compose(&free(0.8, tau), &h));
            let expected = 0.5 * (1.0 + (2.0 * PI * 0.8 * tau).cos());
            assert!((transition_probability(&u) - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn chevron_matches_pulse_average(t in 0.0..5.0f64, d in -10.0..10.0f64, om in 0.05..10.0f64, hf in 0.0..5.0f64) {
            let direct = 0.5 * (transition_probability(&pulse(om, d + hf / 2.0, 0.0, t))
                + transition_probability(&pulse(om, d - hf / 2.0, 0.0, t)));
            prop_assert!((direct - rabi_chevron(t, d, om, hf)).abs() < 1e-12);
        }

        #[test]
        fn chevron_bounded_and_even(t in 0.0..5.0f64, d in -10.0..10.0f64, om in 0.05..10.0f64, hf in 0.0..5.0f64) {
            let p = rabi_chevron(t, d, om, hf);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p, rabi_chevron(t, -d, om, hf));
        }

        #[test]
        fn propagators_are_unitary(om in 0.0..10.0f64, d in -10.0..10.0f64, ph in 0.0..360.0f64, t in 0.0..5.0f64) {
            prop_assert!(is_unitary(&pulse(om, d, ph, t)));
            prop_assert!(is_unitary(&free(d, t)));
        }
    }
}
