//! Discrete-event execution of a spin sequence.
//!
//! Every (repetition, sweep point) pass walks the block list in order. The
//! state is the probability `p` of the bright (±3/2) subspace plus whether
//! the emitter is on resonance:
//!
//! - `repump` redraws the charge/resonance condition;
//! - `check` counts at the bright rate if on resonance, dark otherwise;
//! - `spin_pump` sets `p = 1`;
//! - `norm1`, `norm0`, `readout` project the spin, count at the bright or
//!   dark rate, and (for the normalization blocks) pump it back to `p = 0`;
//! - `mw` applies the payload: `p ← p(1-P) + (1-p)P`.
//!
//! Each pass draws a nuclear projection `±f_HF/2` and a quasi-static
//! detuning `N(0, σ)` with `σ = √2/(2π T₂*)`, which yields the Gaussian
//! Ramsey envelope `exp(-(τ/T₂*)²)`. Refocused sequences additionally relax
//! toward `P = ½` as `exp(-(t/T₂(N))ⁿ)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::propagate::{compose, free, pulse, transition_probability, IDENTITY};
use super::sequence::{BlockKind, MwOp, MwProgram, SpinSequence};
use super::{SpinError, SpinModel, SpinSweepRecord};
use crate::photophysics::{poisson, EmitterModel};
use crate::{Exec, SeedTree};

/// Transition probability of one microwave program for a spin detuned by
/// `delta` [MHz] from the microwave carrier.
pub fn program_probability(program: &MwProgram, delta: f64) -> f64 {
    let mut u = IDENTITY;
    for op in &program.ops {
        let step = match *op {
            MwOp::Pulse { duration_us, phase_deg, omega } => pulse(omega, delta, phase_deg, duration_us),
            MwOp::Free { duration_us } => free(delta, duration_us),
        };
        u = compose(&step, &u);
    }
    transition_probability(&u)
}

/// Runs `repetitions` sweeps of `sequence` and returns records ordered by
/// repetition, then sweep point.
pub fn run_spin_sequence(
    sequence: &SpinSequence,
    spin: &SpinModel,
    emitter: &EmitterModel,
    repetitions: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SpinSweepRecord>, SpinError> {
    spin.validate()?;
    if !(emitter.c0 >= 0.0) || !emitter.c0.is_finite() {
        return Err(SpinError::InvalidParameter("emitter c0 must be finite and non-negative".into()));
    }
    sequence.validate(spin.rabi_frequency)?;
    let sweep = sequence.sweep_values()?;
    let m = sweep.len();
    let tree = SeedTree::new(seed).child("spin");
    let sigma_qs = std::f64::consts::SQRT_2 / (2.0 * std::f64::consts::PI * spin.t2_star);
    let quasi_static = Normal::new(0.0, sigma_qs).map_err(|e| SpinError::InvalidParameter(e.to_string()))?;

    // Programs depend only on the sweep point; build them once.
    let programs: Vec<Vec<Option<MwProgram>>> = sweep
        .iter()
        .map(|&v| {
            sequence
                .blocks
                .iter()
                .map(|b| {
                    b.mw_payload.as_ref().and_then(|n| sequence.mw.get(n)).map(|mw| mw.program(v, spin.rabi_frequency))
                })
                .collect()
        })
        .collect();

    let records = exec.map_range(repetitions * m, |index| {
        let (rep, k) = (index / m, index % m);
        let mut rng = tree.stream(index as u64);
        let nuclear = if rng.random::<bool>() { 0.5 } else { -0.5 };
        let delta_spin = spin.transition_frequency + nuclear * spin.hyperfine + quasi_static.sample(&mut rng);
        let mut ready = rng.random::<f64>() < spin.ready_probability;
        let mut p_bright: f64 = 0.5;
        let mut rec = SpinSweepRecord { sweep_value: sweep[k], rep: rep as u64, check: 0, norm1: 0, norm0: 0, ro: 0 };
        for (block, program) in sequence.blocks.iter().zip(&programs[k]) {
            let scale = block.duration_us / spin.reference_block_us;
            let bright = (emitter.c0 + spin.baseline) * scale;
            let dark = (emitter.c0 * (1.0 - spin.contrast) + spin.baseline) * scale;
            let count = |p: f64, ready: bool, rng: &mut rand_chacha::ChaCha8Rng| {
                let lit = ready && rng.random::<f64>() < p;
                poisson(rng, if lit { bright } else { dark })
            };
            match block.kind {
                BlockKind::Repump => ready = rng.random::<f64>() < spin.ready_probability,
                BlockKind::Check => {
                    let c = count(1.0, ready, &mut rng);
                    if block.records_counts() {
                        rec.check = c;
                    }
                }
                BlockKind::SpinPump => p_bright = 1.0,
                BlockKind::Norm1 | BlockKind::Norm0 | BlockKind::Readout => {
                    let c = count(p_bright, ready, &mut rng);
                    if block.records_counts() {
                        match block.kind {
                            BlockKind::Norm1 => rec.norm1 = c,
                            BlockKind::Norm0 => rec.norm0 = c,
                            _ => rec.ro = c,
                        }
                    }
                    if block.kind != BlockKind::Readout {
                        p_bright = 0.0;
                    }
                }
                BlockKind::Mw => {
                    let program = program.as_ref().expect("validated payload");
                    let mut p = program_probability(program, delta_spin - program.frequency_mhz);
                    if program.refocused && program.free_time_us > 0.0 {
                        let t2_us = 1e3 * spin.coherence.t2_ms(program.n_pi);
                        let decay = (-(program.free_time_us / t2_us).powf(spin.decay_exponent)).exp();
                        p = 0.5 + (p - 0.5) * decay;
                    }
                    p_bright = p_bright * (1.0 - p) + (1.0 - p_bright) * p;
                }
                BlockKind::Wait => {}
            }
        }
        rec
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::sequence::{MwKind, MwSequence, SweepParameter};
    use crate::spin::{normalize_readout, CoherenceLaw};

    fn bright_model() -> (SpinModel, EmitterModel) {
        let spin = SpinModel { transition_frequency: 100.0, hyperfine: 0.0, t2_star: 50.0, ..SpinModel::default() };
        (spin, EmitterModel::new(39.0, 20.0))
    }

    fn mean_r(seq: &SpinSequence, spin: &SpinModel, e: &EmitterModel) -> f64 {
        let recs = run_spin_sequence(seq, spin, e, 3000, 7, Exec::default()).unwrap();
        let pts = normalize_readout(&recs, 10).unwrap();
        pts.iter().map(|p| p.r).sum::<f64>() / pts.len() as f64
    }

    #[test]
    fn identity_payload_keeps_spin_pumped_out() {
        let (spin, e) = bright_model();
        let mut mw = MwSequence::new(MwKind::RabiBurst, 100.0, 5.0);
        mw.duration_us = Some(0.0);
        let r = mean_r(&SpinSequence::standard(mw), &spin, &e);
        assert!(r.abs() < 0.03, "{r}");
    }

    #[test]
    fn resonant_pi_pulse_transfers() {
        let (spin, e) = bright_model();
        let mw = MwSequence::new(MwKind::PiPulse, 100.0, 5.0);
        let r = mean_r(&SpinSequence::standard(mw), &spin, &e);
        assert!((r - 1.0).abs() < 0.03, "{r}");
    }

    #[test]
    fn parallel_equals_sequential_and_seeds_matter() {
        let (spin, e) = bright_model();
        let mw = MwSequence::new(MwKind::Ramsey, 99.0, 5.0).with_sweep(SweepParameter::Delay, vec![0.0, 0.2, 0.4]);
        let seq = SpinSequence::standard(mw);
        let a = run_spin_sequence(&seq, &spin, &e, 50, 1, Exec::Parallel).unwrap();
        let b = run_spin_sequence(&seq, &spin, &e, 50, 1, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        assert_eq!((a[4].rep, a[4].sweep_value), (1, 0.2));
        assert_ne!(a, run_spin_sequence(&seq, &spin, &e, 50, 2, Exec::Sequential).unwrap());
    }

    #[test]
    fn hahn_echo_relaxes_to_half() {
        let spin =
            SpinModel { coherence: CoherenceLaw::Fixed { t2_ms: 0.01 }, decay_exponent: 1.0, ..bright_model().0 };
        let e = bright_model().1;
        let mw = MwSequence::new(MwKind::Hahn, 100.0, 5.0).with_sweep(SweepParameter::Delay, vec![0.0, 50.0]);
        let recs = run_spin_sequence(&SpinSequence::standard(mw), &spin, &e, 3000, 3, Exec::default()).unwrap();
        let pts = normalize_readout(&recs, 10).unwrap();
        assert!((pts[0].r - 1.0).abs() < 0.04, "{}", pts[0].r);
        assert!((pts[1].r - 0.5).abs() < 0.04, "{}", pts[1].r);
    }

    #[test]
    fn malformed_sequence_rejected_before_running() {
        let (spin, e) = bright_model();
        let mut mw = MwSequence::new(MwKind::Xy4, 100.0, 5.0);
        mw.phases_deg = Some(vec![0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            run_spin_sequence(&SpinSequence::standard(mw), &spin, &e, 1, 0, Exec::Sequential),
            Err(SpinError::InvalidSequence(_))
        ));
    }
}
