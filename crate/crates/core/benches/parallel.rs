//! Parallel against sequential execution on the three data-parallel hot
//! paths. Without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qemit::photophysics::{simulate_check_probe, CheckProbeSim, EmitterModel, FrequencyPrior};
use qemit::spin::{run_spin_sequence, MwKind, MwSequence, SpinModel, SpinSequence, SweepParameter};
use qemit::survey::{detect_ple_peaks, simulate_ple, PeakDetectionOptions, PeakSpec, PleSim};
use qemit::{linspace, Exec};

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn check_probe(c: &mut Criterion) {
    let sim = CheckProbeSim {
        emitter: EmitterModel::new(39.0, 7.42),
        f1: 0.0,
        prior: FrequencyPrior::Uniform { low: -200.0, high: 200.0 },
        probe_detunings: linspace(-150.0, 150.0, 31),
    };
    let mut g = c.benchmark_group("check_probe_200k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_check_probe(&sim, black_box(200_000), 7, exec).unwrap())
        });
    }
    g.finish();
}

fn spin_sweep(c: &mut Criterion) {
    let spin = SpinModel::default();
    let emitter = EmitterModel::new(39.0, 20.0);
    let f0 = spin.transition_frequency;
    let seq = SpinSequence::standard(
        MwSequence::new(MwKind::PiPulse, f0, 0.4)
            .with_sweep(SweepParameter::Frequency, linspace(f0 - 4.0, f0 + 4.0, 81)),
    );
    let mut g = c.benchmark_group("desr_200_reps");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_spin_sequence(&seq, &spin, &emitter, black_box(200), 3, exec).unwrap())
        });
    }
    g.finish();
}

fn ple_detection(c: &mut Criterion) {
    let spectra: Vec<_> = (0..16)
        .map(|i| {
            let sim = PleSim {
                peaks: vec![
                    PeakSpec {
                        center_ghz: -8.0 + 0.3 * i as f64,
                        amplitude_khz: 1.0,
                        sigma_g_mhz: 150.0,
                        gamma_l_mhz: 40.0,
                    },
                    PeakSpec { center_ghz: 9.0, amplitude_khz: 0.6, sigma_g_mhz: 200.0, gamma_l_mhz: 40.0 },
                ],
                ..PleSim::default()
            };
            simulate_ple(&format!("p{i}"), &sim, i).unwrap()
        })
        .collect();
    let opts = PeakDetectionOptions::default();
    let mut g = c.benchmark_group("ple_detect_16_pillars");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map_slice(&spectra, |s| detect_ple_peaks(s, &opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, check_probe, spin_sweep, ple_detection);
criterion_main!(benches);
