use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use qemit::photophysics::{
    simulate_check_probe, simulate_diffusion_records, simulate_g2, write_check_probe_csv, write_timestamps_binary,
    write_timestamps_csv, CheckProbeSim, DiffusionSim, EmitterModel, FrequencyPrior, G2Sim,
};
use qemit::spin::{
    run_spin_sequence, write_sweep_csv, CoherenceLaw, MwKind, MwSequence, SpinModel, SpinSequence, Sweep,
    SweepParameter, SweepValues,
};
use qemit::survey::{random_pillar_peaks, simulate_ple, write_ple_csv, PleSim, RandomPillarOptions};
use qemit::{linspace, Exec, SeedTree};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{create, envelope, manifest_path, require, write_json, Status};

#[derive(Subcommand, Debug)]
pub enum SimCommand {
    /// Check-probe repetitions (CSV `rep,delay_ms,check_counts,probe_counts[,probe_detuning_mhz]`).
    CheckProbe(CheckProbeArgs),
    /// Spin sequence sweeps (CSV `sweep_value,rep,check,norm1,norm0,ro`).
    Spin(SpinSimArgs),
    /// PLE scans of a random pillar cohort (CSV `pillar_id,frequency_ghz,rate_khz`).
    Ple(PleSimArgs),
    /// Two-detector photon timestamps.
    G2(G2SimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Uniform,
    Gaussian,
    Flat,
}

/// Emitter frequency prior before the check block.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PriorArgs {
    #[arg(long, value_enum, default_value_t = PriorKind::Uniform)]
    pub prior: PriorKind,
    /// Full width of the uniform prior, FWHM of the Gaussian one [MHz].
    #[arg(long, default_value_t = 400.0)]
    pub prior_width_mhz: f64,
    #[arg(long, default_value_t = 0.0)]
    pub prior_center_mhz: f64,
}

impl PriorArgs {
    pub fn prior(&self) -> FrequencyPrior {
        let (c, w) = (self.prior_center_mhz, self.prior_width_mhz);
        match self.prior {
            PriorKind::Uniform => FrequencyPrior::Uniform { low: c - 0.5 * w, high: c + 0.5 * w },
            PriorKind::Gaussian => FrequencyPrior::Gaussian { center: c, fwhm: w },
            PriorKind::Flat => FrequencyPrior::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckProbeMode {
    /// Probe laser swept around the check laser at zero delay.
    Spectrum,
    /// Probe on the check laser at swept signed delays.
    Delay,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckProbeArgs {
    /// Output CSV; the resolved config goes to `<output>.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Block pairs in total (spectrum mode) or per delay (delay mode).
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = CheckProbeMode::Spectrum)]
    pub mode: CheckProbeMode,
    /// Homogeneous FWHM [MHz].
    #[arg(long, default_value_t = 39.0)]
    pub gamma_mhz: f64,
    /// On-resonance mean counts per block.
    #[arg(long, default_value_t = 7.42)]
    pub c0: f64,
    /// Check laser frequency [MHz].
    #[arg(long, default_value_t = 0.0)]
    pub f1_mhz: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    /// Probe sweep half-span around the check laser [MHz].
    #[arg(long, default_value_t = 150.0)]
    pub probe_span_mhz: f64,
    #[arg(long, default_value_t = 31)]
    pub probe_points: usize,
    /// Spectral diffusion rate, delay mode [MHz/ms].
    #[arg(long, default_value_t = 39.0)]
    pub gamma_d_mhz_per_ms: f64,
    /// Ionization rate, delay mode [1/ms].
    #[arg(long, default_value_t = 0.2)]
    pub gamma_i_per_ms: f64,
    /// Delays run over ±this [ms].
    #[arg(long, default_value_t = 10.0)]
    pub delay_span_ms: f64,
    #[arg(long, default_value_t = 21)]
    pub delay_points: usize,
}

pub fn check_probe(a: &CheckProbeArgs) -> Result<Status> {
    let out = require(&a.output, "output")?;
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let mut emitter = EmitterModel::new(a.gamma_mhz, a.c0);
    let records = match a.mode {
        CheckProbeMode::Spectrum => {
            if a.probe_points == 0 {
                bail!("--probe-points must be at least 1");
            }
            let sim = CheckProbeSim {
                emitter,
                f1: a.f1_mhz,
                prior: a.prior.prior(),
                probe_detunings: linspace(a.f1_mhz - a.probe_span_mhz, a.f1_mhz + a.probe_span_mhz, a.probe_points),
            };
            simulate_check_probe(&sim, a.reps, a.seed, Exec::default())?
        }
        CheckProbeMode::Delay => {
            if a.delay_points < 2 || !(a.delay_span_ms > 0.0) {
                bail!("delay mode needs --delay-points >= 2 and a positive --delay-span-ms");
            }
            emitter.gamma_d = a.gamma_d_mhz_per_ms;
            emitter.gamma_i = a.gamma_i_per_ms;
            let delays = linspace(-a.delay_span_ms, a.delay_span_ms, a.delay_points);
            simulate_diffusion_records(
                &DiffusionSim { emitter, check_mean: None },
                &delays,
                a.reps,
                a.seed,
                Exec::default(),
            )?
        }
    };
    write_check_probe_csv(create(out)?, &records)?;
    let passing = records.iter().filter(|r| r.check_counts >= 1).count();
    manifest(out, "sim check-probe", a, json!({ "records": records.len(), "check_counts_at_least_1": passing }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinKind {
    /// Burst length sweep.
    Rabi,
    /// π-pulse frequency sweep.
    Desr,
    /// Free-precession delay sweep.
    Ramsey,
    Hahn,
    Xy4,
    Xy8,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SpinSimArgs {
    /// Output CSV; the resolved config goes to `<output>.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions of the whole sweep.
    #[arg(long, default_value_t = 400)]
    pub reps: usize,
    /// Sequence descriptor (TOML). Replaces the built-in sequence chosen by
    /// --kind and the sweep flags.
    #[arg(long)]
    pub sequence: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SpinKind::Desr)]
    pub kind: SpinKind,
    /// Microwave frequency [MHz]; filled in per kind when absent.
    #[arg(long)]
    pub frequency_mhz: Option<f64>,
    /// Rabi frequency [MHz]; filled in per kind when absent.
    #[arg(long)]
    pub rabi_mhz: Option<f64>,
    /// First sweep value [µs or MHz]; filled in per kind when absent.
    #[arg(long)]
    pub sweep_start: Option<f64>,
    #[arg(long)]
    pub sweep_stop: Option<f64>,
    #[arg(long)]
    pub sweep_points: Option<usize>,
    /// XY8 blocks.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Spin transition frequency [MHz].
    #[arg(long, default_value_t = 183.93)]
    pub transition_frequency_mhz: f64,
    #[arg(long, default_value_t = 2.08)]
    pub hyperfine_mhz: f64,
    #[arg(long, default_value_t = 0.9)]
    pub t2_star_us: f64,
    /// T₂ = β·N^α, with β in ms.
    #[arg(long, default_value_t = 0.46)]
    pub t2_beta_ms: f64,
    #[arg(long, default_value_t = 0.73)]
    pub t2_alpha: f64,
    /// Stretch exponent of the refocused decay.
    #[arg(long, default_value_t = 2.0)]
    pub decay_exponent: f64,
    #[arg(long, default_value_t = 0.8)]
    pub contrast: f64,
    /// Background counts per reference-length block.
    #[arg(long, default_value_t = 0.0)]
    pub baseline: f64,
    #[arg(long, default_value_t = 0.7)]
    pub ready_probability: f64,
    /// Emitter on-resonance counts per reference-length block.
    #[arg(long, default_value_t = 20.0)]
    pub c0: f64,
}

impl SpinSimArgs {
    fn spin_model(&self) -> SpinModel {
        SpinModel {
            transition_frequency: self.transition_frequency_mhz,
            hyperfine: self.hyperfine_mhz,
            t2_star: self.t2_star_us,
            coherence: CoherenceLaw::PowerLaw { beta_ms: self.t2_beta_ms, alpha: self.t2_alpha },
            decay_exponent: self.decay_exponent,
            contrast: self.contrast,
            baseline: self.baseline,
            ready_probability: self.ready_probability,
            ..SpinModel::default()
        }
    }

    fn mw_kind(&self) -> MwKind {
        match self.kind {
            SpinKind::Rabi => MwKind::RabiBurst,
            SpinKind::Desr => MwKind::PiPulse,
            SpinKind::Ramsey => MwKind::Ramsey,
            SpinKind::Hahn => MwKind::Hahn,
            SpinKind::Xy4 => MwKind::Xy4,
            SpinKind::Xy8 => MwKind::Xy8,
        }
    }

    /// Fills the per-kind defaults so the echo is complete. Decoupling
    /// sweeps run the total free evolution out to twice the model T₂.
    pub fn resolved(mut self) -> Self {
        if self.sequence.is_some() {
            return self;
        }
        let f0 = self.transition_frequency_mhz;
        let (freq, rabi, start, stop, points) = match self.kind {
            SpinKind::Rabi => (f0, 5.0, 0.0, 1.0, 51),
            SpinKind::Desr => (f0, 0.4, f0 - 4.0, f0 + 4.0, 81),
            SpinKind::Ramsey => (f0 - 2.13, 10.0, 0.0, 3.0, 61),
            SpinKind::Hahn | SpinKind::Xy4 | SpinKind::Xy8 => {
                let mut mw = MwSequence::new(self.mw_kind(), f0, 10.0);
                mw.repeats = Some(self.repeats);
                let n = mw.number_of_pi_pulses().max(1);
                let t2_ms = CoherenceLaw::PowerLaw { beta_ms: self.t2_beta_ms, alpha: self.t2_alpha }.t2_ms(n);
                let tau_max = 2.0 * t2_ms * 1e3 / (2.0 * n as f64);
                (f0, 10.0, 0.01 * tau_max, tau_max, 40)
            }
        };
        self.frequency_mhz.get_or_insert(freq);
        self.rabi_mhz.get_or_insert(rabi);
        self.sweep_start.get_or_insert(start);
        self.sweep_stop.get_or_insert(stop);
        self.sweep_points.get_or_insert(points);
        self
    }

    fn sequence(&self) -> Result<SpinSequence> {
        if let Some(path) = &self.sequence {
            return Ok(SpinSequence::from_toml_str(&std::fs::read_to_string(path)?)?);
        }
        let parameter = match self.kind {
            SpinKind::Rabi => SweepParameter::Duration,
            SpinKind::Desr => SweepParameter::Frequency,
            _ => SweepParameter::Delay,
        };
        let (Some(freq), Some(rabi), Some(start), Some(stop), Some(points)) =
            (self.frequency_mhz, self.rabi_mhz, self.sweep_start, self.sweep_stop, self.sweep_points)
        else {
            bail!("sweep is not fully specified");
        };
        let mut mw = MwSequence::new(self.mw_kind(), freq, rabi);
        if self.kind == SpinKind::Xy8 {
            mw.repeats = Some(self.repeats);
        }
        mw.sweep = Some(Sweep { parameter, values: SweepValues::Range { start, stop, points } });
        Ok(SpinSequence::standard(mw))
    }
}

pub fn spin(a: &SpinSimArgs) -> Result<Status> {
    let out = require(&a.output, "output")?;
    if a.reps < 2 {
        bail!("--reps must be at least 2");
    }
    let sequence = a.sequence()?;
    let emitter = EmitterModel::new(39.0, a.c0);
    let records = run_spin_sequence(&sequence, &a.spin_model(), &emitter, a.reps, a.seed, Exec::default())?;
    write_sweep_csv(create(out)?, &records)?;
    let summary = json!({ "records": records.len(), "sequence": serde_json::to_value(&sequence)? });
    manifest(out, "sim spin", a, summary)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PleSimArgs {
    /// Output CSV; the resolved config and generator lines go to `<output>.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub pillars: usize,
    /// Each pillar gets 0 to this many lines, uniformly.
    #[arg(long, default_value_t = 3)]
    pub max_peaks: usize,
    /// Scans run over ±this [GHz].
    #[arg(long, default_value_t = 30.0)]
    pub span_ghz: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step_ghz: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_khz: f64,
    #[arg(long, default_value_t = 0.05)]
    pub background_khz: f64,
    #[arg(long, default_value_t = 0.2)]
    pub amplitude_min_khz: f64,
    #[arg(long, default_value_t = 2.0)]
    pub amplitude_max_khz: f64,
}

const MAX_PEAKS_PER_PILLAR: usize = 5;

pub fn ple(a: &PleSimArgs) -> Result<Status> {
    let out = require(&a.output, "output")?;
    if a.max_peaks > MAX_PEAKS_PER_PILLAR {
        bail!("--max-peaks is limited to {MAX_PEAKS_PER_PILLAR} by the line separation");
    }
    if !(a.span_ghz >= 10.0) {
        bail!("--span-ghz must be at least 10");
    }
    if !(a.amplitude_min_khz > 0.0 && a.amplitude_max_khz >= a.amplitude_min_khz) {
        bail!("amplitude range must be positive and ordered");
    }
    let opts = RandomPillarOptions {
        center_span_ghz: a.span_ghz - 5.0,
        amplitude_khz: (a.amplitude_min_khz, a.amplitude_max_khz),
        ..RandomPillarOptions::default()
    };
    let width = a.pillars.saturating_sub(1).to_string().len().max(3);
    let tree = SeedTree::new(a.seed).child("ple-cohort");
    let spectra = Exec::default().map_range(a.pillars, |i| {
        let mut rng = tree.stream(i as u64);
        let n = rng.random_range(0..=a.max_peaks);
        let peaks = random_pillar_peaks(&mut rng, n, &opts);
        let sim = PleSim {
            span_ghz: a.span_ghz,
            step_ghz: a.step_ghz,
            noise_khz: a.noise_khz,
            background_khz: a.background_khz,
            peaks: peaks.clone(),
        };
        let id = format!("pillar{i:0width$}");
        simulate_ple(&id, &sim, a.seed).map(|s| (s, peaks))
    });
    let spectra: Vec<_> = spectra.into_iter().collect::<Result<_, _>>()?;
    let truth: serde_json::Map<String, Value> =
        spectra.iter().map(|(s, p)| (s.pillar_id.clone(), serde_json::to_value(p).expect("plain data"))).collect();
    let scans: Vec<_> = spectra.into_iter().map(|(s, _)| s).collect();
    write_ple_csv(create(out)?, &scans)?;
    manifest(out, "sim ple", a, json!({ "pillars": scans.len(), "generator_peaks": truth }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampFormat {
    /// `channel,time_ns` rows.
    Csv,
    /// Little-endian records behind a `G2TS` magic.
    Binary,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct G2SimArgs {
    /// Output timestamp file; the resolved config goes to `<output>.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TimestampFormat::Csv)]
    pub format: TimestampFormat,
    /// Fraction of detected photons from the emitter.
    #[arg(long, default_value_t = 1.0)]
    pub signal_fraction: f64,
    /// Detected rate over both channels [1/s].
    #[arg(long, default_value_t = 2e7)]
    pub rate_hz: f64,
    #[arg(long, default_value_t = 0.02)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 10.0)]
    pub reexcitation_ns: f64,
}

pub fn g2(a: &G2SimArgs) -> Result<Status> {
    let out = require(&a.output, "output")?;
    let sim = G2Sim {
        signal_fraction: a.signal_fraction,
        rate_hz: a.rate_hz,
        duration_s: a.duration_s,
        reexcitation_ns: a.reexcitation_ns,
    };
    let photons = simulate_g2(&sim, a.seed)?;
    let w = create(out)?;
    match a.format {
        TimestampFormat::Csv => write_timestamps_csv(w, &photons)?,
        TimestampFormat::Binary => write_timestamps_binary(w, &photons)?,
    }
    manifest(out, "sim g2", a, json!({ "photons": photons.len() }))
}

fn manifest(data: &Path, command: &str, config: &impl Serialize, summary: Value) -> Result<Status> {
    write_json(Some(&manifest_path(data)), &envelope(command, config, summary)?)?;
    Ok(Status::Done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        spin: SpinSimArgs,
    }

    fn parse(args: &[&str]) -> SpinSimArgs {
        Wrap::parse_from(std::iter::once("x").chain(args.iter().copied())).spin.resolved()
    }

    #[test]
    fn every_kind_resolves_a_sweep() {
        for kind in ["rabi", "desr", "ramsey", "hahn", "xy4", "xy8"] {
            let a = parse(&["--kind", kind]);
            let s = a.sequence().unwrap();
            assert!(a.sweep_stop.unwrap() > a.sweep_start.unwrap(), "{kind}");
            assert_eq!(s.mw.len(), 1, "{kind}");
        }
    }

    #[test]
    fn explicit_sweep_is_kept() {
        let a = parse(&["--kind", "hahn", "--sweep-stop", "5", "--sweep-points", "7"]);
        assert_eq!(a.sweep_stop, Some(5.0));
        assert_eq!(a.sweep_points, Some(7));
        assert_eq!(a.rabi_mhz, Some(10.0));
    }

    #[test]
    fn hahn_sweep_reaches_twice_t2() {
        let a = parse(&["--kind", "hahn"]);
        // one π pulse: 2τ_max = 2·T₂(1) = 0.92 ms
        assert!((a.sweep_stop.unwrap() - 460.0).abs() < 1e-9);
    }
}
