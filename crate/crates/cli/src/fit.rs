use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use qemit::photophysics::{
    checkprobe_spectrum_with_prior, fit_checkprobe_linewidth, fit_spectral_diffusion, postselected_spectrum,
    read_check_probe_csv, saturation_curve, saturation_fit, DiffusionFitOptions, DiffusionModel, LinewidthFitOptions,
    ThresholdSpectrum,
};
use qemit::spin::{
    desr_fit, desr_model, normalize_readout, rabi_chevron, rabi_fit, ramsey_fit, ramsey_model, read_sweep_csv,
    stretched_decay, stretched_decay_fit, t2_power_law, t2_power_law_fit, ReadoutPoint,
};
use qemit::FitResult;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::parse_index_list;
use crate::output::{open, require, Analysis, Table};
use crate::sim::PriorArgs;

#[derive(Subcommand, Debug)]
pub enum FitCommand {
    /// Spectral diffusion and ionization rates from delayed check-probe data.
    Diffusion(DiffusionArgs),
    /// Global linewidth fit to threshold-swept check-probe spectra.
    CpPle(CpPleArgs),
    /// Saturation curve from CSV `power_uw,counts_khz`.
    Saturation(SaturationArgs),
    /// Spin-sweep fits.
    #[command(subcommand)]
    Spin(SpinFitCommand),
}

#[derive(Subcommand, Debug)]
pub enum SpinFitCommand {
    /// Rabi oscillation versus burst length.
    Rabi(RabiArgs),
    /// Two-line DESR spectrum.
    Desr(SweepFitArgs),
    /// Two-frequency Ramsey fringes.
    Ramsey(RamseyArgs),
    /// Stretched-exponential Hahn or decoupling decay.
    Decay(DecayArgs),
    /// T₂ = β·N^α from CSV `n_pulses,t2_ms[,t2_sigma_ms]`; rows with N < 2 are set aside.
    Scaling(ScalingArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CpPleArgs {
    /// Check-probe CSV with a probe_detuning_mhz column.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Check thresholds, e.g. `1:17` or `1,4,8,12`.
    #[arg(long, default_value = "1:12")]
    pub thresholds: String,
    #[arg(long, default_value_t = 26.0)]
    pub gamma_lifetime_mhz: f64,
    /// Check laser frequency [MHz].
    #[arg(long, default_value_t = 0.0)]
    pub f1_mhz: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
}

pub fn cp_ple(a: &CpPleArgs) -> Result<Analysis> {
    let records = read_check_probe_csv(open(require(&a.input, "input")?)?)?;
    let mut spectra = Vec::new();
    for t in parse_index_list(&a.thresholds)? {
        let threshold = u32::try_from(t)?;
        spectra.push(ThresholdSpectrum { threshold, points: postselected_spectrum(&records, t)? });
    }
    let prior = a.prior.prior();
    let opts = LinewidthFitOptions { prior, f1: a.f1_mhz, init: None };
    let fit = fit_checkprobe_linewidth(&spectra, a.gamma_lifetime_mhz, &opts)?;
    let (gamma, c0) = (fit.fit.value("gamma"), fit.fit.value("c0"));
    let mut table = Table::new("checkprobe_spectra", &["threshold", "detuning_mhz", "mean", "sem", "n", "model"]);
    for s in spectra.iter().filter(|s| !s.points.is_empty()) {
        let grid: Vec<f64> = s.points.iter().map(|p| p.detuning).collect();
        let model = checkprobe_spectrum_with_prior(&grid, s.threshold, gamma, c0, a.f1_mhz, &prior)?;
        for (p, m) in s.points.iter().zip(model) {
            table.rows.push(vec![s.threshold as f64, p.detuning, p.mean, p.sem, p.n as f64, m]);
        }
    }
    Ok(Analysis {
        converged: fit.fit.converged,
        result: json!({ "fit": fit.fit.to_json(), "ratio": fit.ratio, "ratio_sigma": fit.ratio_sigma, "spectra": spectra }),
        tables: vec![table],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionModelArg {
    /// Diffusion on both sides plus ionization for future delays.
    NoRecapture,
    DiffusionOnly,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DiffusionArgs {
    /// Check-probe CSV with negative and positive delays.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threshold: u64,
    #[arg(long, value_enum, default_value_t = DiffusionModelArg::NoRecapture)]
    pub model: DiffusionModelArg,
    /// Linewidth that converts the fitted γ_d/Γ into a rate [MHz].
    #[arg(long, default_value_t = 36.0)]
    pub gamma_assumed_mhz: f64,
    #[arg(long, default_value_t = 26.0)]
    pub gamma_lifetime_mhz: f64,
    /// γ_d band over Γ from ratio-low to ratio-high times the lifetime limit.
    #[arg(long, default_value_t = 1.0)]
    pub ratio_low: f64,
    #[arg(long, default_value_t = 3.0)]
    pub ratio_high: f64,
}

pub fn diffusion(a: &DiffusionArgs) -> Result<Analysis> {
    let records = read_check_probe_csv(open(require(&a.input, "input")?)?)?;
    let opts = DiffusionFitOptions {
        threshold: a.threshold,
        model: match a.model {
            DiffusionModelArg::NoRecapture => DiffusionModel::NoRecapture,
            DiffusionModelArg::DiffusionOnly => DiffusionModel::DiffusionOnly,
        },
        gamma_assumed: a.gamma_assumed_mhz,
        gamma_lifetime: a.gamma_lifetime_mhz,
        ratio_band: (a.ratio_low, a.ratio_high),
    };
    let fit = fit_spectral_diffusion(&records, &opts)?;
    let (c0, r, gi) = (fit.fit.value("c0"), fit.fit.value("gamma_d_over_gamma"), fit.fit.value("gamma_i"));
    let mut table = Table::new("diffusion_bins", &["delay_ms", "mean", "sem", "n", "model"]);
    for b in &fit.bins {
        let model = qemit::photophysics::no_recapture_model(b.delay_ms, r, gi, 1.0, c0);
        table.rows.push(vec![b.delay_ms, b.mean, b.sem, b.n as f64, model]);
    }
    Ok(Analysis { converged: fit.fit.converged, result: serde_json::to_value(&fit)?, tables: vec![table] })
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SaturationArgs {
    /// CSV `power_uw,counts_khz`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Deserialize)]
struct SaturationRow {
    power_uw: f64,
    counts_khz: f64,
}

pub fn saturation(a: &SaturationArgs) -> Result<Analysis> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(require(&a.input, "input")?)?);
    let rows: Vec<SaturationRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let p: Vec<f64> = rows.iter().map(|r| r.power_uw).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.counts_khz).collect();
    let fit = saturation_fit(&p, &c)?;
    let (fa, fb, fp) = (fit.fit.value("a"), fit.fit.value("b"), fit.fit.value("p_sat"));
    let mut table = Table::new("saturation", &["power_uw", "counts_khz", "model"]);
    for (&pi, &ci) in p.iter().zip(&c) {
        table.rows.push(vec![pi, ci, saturation_curve(pi, fa, fb, fp)]);
    }
    Ok(Analysis { converged: fit.fit.converged, result: serde_json::to_value(&fit)?, tables: vec![table] })
}

/// Input shared by the fits on spin-sweep records.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepFitArgs {
    /// Sweep CSV `sweep_value,rep,check,norm1,norm0,ro`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Repetitions with fewer check counts are discarded.
    #[arg(long, default_value_t = 10)]
    pub check_threshold: u64,
}

impl SweepFitArgs {
    fn readout(&self) -> Result<Vec<ReadoutPoint>> {
        let records = read_sweep_csv(open(require(&self.input, "input")?)?)?;
        Ok(normalize_readout(&records, self.check_threshold)?)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RabiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepFitArgs,
    /// Hyperfine splitting held fixed in the chevron [MHz].
    #[arg(long, default_value_t = 2.08)]
    pub f_hf_mhz: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RamseyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepFitArgs,
    /// 1 fits a single damped cosine, 2 the hyperfine pair.
    #[arg(long, default_value_t = 2)]
    pub components: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepFitArgs,
    /// Refocusing π pulses N; the swept τ [µs] maps to 2Nτ [ms].
    #[arg(long, default_value_t = 1)]
    pub n_pulses: usize,
}

fn columns(points: &[ReadoutPoint]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        points.iter().map(|p| p.sweep_value).collect(),
        points.iter().map(|p| p.r).collect(),
        points.iter().map(|p| p.sigma_r).collect(),
    )
}

fn readout_table(name: &str, x: &[f64], points: &[ReadoutPoint], model: impl Fn(f64) -> f64) -> Table {
    let mut t = Table::new(name, &["x", "r", "sigma_r", "model"]);
    for (&xi, p) in x.iter().zip(points) {
        t.rows.push(vec![xi, p.r, p.sigma_r, model(xi)]);
    }
    t
}

fn spin_analysis(fit: &FitResult, extra: serde_json::Value, points: &[ReadoutPoint], table: Table) -> Result<Analysis> {
    let mut result = json!({ "fit": fit.to_json(), "points": points });
    if let (Some(obj), serde_json::Value::Object(more)) = (result.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(Analysis { converged: fit.converged, result, tables: vec![table] })
}

pub fn rabi(a: &RabiArgs) -> Result<Analysis> {
    let points = a.sweep.readout()?;
    let (t, r, s) = columns(&points);
    let fit = rabi_fit(&t, &r, Some(&s), a.f_hf_mhz)?;
    let p = fit.values();
    let table = readout_table("rabi", &t, &points, |x| p[0] + p[1] * rabi_chevron(x, p[3], p[2], a.f_hf_mhz));
    spin_analysis(&fit, json!({}), &points, table)
}

pub fn desr(a: &SweepFitArgs) -> Result<Analysis> {
    let points = a.readout()?;
    let (f, r, s) = columns(&points);
    let d = desr_fit(&f, &r, Some(&s))?;
    let p = d.fit.values();
    let table = readout_table("desr", &f, &points, |x| desr_model(x, p[0], p[1], p[2], p[3], p[4], p[5]));
    let extra = json!({
        "f_hf": d.f_hf, "f_hf_sigma": d.f_hf_sigma,
        "t2_star": d.t2_star, "t2_star_sigma": d.t2_star_sigma,
        "resolved": d.resolved,
    });
    spin_analysis(&d.fit, extra, &points, table)
}

pub fn ramsey(a: &RamseyArgs) -> Result<Analysis> {
    let points = a.sweep.readout()?;
    let (tau, r, s) = columns(&points);
    let rf = ramsey_fit(&tau, &r, Some(&s), a.components)?;
    let p = rf.fit.values();
    let table =
        readout_table("ramsey", &tau, &points, |x| ramsey_model(x, p[0], [p[1], p[2]], [p[3], p[4]], p[5], p[6], p[7]));
    spin_analysis(&rf.fit, json!({ "aliased": rf.aliased }), &points, table)
}

pub fn decay(a: &DecayArgs) -> Result<Analysis> {
    if a.n_pulses == 0 {
        bail!("--n-pulses must be at least 1");
    }
    let points = a.sweep.readout()?;
    let (tau, r, s) = columns(&points);
    let t_ms: Vec<f64> = tau.iter().map(|x| 2.0 * a.n_pulses as f64 * x * 1e-3).collect();
    let fit = stretched_decay_fit(&t_ms, &r, Some(&s))?;
    let p = fit.values();
    let table = readout_table("decay", &t_ms, &points, |x| stretched_decay(x, p[0], p[1], p[2], p[3]));
    spin_analysis(&fit, json!({ "t2_ms": p[2], "t2_sigma_ms": fit.sigma("t2") }), &points, table)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScalingArgs {
    /// CSV `n_pulses,t2_ms[,t2_sigma_ms]`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ScalingRow {
    n_pulses: f64,
    t2_ms: f64,
    #[serde(default)]
    t2_sigma_ms: Option<f64>,
}

pub fn scaling(a: &ScalingArgs) -> Result<Analysis> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(require(&a.input, "input")?)?);
    let rows: Vec<ScalingRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    // Hahn (N = 1) sits off the decoupling law
    let (kept, excluded): (Vec<ScalingRow>, Vec<ScalingRow>) = rows.into_iter().partition(|r| r.n_pulses >= 2.0);
    let n: Vec<f64> = kept.iter().map(|r| r.n_pulses).collect();
    let t2: Vec<f64> = kept.iter().map(|r| r.t2_ms).collect();
    let sigma: Option<Vec<f64>> = kept.iter().map(|r| r.t2_sigma_ms).collect();
    let fit = t2_power_law_fit(&n, &t2, sigma.as_deref())?;
    let (alpha, beta) = (fit.value("alpha"), fit.value("beta"));
    let mut table = Table::new("t2_scaling", &["n_pulses", "t2_ms", "t2_sigma_ms", "model"]);
    for r in &kept {
        table.rows.push(vec![
            r.n_pulses,
            r.t2_ms,
            r.t2_sigma_ms.unwrap_or(f64::NAN),
            t2_power_law(r.n_pulses, alpha, beta),
        ]);
    }
    Ok(Analysis {
        converged: fit.converged,
        result: json!({ "fit": fit.to_json(), "used": kept, "excluded": excluded }),
        tables: vec![table],
    })
}
