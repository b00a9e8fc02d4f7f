use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use qemit::survey::{
    amorphization_fit, detect_ple_peaks, inhomogeneous_fit, occurrence_stats, read_damage_csv, read_pl_map_csv,
    read_ple_csv, rescale_pl_maps, write_pl_map_csv, PeakDetectionOptions, PlePeak,
};
use qemit::Exec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::parse_index_list;
use crate::output::{create, envelope, open, require, write_json, Analysis, Status, Table};

#[derive(Subcommand, Debug)]
pub enum SurveyCommand {
    /// Detect PLE lines; writes one JSON file per pillar.
    Peaks(PeaksArgs),
    /// Per-pillar line counts above a threshold and the exceedance curve.
    Occurrence(OccurrenceArgs),
    /// Gaussian fit to the distribution of line centers.
    Inhomogeneous(InhomogeneousArgs),
    /// Rescale a before/after pair of PL maps to a common baseline.
    Plmap(PlmapArgs),
    /// Amorphization curve from CSV `energy_uj,exposed,damaged`.
    Damage(DamageArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PeaksArgs {
    /// PLE CSV `pillar_id,frequency_ghz,rate_khz`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Directory for the per-pillar JSON files.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.03)]
    pub min_amplitude_khz: f64,
    #[arg(long, default_value_t = 2.0)]
    pub min_separation_ghz: f64,
    #[arg(long, default_value_t = 50.0)]
    pub fwhm_min_mhz: f64,
    #[arg(long, default_value_t = 3000.0)]
    pub fwhm_max_mhz: f64,
    /// Fitted amplitude over its standard error.
    #[arg(long, default_value_t = 6.0)]
    pub min_significance: f64,
    /// Candidate prominence over the robust noise.
    #[arg(long, default_value_t = 3.0)]
    pub prominence_factor: f64,
}

fn file_stem(pillar_id: &str) -> String {
    pillar_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn peaks(a: &PeaksArgs) -> Result<Status> {
    let dir = require(&a.output, "output")?;
    let spectra = read_ple_csv(open(require(&a.input, "input")?)?)?;
    let opts = PeakDetectionOptions {
        min_amplitude_khz: a.min_amplitude_khz,
        min_separation_ghz: a.min_separation_ghz,
        fwhm_min_mhz: a.fwhm_min_mhz,
        fwhm_max_mhz: a.fwhm_max_mhz,
        min_significance: a.min_significance,
        prominence_factor: a.prominence_factor,
        ..PeakDetectionOptions::default()
    };
    let found = Exec::default().map_slice(&spectra, |s| detect_ple_peaks(s, &opts));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut stems = BTreeMap::new();
    for (s, peaks) in spectra.iter().zip(found) {
        let stem = file_stem(&s.pillar_id);
        if let Some(other) = stems.insert(stem.clone(), s.pillar_id.clone()) {
            bail!("pillars `{other}` and `{}` map to the same file name", s.pillar_id);
        }
        let result = json!({ "pillar_id": s.pillar_id, "peaks": peaks? });
        write_json(Some(&dir.join(format!("{stem}.json"))), &envelope("survey peaks", a, result)?)?;
    }
    Ok(Status::Done)
}

/// Reads every `*.json` peak file in `dir`, keyed by pillar.
fn read_peak_dir(dir: &Path) -> Result<BTreeMap<String, Vec<PlePeak>>> {
    #[derive(Deserialize)]
    struct PillarPeaks {
        pillar_id: String,
        peaks: Vec<PlePeak>,
    }
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    for path in paths {
        let v: Value = serde_json::from_reader(open(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        let body = v.get("result").cloned().unwrap_or(v);
        let p: PillarPeaks =
            serde_json::from_value(body).with_context(|| format!("{} is not a peak file", path.display()))?;
        if out.insert(p.pillar_id.clone(), p.peaks).is_some() {
            bail!("pillar `{}` appears twice", p.pillar_id);
        }
    }
    Ok(out)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OccurrenceArgs {
    /// Directory of peak files written by `survey peaks`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    pub threshold_khz: f64,
    /// Cohort name carried into the output.
    #[arg(long, default_value = "")]
    pub label: String,
}

pub fn occurrence(a: &OccurrenceArgs) -> Result<Analysis> {
    let by_pillar = read_peak_dir(require(&a.input, "input")?)?;
    let stats = occurrence_stats(&by_pillar, a.threshold_khz)?;
    let mut hist = Table::new("occurrence", &["peaks_above_threshold", "pillars", "fraction"]);
    for (k, (&h, &f)) in stats.histogram.iter().zip(&stats.fractions).enumerate() {
        hist.rows.push(vec![k as f64, h as f64, f]);
    }
    let mut exceed = Table::new("exceedance", &["threshold_khz", "peaks", "fraction_of_peaks"]);
    for p in &stats.exceedance {
        exceed.rows.push(vec![p.threshold_khz, p.peaks as f64, p.fraction_of_peaks]);
    }
    Ok(Analysis { result: json!({ "label": a.label, "stats": stats }), converged: true, tables: vec![hist, exceed] })
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct InhomogeneousArgs {
    /// Directory of peak files written by `survey peaks`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub bin_width_ghz: f64,
    /// Lines below this amplitude are left out [kHz].
    #[arg(long, default_value_t = 0.0)]
    pub threshold_khz: f64,
}

pub fn inhomogeneous(a: &InhomogeneousArgs) -> Result<Analysis> {
    let by_pillar = read_peak_dir(require(&a.input, "input")?)?;
    let centers: Vec<f64> =
        by_pillar.values().flatten().filter(|p| p.amplitude_khz >= a.threshold_khz).map(|p| p.center_ghz).collect();
    let f = inhomogeneous_fit(&centers, a.bin_width_ghz)?;
    let (amp, center, fwhm) = (f.fit.value("amplitude"), f.fit.value("center"), f.fit.value("fwhm"));
    let mut table = Table::new("inhomogeneous", &["center_ghz", "count", "model"]);
    for &(x, n) in &f.bins {
        let model = amp * (-4.0 * std::f64::consts::LN_2 * ((x - center) / fwhm).powi(2)).exp();
        table.rows.push(vec![x, n as f64, model]);
    }
    Ok(Analysis {
        converged: f.fit.converged,
        result: json!({ "fit": f.fit.to_json(), "bin_width_ghz": f.bin_width_ghz, "bins": f.bins, "lines": centers.len() }),
        tables: vec![table],
    })
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlmapArgs {
    /// Map CSV with header `y_um\x_um,x0,x1,...`.
    #[arg(long)]
    pub before: Option<PathBuf>,
    #[arg(long)]
    pub after: Option<PathBuf>,
    /// Rows over the reference bulk region, e.g. `0:2`.
    #[arg(long, default_value = "0")]
    pub baseline_rows: String,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Where to write the rescaled before map.
    #[arg(long)]
    pub before_out: Option<PathBuf>,
    #[arg(long)]
    pub after_out: Option<PathBuf>,
}

pub fn plmap(a: &PlmapArgs) -> Result<Analysis> {
    let rows: Vec<usize> =
        parse_index_list(&a.baseline_rows)?.into_iter().map(usize::try_from).collect::<Result<_, _>>()?;
    let mut before = read_pl_map_csv(open(require(&a.before, "before")?)?)?;
    let mut after = read_pl_map_csv(open(require(&a.after, "after")?)?)?;
    before.baseline_rows = rows.clone();
    after.baseline_rows = rows;
    let r = rescale_pl_maps(&before, &after)?;
    if let Some(p) = &a.before_out {
        write_pl_map_csv(create(p)?, &r.before)?;
    }
    if let Some(p) = &a.after_out {
        write_pl_map_csv(create(p)?, &r.after)?;
    }
    let mut table = Table::new("plmap_rows", &["y_um", "before_mean", "after_mean"]);
    for ((y, b), c) in r.before.y_um.iter().zip(&r.before.counts).zip(&r.after.counts) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        table.rows.push(vec![*y, mean(b), mean(c)]);
    }
    Ok(Analysis {
        result: json!({
            "mu_before": r.mu_before, "mu_after": r.mu_after, "alpha": r.alpha,
            "beta_before": r.beta_before, "beta_after": r.beta_after,
        }),
        converged: true,
        tables: vec![table],
    })
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DamageArgs {
    /// CSV `energy_uj,exposed,damaged`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// JSON result; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn damage(a: &DamageArgs) -> Result<Analysis> {
    let table_in = read_damage_csv(open(require(&a.input, "input")?)?)?;
    let fit = amorphization_fit(&table_in)?;
    let mut table = Table::new("damage", &["energy_uj", "observed", "predicted"]);
    for ((e, o), p) in fit.energies_uj.iter().zip(&fit.observed).zip(&fit.predicted) {
        table.rows.push(vec![*e, *o, *p]);
    }
    let converged = fit.fit.as_ref().is_none_or(|f| f.converged);
    Ok(Analysis { result: serde_json::to_value(&fit)?, converged, tables: vec![table] })
}
