use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{lorentzian_response, poisson, EmitterModel, FrequencyPrior, PhotoError};
use crate::grid::OrderedF64;
use crate::{Exec, SeedTree};

/// One check/probe repetition.
///
/// `delay_ms` is the signed time of the probe block relative to the check
/// block (negative: probe came first). `probe_detuning_mhz` is the probe
/// laser frequency, in the same frame as the check laser and the prior, when
/// the probe was swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckProbeRecord {
    pub rep: u64,
    pub delay_ms: f64,
    pub check_counts: u64,
    pub probe_counts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_detuning_mhz: Option<f64>,
}

/// Zero-delay check-probe experiment on an emitter whose frequency is drawn
/// afresh from `prior` every repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckProbeSim {
    pub emitter: EmitterModel,
    /// Check laser frequency [MHz].
    pub f1: f64,
    pub prior: FrequencyPrior,
    /// Probe laser frequencies [MHz], cycled over repetitions. Empty means
    /// the probe sits on the check laser.
    pub probe_detunings: Vec<f64>,
}

pub fn simulate_check_probe(
    sim: &CheckProbeSim,
    block_pairs: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<CheckProbeRecord>, PhotoError> {
    if block_pairs < 1 {
        return Err(PhotoError::InvalidParameter("block_pairs must be >= 1".into()));
    }
    if !(sim.emitter.gamma > 0.0) || !(sim.emitter.c0 >= 0.0) {
        return Err(PhotoError::InvalidParameter("need gamma > 0 and c0 >= 0".into()));
    }
    if let FrequencyPrior::Flat = sim.prior {
        return Err(PhotoError::ImproperPrior);
    }
    let tree = SeedTree::new(seed).child("check-probe");
    let swept = !sim.probe_detunings.is_empty();
    let records = exec.map_range(block_pairs, |rep| {
        let mut rng = tree.stream(rep as u64);
        let f_emitter = sim.prior.sample(&mut rng)?;
        let probe_at = if swept { sim.probe_detunings[rep % sim.probe_detunings.len()] } else { sim.f1 };
        let (g, c0) = (sim.emitter.gamma, sim.emitter.c0);
        let check_counts = poisson(&mut rng, lorentzian_response(f_emitter - sim.f1, g, c0));
        let probe_counts = poisson(&mut rng, lorentzian_response(f_emitter - probe_at, g, c0));
        Ok(CheckProbeRecord {
            rep: rep as u64,
            delay_ms: 0.0,
            check_counts,
            probe_counts,
            probe_detuning_mhz: swept.then_some(probe_at),
        })
    });
    records.into_iter().collect()
}

/// Mean probe counts at one probe frequency after post-selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub detuning: f64,
    pub mean: f64,
    /// Standard error of the mean.
    pub sem: f64,
    pub n: usize,
}

pub(crate) fn mean_sem(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let sem = if var > 0.0 {
        (var / n as f64).sqrt()
    } else {
        // no spread observed: fall back to the Poisson floor
        (mean.max(1.0) / n as f64).sqrt()
    };
    (mean, sem, n)
}

/// Probe spectrum from repetitions whose check counts reach `threshold`,
/// grouped by probe frequency in ascending order.
pub fn postselected_spectrum(records: &[CheckProbeRecord], threshold: u64) -> Result<Vec<SpectrumPoint>, PhotoError> {
    let mut groups: BTreeMap<OrderedF64, Vec<f64>> = BTreeMap::new();
    for r in records {
        let f = r
            .probe_detuning_mhz
            .ok_or_else(|| PhotoError::InvalidParameter(format!("record {} has no probe frequency", r.rep)))?;
        let entry = groups.entry(OrderedF64(f)).or_default();
        if r.check_counts >= threshold {
            entry.push(r.probe_counts as f64);
        }
    }
    Ok(groups
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(f, v)| {
            let (mean, sem, n) = mean_sem(v.into_iter());
            SpectrumPoint { detuning: f.0, mean, sem, n }
        })
        .collect())
}

/// Writes records as CSV. The `probe_detuning_mhz` column is present only
/// when some record carries a probe frequency.
pub fn write_check_probe_csv<W: Write>(writer: W, records: &[CheckProbeRecord]) -> Result<(), PhotoError> {
    let swept = records.iter().any(|r| r.probe_detuning_mhz.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["rep", "delay_ms", "check_counts", "probe_counts"];
    if swept {
        header.push("probe_detuning_mhz");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row =
            vec![r.rep.to_string(), r.delay_ms.to_string(), r.check_counts.to_string(), r.probe_counts.to_string()];
        if swept {
            row.push(r.probe_detuning_mhz.map(|f| f.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| PhotoError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_check_probe_csv<R: Read>(reader: R) -> Result<Vec<CheckProbeRecord>, PhotoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CheckProbeRecord = row?;
        if !r.delay_ms.is_finite() {
            return Err(PhotoError::Csv(format!("record {}: delay is not finite", r.rep)));
        }
        out.push(r);
    }
    Ok(out)
}
