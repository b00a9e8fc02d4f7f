use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SpinError;
use crate::grid::OrderedF64;

/// Counts from one pass through the sequence at one sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSweepRecord {
    pub sweep_value: f64,
    pub rep: u64,
    pub check: u64,
    pub norm1: u64,
    pub norm0: u64,
    pub ro: u64,
}

/// Normalized readout at one sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutPoint {
    pub sweep_value: f64,
    pub r: f64,
    pub sigma_r: f64,
    /// Mean norm1 (bright reference) counts.
    pub a: f64,
    /// Mean norm0 (dark reference) counts.
    pub b: f64,
    /// Mean readout counts.
    pub c: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub sigma_c: f64,
    /// Repetitions that passed the check threshold.
    pub n: usize,
}

/// `R = (C - B) / (A - B)` and its first-order uncertainty
/// `σ_R² = (C-B)²/(A-B)⁴ σ_A² + (A-C)²/(A-B)⁴ σ_B² + σ_C²/(A-B)²`.
pub fn normalized_readout(a: f64, b: f64, c: f64, sigma_a: f64, sigma_b: f64, sigma_c: f64) -> Option<(f64, f64)> {
    let d = a - b;
    if d.abs() <= f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
        return None;
    }
    let r = (c - b) / d;
    let d2 = d * d;
    let var = (c - b).powi(2) / (d2 * d2) * sigma_a * sigma_a
        + (a - c).powi(2) / (d2 * d2) * sigma_b * sigma_b
        + sigma_c * sigma_c / d2;
    Some((r, var.sqrt()))
}

/// Mean and standard error (unbiased sample deviation over √n).
fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Post-selects repetitions whose check counts reach `check_threshold`
/// and normalizes readout against the two reference blocks, per sweep
/// value in ascending order.
pub fn normalize_readout(records: &[SpinSweepRecord], check_threshold: u64) -> Result<Vec<ReadoutPoint>, SpinError> {
    let mut groups: BTreeMap<OrderedF64, Vec<&SpinSweepRecord>> = BTreeMap::new();
    for r in records {
        let g = groups.entry(OrderedF64(r.sweep_value)).or_default();
        if r.check >= check_threshold {
            g.push(r);
        }
    }
    groups
        .into_iter()
        .map(|(sv, recs)| {
            let sweep_value = sv.0;
            if recs.len() < 2 {
                return Err(SpinError::InsufficientRepetitions { sweep_value, passed: recs.len() });
            }
            let col = |f: fn(&SpinSweepRecord) -> u64| recs.iter().map(|r| f(r) as f64).collect::<Vec<_>>();
            let (a, sigma_a) = mean_and_error(&col(|r| r.norm1));
            let (b, sigma_b) = mean_and_error(&col(|r| r.norm0));
            let (c, sigma_c) = mean_and_error(&col(|r| r.ro));
            let (r, sigma_r) = normalized_readout(a, b, c, sigma_a, sigma_b, sigma_c)
                .ok_or(SpinError::DegenerateNormalization { sweep_value })?;
            Ok(ReadoutPoint { sweep_value, r, sigma_r, a, b, c, sigma_a, sigma_b, sigma_c, n: recs.len() })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(writer: W, records: &[SpinSweepRecord]) -> Result<(), SpinError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| SpinError::Csv(e.to_string()))?;
    }
    if records.is_empty() {
        w.write_record(["sweep_value", "rep", "check", "norm1", "norm0", "ro"])
            .map_err(|e| SpinError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SpinError::Csv(e.to_string()))
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SpinSweepRecord>, SpinError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: SpinSweepRecord = row.map_err(|e| SpinError::Csv(e.to_string()))?;
        if !r.sweep_value.is_finite() {
            return Err(SpinError::Csv(format!("rep {}: sweep value is not finite", r.rep)));
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        assert_eq!(normalized_readout(1.0, 0.0, 0.5, 0.0, 0.0, 0.0), Some((0.5, 0.0)));
        assert_eq!(normalized_readout(10.0, 2.0, 2.0, 0.3, 0.2, 0.25).unwrap().0, 0.0);
        assert_eq!(normalized_readout(10.0, 2.0, 10.0, 0.3, 0.2, 0.25).unwrap().0, 1.0);
        assert!(normalized_readout(3.0, 3.0, 1.0, 0.1, 0.1, 0.1).is_none());
    }

    fn rec(sv: f64, rep: u64, check: u64, a: u64, b: u64, c: u64) -> SpinSweepRecord {
        SpinSweepRecord { sweep_value: sv, rep, check, norm1: a, norm0: b, ro: c }
    }

    #[test]
    fn hand_computed_point() {
        let recs = [rec(1.0, 0, 5, 10, 2, 6), rec(1.0, 1, 5, 12, 0, 8), rec(1.0, 2, 0, 99, 99, 99)];
        let p = normalize_readout(&recs, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].n, 2);
        assert_eq!((p[0].a, p[0].b, p[0].c), (11.0, 1.0, 7.0));
        assert!((p[0].r - 0.6).abs() < 1e-15);
        // sample sd of {10,12} is √2, standard error 1
        assert!((p[0].sigma_a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_passing_reps() {
        let recs = [rec(1.0, 0, 5, 10, 2, 6), rec(1.0, 1, 0, 12, 0, 8)];
        assert_eq!(
            normalize_readout(&recs, 1).unwrap_err(),
            SpinError::InsufficientRepetitions { sweep_value: 1.0, passed: 1 }
        );
    }

    #[test]
    fn degenerate_references() {
        let recs = [rec(0.5, 0, 5, 3, 3, 6), rec(0.5, 1, 5, 3, 3, 8)];
        assert_eq!(normalize_readout(&recs, 1).unwrap_err(), SpinError::DegenerateNormalization { sweep_value: 0.5 });
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec(0.25, 0, 5, 10, 2, 6), rec(-1.5, 1, 0, 12, 0, 8)];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &recs).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("sweep_value,rep,check,norm1,norm0,ro\n"));
        assert_eq!(read_sweep_csv(&buf[..]).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_repetitions(checks in proptest::collection::vec(0u64..20, 4..60), t in 0u64..15) {
            let recs: Vec<_> = checks.iter().enumerate().map(|(i, &c)| rec(0.0, i as u64, c, 10 + (i % 3) as u64, 1, 5)).collect();
            let count = |thr: u64| normalize_readout(&recs, thr).map(|p| p[0].n).unwrap_or_else(|e| match e {
                SpinError::InsufficientRepetitions { passed, .. } => passed,
                other => panic!("{other}"),
            });
            prop_assert!(count(t + 1) <= count(t));
        }
    }
}
