use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::SurveyError;

/// 2D PL scan. `counts[i][j]` is at `(x_um[j], y_um[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlMap {
    pub x_um: Vec<f64>,
    pub y_um: Vec<f64>,
    /// Count rate [kHz].
    pub counts: Vec<Vec<f64>>,
    /// Rows over a reference bulk region.
    #[serde(default)]
    pub baseline_rows: Vec<usize>,
}

impl PlMap {
    pub fn validate(&self) -> Result<(), SurveyError> {
        if self.counts.len() != self.y_um.len() || self.counts.iter().any(|r| r.len() != self.x_um.len()) {
            return Err(SurveyError::InvalidInput("map is not rectangular over its axes".into()));
        }
        if self.counts.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(SurveyError::InvalidInput("counts must be finite and non-negative".into()));
        }
        if self.baseline_rows.is_empty() || self.baseline_rows.iter().any(|&r| r >= self.counts.len()) {
            return Err(SurveyError::InvalidInput("baseline rows must be non-empty and inside the map".into()));
        }
        Ok(())
    }

    pub fn baseline_mean(&self) -> f64 {
        let row_len = self.x_um.len() as f64;
        let total: f64 = self.baseline_rows.iter().map(|&r| self.counts[r].iter().sum::<f64>()).sum();
        total / (row_len * self.baseline_rows.len() as f64)
    }

    fn scaled(&self, factor: f64) -> PlMap {
        PlMap { counts: self.counts.iter().map(|r| r.iter().map(|c| c * factor).collect()).collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledMaps {
    pub before: PlMap,
    pub after: PlMap,
    pub mu_before: f64,
    pub mu_after: f64,
    /// `√(μ_before·μ_after)`.
    pub alpha: f64,
    /// Factor applied to the before map, `α/μ_before`.
    pub beta_before: f64,
    pub beta_after: f64,
}

/// Brings two scans of the same region onto a common baseline at the
/// geometric mean of their baseline-row means.
pub fn rescale_pl_maps(before: &PlMap, after: &PlMap) -> Result<RescaledMaps, SurveyError> {
    before.validate()?;
    after.validate()?;
    let mu_before = before.baseline_mean();
    let mu_after = after.baseline_mean();
    if !(mu_before > 0.0) {
        return Err(SurveyError::ZeroBaseline("before"));
    }
    if !(mu_after > 0.0) {
        return Err(SurveyError::ZeroBaseline("after"));
    }
    let alpha = (mu_before * mu_after).sqrt();
    // the ratio form keeps β_before·β_after = 1 to rounding
    let beta_before = (mu_after / mu_before).sqrt();
    let beta_after = (mu_before / mu_after).sqrt();
    Ok(RescaledMaps {
        before: before.scaled(beta_before),
        after: after.scaled(beta_after),
        mu_before,
        mu_after,
        alpha,
        beta_before,
        beta_after,
    })
}

/// Header `y_um\x_um,x₀,x₁,…`, then one `y,c₀,c₁,…` row per line.
pub fn write_pl_map_csv<W: Write>(mut writer: W, map: &PlMap) -> Result<(), SurveyError> {
    let io = |e: std::io::Error| SurveyError::Csv(e.to_string());
    let xs: Vec<String> = map.x_um.iter().map(|x| x.to_string()).collect();
    writeln!(writer, "y_um\\x_um,{}", xs.join(",")).map_err(io)?;
    for (y, row) in map.y_um.iter().zip(&map.counts) {
        let cs: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(writer, "{y},{}", cs.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Reads a map written by [`write_pl_map_csv`]; `baseline_rows` starts
/// empty.
pub fn read_pl_map_csv<R: Read>(reader: R) -> Result<PlMap, SurveyError> {
    let parse = |s: &str, line: usize| {
        s.trim().parse::<f64>().map_err(|e| SurveyError::Csv(format!("line {line}: `{s}`: {e}")))
    };
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| SurveyError::Csv("empty map file".into()))?
        .map_err(|e| SurveyError::Csv(e.to_string()))?;
    let x_um = header.split(',').skip(1).map(|s| parse(s, 1)).collect::<Result<Vec<_>, _>>()?;
    let (mut y_um, mut counts) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| SurveyError::Csv(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        y_um.push(parse(fields.next().unwrap_or(""), k + 2)?);
        counts.push(fields.map(|s| parse(s, k + 2)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(PlMap { x_um, y_um, counts, baseline_rows: Vec::new() })
}
