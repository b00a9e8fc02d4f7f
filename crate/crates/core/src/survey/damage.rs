use std::io::Read;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::SurveyError;
use crate::optim::{FitResult, ParamEstimate};

/// Largest logistic slope [1/µJ]; separated tables are pinned here.
pub const MAX_SLOPE_PER_UJ: f64 = 1e4;

const UNRESOLVABLE_BELOW: f64 = 0.025;
const DETERMINISTIC_ABOVE: f64 = 0.975;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageRow {
    pub energy_uj: f64,
    pub exposed: u32,
    pub damaged: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageTable {
    pub rows: Vec<DamageRow>,
}

impl DamageTable {
    pub fn validate(&self) -> Result<(), SurveyError> {
        for r in &self.rows {
            if !(r.energy_uj > 0.0) || !r.energy_uj.is_finite() {
                return Err(SurveyError::InvalidInput(format!("pulse energy {} must be positive", r.energy_uj)));
            }
            if r.exposed == 0 || r.damaged > r.exposed {
                return Err(SurveyError::InvalidInput(format!(
                    "{} damaged of {} exposed at {} µJ",
                    r.damaged, r.exposed, r.energy_uj
                )));
            }
        }
        Ok(())
    }

    /// Rows sorted by energy with repeated energies pooled.
    fn pooled(&self) -> Vec<(f64, f64, f64)> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.energy_uj.total_cmp(&b.energy_uj));
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for r in rows {
            match out.last_mut() {
                Some(last) if last.0 == r.energy_uj => {
                    last.1 += r.exposed as f64;
                    last.2 += r.damaged as f64;
                }
                _ => out.push((r.energy_uj, r.exposed as f64, r.damaged as f64)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageRegime {
    Unresolvable,
    Probabilistic,
    Deterministic,
}

impl DamageRegime {
    fn of(p: f64) -> Self {
        if p < UNRESOLVABLE_BELOW {
            DamageRegime::Unresolvable
        } else if p > DETERMINISTIC_ABOVE {
            DamageRegime::Deterministic
        } else {
            DamageRegime::Probabilistic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmorphizationFit {
    /// Parameters `midpoint` [µJ] and `slope` [1/µJ] of
    /// `p(E) = 1/(1 + exp(−slope·(E − midpoint)))`. `None` when every
    /// site or no site was damaged, or damage does not grow with energy.
    pub fit: Option<FitResult>,
    pub midpoint_uj: Option<f64>,
    /// Zero and full damage are split by energy; the slope sits at
    /// [`MAX_SLOPE_PER_UJ`].
    pub separable: bool,
    pub energies_uj: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub regimes: Vec<DamageRegime>,
    /// Constant damage probability used when no logistic curve applies.
    pub pooled_fraction: f64,
}

impl AmorphizationFit {
    pub fn predict(&self, energy_uj: f64) -> f64 {
        match &self.fit {
            Some(f) => sigmoid(f.value("slope") * (energy_uj - f.value("midpoint"))),
            None => self.pooled_fraction,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(z: f64) -> f64 {
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

fn log_likelihood(rows: &[(f64, f64, f64)], a: f64, b: f64, center: f64) -> f64 {
    rows.iter()
        .map(|&(e, n, d)| {
            let z = a + b * (e - center);
            d * log_sigmoid(z) + (n - d) * log_sigmoid(-z)
        })
        .sum()
}

fn pearson_chi2(rows: &[(f64, f64, f64)], predict: impl Fn(f64) -> f64) -> f64 {
    rows.iter()
        .map(|&(e, n, d)| {
            let p = predict(e).clamp(1e-300, 1.0 - 1e-16);
            (d - n * p).powi(2) / (n * p * (1.0 - p))
        })
        .sum()
}

/// Detects (quasi-)separation: below some energy nothing is damaged, above
/// it everything is, with at most one mixed energy in between. Returns the
/// midpoint of the limiting curve at [`MAX_SLOPE_PER_UJ`] and its σ.
fn separated_midpoint(rows: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let is_zero = |r: &(f64, f64, f64)| r.2 == 0.0;
    let is_full = |r: &(f64, f64, f64)| r.2 == r.1;
    let first_nonzero = rows.iter().position(|r| !is_zero(r))?;
    let rest = &rows[first_nonzero..];
    let k = MAX_SLOPE_PER_UJ;
    if is_full(&rest[0]) {
        if !rest.iter().all(is_full) || first_nonzero == 0 {
            return None;
        }
        let (lo, hi) = (rows[first_nonzero - 1].0, rest[0].0);
        return Some((0.5 * (lo + hi), 0.5 * (hi - lo)));
    }
    if !rest[1..].iter().all(is_full) {
        return None;
    }
    let (e, n, d) = rest[0];
    let f = d / n;
    let midpoint = e - (f / (1.0 - f)).ln() / k;
    Some((midpoint, 1.0 / (k * (n * f * (1.0 - f)).sqrt())))
}

fn build_fit(
    midpoint: ParamEstimate,
    slope: ParamEstimate,
    covariance: Vec<f64>,
    rows: &[(f64, f64, f64)],
    n_iterations: usize,
    converged: bool,
) -> FitResult {
    let dof = rows.len().saturating_sub(2).max(1) as f64;
    let chi2 = pearson_chi2(rows, |e| sigmoid(slope.value * (e - midpoint.value)));
    FitResult {
        model: "logistic_damage".into(),
        params: IndexMap::from([("midpoint".to_string(), midpoint), ("slope".to_string(), slope)]),
        covariance,
        chi2_reduced: chi2 / dof,
        n_points: rows.len(),
        n_iterations,
        converged,
        warnings: Vec::new(),
    }
}

/// Binomial maximum-likelihood logistic fit of damage fraction vs energy.
pub fn amorphization_fit(table: &DamageTable) -> Result<AmorphizationFit, SurveyError> {
    const MIN_ENERGIES: usize = 3;
    table.validate()?;
    let rows = table.pooled();
    if rows.len() < MIN_ENERGIES {
        return Err(SurveyError::InsufficientData { found: rows.len(), required: MIN_ENERGIES });
    }
    let total_n: f64 = rows.iter().map(|r| r.1).sum();
    let total_d: f64 = rows.iter().map(|r| r.2).sum();
    let pooled_fraction = total_d / total_n;
    let mut separable = false;

    let fit = if total_d == 0.0 || total_d == total_n {
        None
    } else if let Some((m, sm)) = separated_midpoint(&rows) {
        separable = true;
        let slope = ParamEstimate { value: MAX_SLOPE_PER_UJ, sigma: f64::INFINITY };
        let cov = vec![sm * sm, 0.0, 0.0, f64::INFINITY];
        let mut f = build_fit(ParamEstimate { value: m, sigma: sm }, slope, cov, &rows, 0, true);
        f.warn("zero and full damage are separated by energy; slope pinned at its upper bound");
        Some(f)
    } else {
        newton_logistic(&rows)
    };

    let energies_uj: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let observed = rows.iter().map(|r| r.2 / r.1).collect();
    let midpoint_uj = fit.as_ref().map(|f| f.value("midpoint"));
    let mut out = AmorphizationFit {
        fit,
        midpoint_uj,
        separable,
        energies_uj,
        observed,
        predicted: Vec::new(),
        regimes: Vec::new(),
        pooled_fraction,
    };
    out.predicted = out.energies_uj.iter().map(|&e| out.predict(e)).collect();
    out.regimes = out.predicted.iter().map(|&p| DamageRegime::of(p)).collect();
    Ok(out)
}

fn newton_logistic(rows: &[(f64, f64, f64)]) -> Option<FitResult> {
    let total_n: f64 = rows.iter().map(|r| r.1).sum();
    let center = rows.iter().map(|r| r.0 * r.1).sum::<f64>() / total_n;
    let p0 = rows.iter().map(|r| r.2).sum::<f64>() / total_n;
    let (mut a, mut b) = ((p0 / (1.0 - p0)).ln(), 0.0);
    let mut ll = log_likelihood(rows, a, b, center);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = [0.0; 3];
    for it in 1..=200 {
        iterations = it;
        let (mut g0, mut g1) = (0.0, 0.0);
        info = [0.0; 3];
        for &(e, n, d) in rows {
            let x = e - center;
            let p = sigmoid(a + b * x);
            let w = n * p * (1.0 - p);
            g0 += d - n * p;
            g1 += (d - n * p) * x;
            info[0] += w;
            info[1] += w * x;
            info[2] += w * x * x;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det > 0.0) {
            break;
        }
        let da = (info[2] * g0 - info[1] * g1) / det;
        let db = (info[0] * g1 - info[1] * g0) / det;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand = log_likelihood(rows, a + t * da, b + t * db, center);
            if cand >= ll - 1e-12 * ll.abs() {
                a += t * da;
                b += t * db;
                ll = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if (t * da).abs() < 1e-12 * (1.0 + a.abs()) && (t * db).abs() < 1e-12 * (1.0 + b.abs()) {
            converged = true;
            break;
        }
    }
    if !(b > 0.0) || !b.is_finite() {
        return None;
    }
    let det = info[0] * info[2] - info[1] * info[1];
    let (vaa, vab, vbb) = (info[2] / det, -info[1] / det, info[0] / det);
    let midpoint = center - a / b;
    // delta method for midpoint = center − a/b
    let (ja, jb) = (-1.0 / b, a / (b * b));
    let vmm = ja * ja * vaa + 2.0 * ja * jb * vab + jb * jb * vbb;
    let vmb = ja * vab + jb * vbb;
    let (slope, converged) = if b > MAX_SLOPE_PER_UJ { (MAX_SLOPE_PER_UJ, false) } else { (b, converged) };
    Some(build_fit(
        ParamEstimate { value: midpoint, sigma: vmm.sqrt() },
        ParamEstimate { value: slope, sigma: vbb.sqrt() },
        vec![vmm, vmb, vmb, vbb],
        rows,
        iterations,
        converged,
    ))
}

/// Reads `energy_uj,exposed,damaged` rows.
pub fn read_damage_csv<R: Read>(reader: R) -> Result<DamageTable, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize().collect::<Result<Vec<DamageRow>, _>>()?;
    let table = DamageTable { rows };
    table.validate()?;
    Ok(table)
}
