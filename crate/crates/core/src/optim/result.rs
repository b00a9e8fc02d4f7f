use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamEstimate {
    pub value: f64,
    /// 1σ uncertainty; `f64::INFINITY` when the Hessian was singular.
    pub sigma: f64,
}

/// Outcome of a least-squares fit.
///
/// `covariance` is row-major over the parameters in `params` order; frozen
/// parameters have all-zero rows and columns. When `converged` is false the
/// values are the best vector seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: String,
    pub params: IndexMap<String, ParamEstimate>,
    pub covariance: Vec<f64>,
    pub chi2_reduced: f64,
    pub n_points: usize,
    pub n_iterations: usize,
    pub converged: bool,
    /// Non-fatal diagnostics raised by the consuming fit.
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.param(name).value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).sigma
    }

    pub fn param(&self, name: &str) -> ParamEstimate {
        *self.params.get(name).unwrap_or_else(|| panic!("fit result has no parameter `{name}`"))
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.values().map(|p| p.value).collect()
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> f64 {
        let n = self.params.len();
        let i = self.params.get_index_of(a).expect("unknown parameter");
        let j = self.params.get_index_of(b).expect("unknown parameter");
        self.covariance[i * n + j]
    }

    pub fn with_model(mut self, name: impl Into<String>) -> Self {
        self.model = name.into();
        self
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("fit result serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct ParamJson {
    value: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitResultJson {
    model: String,
    params: IndexMap<String, ParamJson>,
    chi2_reduced: Option<f64>,
    converged: bool,
    covariance: Vec<Option<f64>>,
    #[serde(default)]
    n_points: usize,
    #[serde(default)]
    n_iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

// Non-finite numbers are written as `null`; a null sigma reads back as
// infinite, any other null as NaN.
impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FitResultJson {
            model: self.model.clone(),
            params: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), ParamJson { value: finite(p.value), sigma: finite(p.sigma) }))
                .collect(),
            chi2_reduced: finite(self.chi2_reduced),
            converged: self.converged,
            covariance: self.covariance.iter().map(|&v| finite(v)).collect(),
            n_points: self.n_points,
            n_iterations: self.n_iterations,
            warnings: self.warnings.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = FitResultJson::deserialize(d)?;
        Ok(FitResult {
            model: j.model,
            params: j
                .params
                .into_iter()
                .map(|(k, p)| {
                    (k, ParamEstimate { value: p.value.unwrap_or(f64::NAN), sigma: p.sigma.unwrap_or(f64::INFINITY) })
                })
                .collect(),
            covariance: j.covariance.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            chi2_reduced: j.chi2_reduced.unwrap_or(f64::NAN),
            n_points: j.n_points,
            n_iterations: j.n_iterations,
            converged: j.converged,
            warnings: j.warnings,
        })
    }
}
