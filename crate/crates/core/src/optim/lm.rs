use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};

use super::jacobian::bounded_jacobian;
use super::{FitError, FitResult, ParamEstimate, ParamSpec};

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Damping is multiplied by this on a rejected step and divided by it
    /// on an accepted one.
    pub damping_factor: f64,
    /// Stop when an accepted step lowers the cost by less than this
    /// fraction.
    pub cost_tolerance: f64,
    /// Stop when the ∞-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    pub rel_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            damping_factor: 10.0,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-10,
            rel_step: 1e-6,
        }
    }
}

const MAX_DAMPING: f64 = 1e16;

/// Weighted least-squares fit of `model(x, params)` to `y`.
///
/// Without `y_sigma` the fit is unweighted and the covariance is scaled by
/// the residual variance `Σr² / (n - k)`.
pub fn fit_least_squares<F>(
    model: F,
    specs: &[ParamSpec],
    x: &[f64],
    y: &[f64],
    y_sigma: Option<&[f64]>,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fit_least_squares_with(&LmOptions::default(), model, specs, x, y, y_sigma)
}

pub fn fit_least_squares_with<F>(
    opts: &LmOptions,
    model: F,
    specs: &[ParamSpec],
    x: &[f64],
    y: &[f64],
    y_sigma: Option<&[f64]>,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    for s in specs {
        s.validate()?;
    }
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if let Some(sig) = y_sigma {
        if sig.len() != y.len() {
            return Err(FitError::LengthMismatch { x: y.len(), y: sig.len() });
        }
        if let Some((index, &value)) = sig.iter().enumerate().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
            return Err(FitError::BadSigma { index, value });
        }
    }
    let free: Vec<usize> = (0..specs.len()).filter(|&i| !specs[i].frozen).collect();
    let n = y.len();
    let k = free.len();
    if n < k || (n == 0 && k > 0) {
        return Err(FitError::TooFewPoints { points: n, free: k });
    }

    let weights: Vec<f64> = match y_sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let full_params = |free_vals: &[f64]| {
        let mut p: Vec<f64> = specs.iter().map(|s| s.initial).collect();
        for (slot, &i) in free.iter().enumerate() {
            p[i] = free_vals[slot];
        }
        p
    };
    // Weighted residuals r = (y - m) / σ, or None if the model misbehaves.
    let residuals = |free_vals: &[f64]| -> Result<Vec<f64>, FitError> {
        let p = full_params(free_vals);
        let m = model(x, &p);
        if m.len() != n {
            return Err(FitError::ModelLength { expected: n, got: m.len() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite { params: p });
        }
        Ok(y.iter().zip(&m).zip(&weights).map(|((yi, mi), w)| (yi - mi) * w).collect())
    };
    let cost_of = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let bounds: Vec<(f64, f64)> = free.iter().map(|&i| (specs[i].lower, specs[i].upper)).collect();
    let names: Vec<String> = free.iter().map(|&i| specs[i].name.clone()).collect();
    let clamp = |v: &mut [f64]| {
        for (vi, (lo, hi)) in v.iter_mut().zip(&bounds) {
            *vi = vi.clamp(*lo, *hi);
        }
    };
    let jacobian = |free_vals: &[f64]| {
        // d r / d p = -w * d m / d p
        let resid_model = |fv: &[f64]| {
            let p = full_params(fv);
            model(x, &p).iter().zip(&weights).map(|(m, w)| -m * w).collect::<Vec<f64>>()
        };
        bounded_jacobian(&resid_model, free_vals, &bounds, opts.rel_step, Some(&names))
    };

    let mut p: Vec<f64> = free.iter().map(|&i| specs[i].initial).collect();
    let mut r = residuals(&p)?;
    let mut cost = cost_of(&r);
    let mut iterations = 0;
    let mut converged = k == 0;
    let mut damping = opts.initial_damping;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(&p)?;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.amax() < opts.gradient_tolerance {
            converged = true;
            break;
        }
        let hess = jac.transpose() * &jac;
        let diag_max = (0..k).map(|i| hess[(i, i)]).fold(0.0_f64, f64::max);
        let floor = if diag_max > 0.0 { diag_max * 1e-12 } else { 1.0 };
        let mut accepted = false;
        while damping < MAX_DAMPING {
            let mut a = hess.clone();
            for i in 0..k {
                a[(i, i)] += damping * hess[(i, i)].max(floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    damping *= opts.damping_factor;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let trial_cost = match residuals(&trial) {
                Ok(tr) => Some((cost_of(&tr), tr)),
                Err(FitError::NonFinite { .. }) => None,
                Err(e) => return Err(e),
            };
            match trial_cost {
                Some((c, tr)) if c < cost => {
                    let rel = (cost - c) / cost;
                    p = trial;
                    r = tr;
                    cost = c;
                    damping = (damping / opts.damping_factor).max(1e-15);
                    accepted = true;
                    if rel < opts.cost_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => damping *= opts.damping_factor,
            }
        }
        if !accepted {
            // No decrease is possible at machine precision.
            converged = true;
        }
    }

    let dof = n.saturating_sub(k).max(1) as f64;
    let ssr = 2.0 * cost;
    let chi2_reduced = ssr / dof;
    let mut cov_free = DMatrix::<f64>::zeros(k, k);
    let mut singular = false;
    if k > 0 {
        let jac = jacobian(&p)?;
        let hess = jac.transpose() * &jac;
        match invert_spd(&hess) {
            Some(inv) => {
                let scale = if y_sigma.is_some() { 1.0 } else { chi2_reduced };
                cov_free = inv * scale;
            }
            None => singular = true,
        }
    }

    let full = full_params(&p);
    let m = specs.len();
    let mut covariance = vec![0.0; m * m];
    let mut params = IndexMap::with_capacity(m);
    for (i, spec) in specs.iter().enumerate() {
        let slot = free.iter().position(|&f| f == i);
        let sigma = match slot {
            None => 0.0,
            Some(_) if singular => f64::INFINITY,
            Some(s) => cov_free[(s, s)].max(0.0).sqrt(),
        };
        params.insert(spec.name.clone(), ParamEstimate { value: full[i], sigma });
    }
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            covariance[ia * m + ib] = if singular { f64::NAN } else { cov_free[(a, b)] };
        }
    }

    let mut result = FitResult {
        model: String::new(),
        params,
        covariance,
        chi2_reduced,
        n_points: n,
        n_iterations: iterations,
        converged: converged && !singular,
        warnings: Vec::new(),
    };
    if singular {
        result.warn("singular Hessian: parameter uncertainties undefined");
    }
    Ok(result)
}

fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = a.nrows();
    // Equilibrate so badly scaled parameters do not look singular.
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |i, j| a[(i, j)] * s[i] * s[j]);
    let eig = scaled.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(min > max * 1e-14) {
        return None;
    }
    let inv = scaled.cholesky()?.inverse();
    Some(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] * s[i] * s[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::pointwise;

    #[test]
    fn exact_line() {
        let fit = fit_least_squares(
            pointwise(|x, p| p[0] * x + p[1]),
            &[ParamSpec::new("a", 0.5), ParamSpec::new("b", 0.0)],
            &[0.0, 1.0, 2.0],
            &[1.0, 3.0, 5.0],
            None,
        )
        .unwrap();
        assert!((fit.value("a") - 2.0).abs() < 1e-9);
        assert!((fit.value("b") - 1.0).abs() < 1e-9);
        assert!(fit.chi2_reduced < 1e-18);
        assert!(fit.converged);
    }

    #[test]
    fn all_frozen_evaluates_once() {
        let calls = std::cell::Cell::new(0);
        let fit = fit_least_squares(
            |x: &[f64], p: &[f64]| {
                calls.set(calls.get() + 1);
                x.iter().map(|v| v * p[0]).collect()
            },
            &[ParamSpec::new("a", 2.0).frozen()],
            &[1.0, 2.0],
            &[2.0, 4.5],
            None,
        )
        .unwrap();
        assert_eq!(calls.get(), 1);
        assert_eq!(fit.n_iterations, 0);
        assert!(fit.covariance.iter().all(|v| *v == 0.0));
        assert_eq!(fit.sigma("a"), 0.0);
        assert_eq!(fit.value("a"), 2.0);
    }

    #[test]
    fn frozen_parameter_is_untouched() {
        let fit = fit_least_squares(
            pointwise(|x, p| p[0] * x + p[1]),
            &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 0.7).frozen()],
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 3.0, 5.0, 7.0],
            None,
        )
        .unwrap();
        assert_eq!(fit.value("b"), 0.7);
        assert_eq!(fit.sigma("b"), 0.0);
        assert_eq!(fit.covariance_of("a", "b"), 0.0);
    }

    #[test]
    fn bounds_are_respected() {
        // Unconstrained optimum is a = 2; the box stops it at 1.5.
        let fit = fit_least_squares(
            pointwise(|x, p| p[0] * x),
            &[ParamSpec::new("a", 1.0).bounds(0.0, 1.5)],
            &[1.0, 2.0, 3.0],
            &[2.0, 4.0, 6.0],
            None,
        )
        .unwrap();
        assert!((fit.value("a") - 1.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_initial_output_is_an_error() {
        let err = fit_least_squares(
            pointwise(|x, p| (x * p[0]).ln()),
            &[ParamSpec::new("a", -1.0)],
            &[1.0, 2.0],
            &[0.0, 1.0],
            None,
        )
        .unwrap_err();
        assert_eq!(err, FitError::NonFinite { params: vec![-1.0] });
    }

    #[test]
    fn singular_hessian_flags_infinite_sigma() {
        // p0 and p1 enter only as a sum.
        let fit = fit_least_squares(
            pointwise(|x, p| (p[0] + p[1]) * x),
            &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)],
            &[1.0, 2.0, 3.0],
            &[3.0, 6.1, 9.0],
            None,
        )
        .unwrap();
        assert!(!fit.converged);
        assert!(fit.sigma("a").is_infinite());
    }

    #[test]
    fn precondition_errors() {
        let m = pointwise(|x, p| p[0] * x);
        assert!(matches!(
            fit_least_squares(&m, &[ParamSpec::new("a", 1.0)], &[1.0], &[1.0, 2.0], None),
            Err(FitError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_least_squares(&m, &[ParamSpec::new("a", 1.0)], &[1.0], &[1.0], Some(&[0.0])),
            Err(FitError::BadSigma { .. })
        ));
        assert!(matches!(
            fit_least_squares(&m, &[ParamSpec::new("a", 5.0).bounds(0.0, 1.0)], &[1.0], &[1.0], None),
            Err(FitError::InvalidSpec { .. })
        ));
        assert!(matches!(
            fit_least_squares(
                pointwise(|x, p| p[0] * x + p[1]),
                &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)],
                &[1.0],
                &[1.0],
                None
            ),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn weighted_covariance_matches_linear_theory() {
        // For a straight line with known σ the covariance is (XᵀWX)^-1.
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 1.9, 4.2, 5.8, 8.1];
        let s = [0.1, 0.2, 0.1, 0.3, 0.2];
        let fit = fit_least_squares(
            pointwise(|x, p| p[0] * x + p[1]),
            &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 0.0)],
            &x,
            &y,
            Some(&s),
        )
        .unwrap();
        let (mut sw, mut swx, mut swxx) = (0.0, 0.0, 0.0);
        for i in 0..5 {
            let w = 1.0 / (s[i] * s[i]);
            sw += w;
            swx += w * x[i];
            swxx += w * x[i] * x[i];
        }
        let det = sw * swxx - swx * swx;
        assert!((fit.sigma("a").powi(2) - sw / det).abs() < 1e-8);
        assert!((fit.sigma("b").powi(2) - swxx / det).abs() < 1e-8);
        assert!((fit.covariance_of("a", "b") + swx / det).abs() < 1e-8);
    }

    #[test]
    fn json_shape() {
        let fit =
            fit_least_squares(pointwise(|x, p| p[0] * x), &[ParamSpec::new("a", 1.0)], &[1.0, 2.0], &[2.0, 4.1], None)
                .unwrap()
                .with_model("line");
        let v = fit.to_json();
        assert_eq!(v["model"], "line");
        assert!(v["params"]["a"]["value"].is_f64());
        assert!(v["params"]["a"]["sigma"].is_f64());
        assert!(v["covariance"].is_array());
        assert!(v["chi2_reduced"].is_f64());
        assert_eq!(v["converged"], true);
        let back: FitResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, fit);
    }
}
