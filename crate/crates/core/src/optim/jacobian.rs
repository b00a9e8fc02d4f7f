use nalgebra::DMatrix;

use super::FitError;

fn step_for(p: f64, rel_step: f64) -> f64 {
    (rel_step * p.abs()).max(rel_step)
}

fn eval_checked<M>(model: &M, params: &[f64], index: usize) -> Result<Vec<f64>, FitError>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    let out = model(params);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(FitError::JacobianNonFinite { param: format!("#{index}") })
    }
}

/// Central-difference Jacobian of `model` at `params`.
///
/// Row `i`, column `j` holds `d model_i / d params_j`, with the step for
/// parameter `j` equal to `max(rel_step * |p_j|, rel_step)`.
pub fn numeric_jacobian<M>(model: M, params: &[f64], rel_step: f64) -> Result<DMatrix<f64>, FitError>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    let bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); params.len()];
    bounded_jacobian(&model, params, &bounds, rel_step, None)
}

/// Forward-difference Jacobian, same step rule as [`numeric_jacobian`].
pub fn forward_jacobian<M>(model: M, params: &[f64], rel_step: f64) -> Result<DMatrix<f64>, FitError>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    if !(rel_step > 0.0) {
        return Err(FitError::InvalidStep(rel_step));
    }
    let base = eval_checked(&model, params, 0)?;
    let mut jac = DMatrix::zeros(base.len(), params.len());
    let mut probe = params.to_vec();
    for j in 0..params.len() {
        let h = step_for(params[j], rel_step);
        probe[j] = params[j] + h;
        let up = eval_checked(&model, &probe, j)?;
        probe[j] = params[j];
        for i in 0..base.len() {
            jac[(i, j)] = (up[i] - base[i]) / h;
        }
    }
    Ok(jac)
}

/// Central differences, switching to a one-sided difference when the
/// central probe would leave the box. `names` only improves error text.
pub(crate) fn bounded_jacobian<M>(
    model: &M,
    params: &[f64],
    bounds: &[(f64, f64)],
    rel_step: f64,
    names: Option<&[String]>,
) -> Result<DMatrix<f64>, FitError>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    if !(rel_step > 0.0) {
        return Err(FitError::InvalidStep(rel_step));
    }
    let name_of = |j: usize| match names {
        Some(n) => n[j].clone(),
        None => format!("#{j}"),
    };
    let mut probe = params.to_vec();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut rows = None;
    for j in 0..params.len() {
        let h = step_for(params[j], rel_step);
        let (lo, hi) = bounds[j];
        let can_up = params[j] + h <= hi;
        let can_down = params[j] - h >= lo;
        let mut eval = |v: f64| {
            probe[j] = v;
            let out = model(&probe);
            probe[j] = params[j];
            if out.iter().all(|x| x.is_finite()) {
                Ok(out)
            } else {
                Err(FitError::JacobianNonFinite { param: name_of(j) })
            }
        };
        let col: Vec<f64> = if can_up && can_down {
            let up = eval(params[j] + h)?;
            let down = eval(params[j] - h)?;
            up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
        } else if can_up {
            let up = eval(params[j] + h)?;
            let base = eval(params[j])?;
            up.iter().zip(&base).map(|(u, b)| (u - b) / h).collect()
        } else {
            let base = eval(params[j])?;
            let down = eval(params[j] - h)?;
            base.iter().zip(&down).map(|(b, d)| (b - d) / h).collect()
        };
        rows = Some(col.len());
        columns.push(col);
    }
    let nrows = match rows {
        Some(n) => n,
        None => model(params).len(),
    };
    Ok(DMatrix::from_fn(nrows, params.len(), |i, j| columns[j][i]))
}
