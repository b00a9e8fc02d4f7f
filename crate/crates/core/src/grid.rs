/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Trapezoid integral of `y` sampled on the (not necessarily uniform) grid `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

/// Full width at half maximum of a single-peaked sampled curve, found by
/// linear interpolation of the half-maximum crossings on either side of
/// the maximum. Returns `None` when a crossing is not inside the grid.
pub(crate) fn fwhm(x: &[f64], y: &[f64]) -> Option<f64> {
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if ymax <= 0.0 {
        return None;
    }
    let half = 0.5 * ymax;
    let mut left = None;
    for i in (0..imax).rev() {
        if y[i] <= half {
            let t = (half - y[i]) / (y[i + 1] - y[i]);
            left = Some(x[i] + t * (x[i + 1] - x[i]));
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..y.len() {
        if y[i] <= half {
            let t = (y[i - 1] - half) / (y[i - 1] - y[i]);
            right = Some(x[i - 1] + t * (x[i] - x[i - 1]));
            break;
        }
    }
    Some(right? - left?)
}

/// Total order on `f64` for use as a map key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrderedF64(pub f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_lines() {
        let x = linspace(0.0, 2.0, 7);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((trapezoid(&x, &y) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn fwhm_of_triangle() {
        let x = linspace(-2.0, 2.0, 401);
        let y: Vec<f64> = x.iter().map(|v| (1.0 - v.abs()).max(0.0)).collect();
        assert!((fwhm(&x, &y).unwrap() - 1.0).abs() < 1e-9);
    }
}
