use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

/// Faddeeva function `w(x + iy)` for `y >= 0`, Humlíček's four-region
/// rational approximation (relative error below about 1e-4).
pub fn faddeeva(x: f64, y: f64) -> Complex64 {
    let t = Complex64::new(y, -x);
    let s = x.abs() + y;
    if s >= 15.0 {
        t * 0.5641896 / (0.5 + t * t)
    } else if s >= 5.5 {
        let u = t * t;
        t * (1.410474 + u * 0.5641896) / (0.75 + u * (3.0 + u))
    } else if y >= 0.195 * x.abs() - 0.176 {
        (16.4955 + t * (20.20933 + t * (11.96482 + t * (3.778987 + t * 0.5642236))))
            / (16.4955 + t * (38.82363 + t * (39.27121 + t * (21.69274 + t * (6.699398 + t)))))
    } else {
        let u = t * t;
        let num = t
            * (36183.31
                - u * (3321.9905 - u * (1540.787 - u * (219.0313 - u * (35.76683 - u * (1.320522 - u * 0.56419))))));
        let den = 32066.6
            - u * (24322.84 - u * (9022.228 - u * (2186.181 - u * (364.2191 - u * (61.57037 - u * (1.841439 - u))))));
        u.exp() - num / den
    }
}

/// Area-normalized Voigt density: a Gaussian of standard deviation
/// `sigma_g` convolved with a Lorentzian of half width `gamma_l`.
pub fn voigt_density(f: f64, sigma_g: f64, gamma_l: f64) -> f64 {
    if sigma_g == 0.0 {
        return gamma_l / (PI * (f * f + gamma_l * gamma_l));
    }
    let scale = sigma_g * SQRT_2;
    faddeeva(f / scale, gamma_l / scale).re / (scale * PI.sqrt())
}

/// Voigt line of height `amplitude` at `center`.
///
/// Needs `sigma_g, gamma_l >= 0`, not both zero.
pub fn voigt_profile(f: f64, sigma_g: f64, gamma_l: f64, amplitude: f64, center: f64) -> f64 {
    let d = f - center;
    if sigma_g == 0.0 {
        return amplitude * gamma_l * gamma_l / (d * d + gamma_l * gamma_l);
    }
    if gamma_l == 0.0 {
        return amplitude * (-0.5 * (d / sigma_g).powi(2)).exp();
    }
    let scale = sigma_g * SQRT_2;
    let y = gamma_l / scale;
    amplitude * faddeeva(d / scale, y).re / faddeeva(0.0, y).re
}

/// Full width at half maximum of the Voigt profile, by bisection.
pub fn voigt_fwhm(sigma_g: f64, gamma_l: f64) -> f64 {
    let half = |x: f64| voigt_profile(x, sigma_g, gamma_l, 1.0, 0.0) - 0.5;
    let (mut lo, mut hi) = (0.0, 2.0 * gamma_l + 2.0 * 1.1774100225154747 * sigma_g);
    while half(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if half(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    lo + hi
}
