//! Gaussian heat kernel `Γ_q` and its derivatives, in particular the dipole
//! `D_q = ∂_x Γ_q`.

use serde::Serialize;

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeatParams {
    /// Diffusivity, half the kernel's second moment.
    pub q: f64,
}

fn check(t: f64, q: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(param(format!("time must be positive, got {t}")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(param(format!("diffusivity must be positive, got {q}")));
    }
    Ok(())
}

/// `Γ_q(x,t) = (4πqt)^{-1/2} exp(-x²/(4qt))`.
pub fn gamma_q(x: f64, t: f64, q: f64) -> Result<f64> {
    check(t, q)?;
    Ok(gaussian(x, t, q))
}

#[inline]
pub(crate) fn gaussian(x: f64, t: f64, q: f64) -> f64 {
    (4.0 * std::f64::consts::PI * q * t).powf(-0.5) * (-x * x / (4.0 * q * t)).exp()
}

/// `D_q(x,t) = -x/(2qt) Γ_q(x,t)`.
pub fn dipole(x: f64, t: f64, q: f64) -> Result<f64> {
    check(t, q)?;
    Ok(-x / (2.0 * q * t) * gaussian(x, t, q))
}

/// `∂_x^n Γ_q(x,t) = (-1)^n σ^{-n} He_n(x/σ) Γ_q` with `σ² = 2qt` and
/// probabilists' Hermite polynomials `He_n`.
pub fn heat_kernel_derivative(x: f64, t: f64, q: f64, n: u32) -> Result<f64> {
    check(t, q)?;
    let sigma = (2.0 * q * t).sqrt();
    let z = x / sigma;
    let (mut he_prev, mut he) = (1.0, z);
    if n == 0 {
        he = 1.0;
    }
    for k in 1..n {
        let next = z * he - k as f64 * he_prev;
        he_prev = he;
        he = next;
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * sigma.powi(-(n as i32)) * he * gaussian(x, t, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use approx::assert_abs_diff_eq;

    const Q: f64 = 1.0 / 18.0;

    #[test]
    fn gaussian_value_at_origin() {
        // (4π/18)^{-1/2}
        let expected = (18.0 / (4.0 * std::f64::consts::PI)).sqrt();
        assert_abs_diff_eq!(gamma_q(0.0, 1.0, Q).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 1.196827, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_normalization() {
        for (t, q) in [(1.0, Q), (7.0, 0.3)] {
            let s = 12.0 * (2.0 * q * t).sqrt();
            let m = quadrature::adaptive(&|x: f64| gamma_q(x, t, q).unwrap(), -s, s, 1e-13);
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn parabolic_scaling() {
        let lambda = 3.0;
        for x in [-0.7, 0.0, 0.4, 2.5] {
            let lhs = gamma_q(x, 2.0, Q).unwrap();
            let rhs = lambda * gamma_q(lambda * x, lambda * lambda * 2.0, Q).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);
        }
    }

    #[test]
    fn dipole_is_odd_and_preserves_first_momentum() {
        assert_eq!(dipole(0.0, 3.0, Q).unwrap(), 0.0);
        assert_abs_diff_eq!(dipole(0.8, 3.0, Q).unwrap(), -dipole(-0.8, 3.0, Q).unwrap(), epsilon = 1e-15);
        for t in [1.0, 4.0] {
            let s = 12.0 * (2.0 * Q * t).sqrt();
            let m = quadrature::adaptive(&|x: f64| x * (-2.0 * dipole(x, t, Q).unwrap()), 0.0, s, 1e-13);
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn dipole_extremum_location() {
        let t = 2.0;
        let peak = (2.0 * Q * t).sqrt();
        let at_peak = dipole(peak, t, Q).unwrap().abs();
        for f in [0.9, 0.99, 1.01, 1.1] {
            assert!(dipole(f * peak, t, Q).unwrap().abs() < at_peak);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (t, x, e) = (1.5, 0.37, 1e-4);
        let g = |y: f64| gamma_q(y, t, Q).unwrap();
        assert_abs_diff_eq!(heat_kernel_derivative(x, t, Q, 0).unwrap(), g(x), epsilon = 1e-15);
        assert_abs_diff_eq!(heat_kernel_derivative(x, t, Q, 1).unwrap(), dipole(x, t, Q).unwrap(), epsilon = 1e-13);
        let fd2 = (g(x + e) - 2.0 * g(x) + g(x - e)) / (e * e);
        assert_abs_diff_eq!(heat_kernel_derivative(x, t, Q, 2).unwrap(), fd2, epsilon = 1e-5);
        let d2 = |y: f64| heat_kernel_derivative(y, t, Q, 2).unwrap();
        let fd4 = (d2(x + e) - 2.0 * d2(x) + d2(x - e)) / (e * e);
        let exact = heat_kernel_derivative(x, t, Q, 4).unwrap();
        assert!((exact - fd4).abs() < 1e-5 * exact.abs().max(1.0));
    }

    #[test]
    fn rejects_nonpositive_time() {
        assert!(gamma_q(0.0, 0.0, Q).is_err());
        assert!(dipole(0.0, -1.0, Q).is_err());
    }
}
