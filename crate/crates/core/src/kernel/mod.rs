//! Convolution kernels `J`: symmetric, compactly supported on `(-d, d)`,
//! nonincreasing on `[0, d]`, unit mass.

mod heat;
mod regular_part;

pub use heat::{dipole, gamma_q, heat_kernel_derivative, HeatParams};
pub use regular_part::{
    check_w_estimates, clip_negative, regular_part_w, RegularPart, SpectralKernel, Symbol, WEstimateReport,
    WEstimateRow, WFamily,
};

use serde::Serialize;

use crate::error::{param, Result};
use crate::quadrature;

/// Absolute target for moment quadratures.
pub const MOMENT_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
enum Shape {
    /// `35/(32d) (1 - (x/d)^2)^3`.
    Poly3,
    /// Piecewise-linear interpolation of `(|x|, J)` samples, renormalized.
    Tabulated { xs: Vec<f64>, js: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Kernel {
    support: f64,
    shape: Shape,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelInfo {
    pub family: String,
    pub d: f64,
    pub mass: f64,
    pub m2: f64,
    pub m4: f64,
    pub q: f64,
    pub jhat_at_pi_over_d: f64,
}

impl Kernel {
    pub fn poly3(d: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(param(format!("kernel support radius must be positive, got {d}")));
        }
        Ok(Self { support: d, shape: Shape::Poly3 })
    }

    /// Builds a kernel from samples `(x, J(x))`. Negative abscissae are
    /// folded onto `|x|`; the support radius is the largest abscissa and the
    /// last sample must vanish. Values are renormalized to unit mass.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = samples.iter().map(|&(x, j)| (x.abs(), j)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-14);
        if pts.len() < 3 {
            return Err(param("tabulated kernel needs at least three distinct |x| samples"));
        }
        if pts.iter().any(|&(x, j)| !x.is_finite() || !j.is_finite() || j < 0.0) {
            return Err(param("tabulated kernel samples must be finite and nonnegative"));
        }
        if pts[0].0 != 0.0 {
            return Err(param("tabulated kernel must include a sample at x = 0"));
        }
        let (d, j_end) = *pts.last().unwrap();
        if j_end.abs() > 1e-8 {
            return Err(param(format!("tabulated kernel must vanish at its support edge, J({d}) = {j_end}")));
        }
        if pts.windows(2).any(|w| w[1].1 > w[0].1 + 1e-8) {
            return Err(param("tabulated kernel must be nonincreasing in |x|"));
        }
        let half_mass: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        if half_mass <= 0.0 {
            return Err(param("tabulated kernel has zero mass"));
        }
        let scale = 0.5 / half_mass;
        let xs = pts.iter().map(|p| p.0).collect();
        let js = pts.iter().map(|p| p.1 * scale).collect();
        Ok(Self { support: d, shape: Shape::Tabulated { xs, js } })
    }

    pub fn family(&self) -> &'static str {
        match self.shape {
            Shape::Poly3 => "poly3",
            Shape::Tabulated { .. } => "tabulated",
        }
    }

    /// Support radius `d`.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Tolerance at which the kernel invariants are expected to hold.
    pub fn invariant_tol(&self) -> f64 {
        match self.shape {
            Shape::Poly3 => 1e-12,
            Shape::Tabulated { .. } => 1e-8,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        if r >= self.support {
            return 0.0;
        }
        match &self.shape {
            Shape::Poly3 => {
                let d = self.support;
                let s = 1.0 - (x * x) / (d * d);
                35.0 / (32.0 * d) * s * s * s
            }
            Shape::Tabulated { xs, js } => {
                let i = xs.partition_point(|&v| v <= r).min(xs.len() - 1).max(1);
                let (x0, x1) = (xs[i - 1], xs[i]);
                let w = (r - x0) / (x1 - x0);
                js[i - 1] * (1.0 - w) + js[i] * w
            }
        }
    }

    /// Points of `[0, d]` between which `J` is smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Poly3 => vec![0.0, self.support],
            Shape::Tabulated { xs, .. } => xs.clone(),
        }
    }

    /// `m_s = ∫ J(z) z^s dz` for `s ≤ 6`. Odd moments vanish by symmetry.
    pub fn moment(&self, s: u32) -> Result<f64> {
        if s > 6 {
            return Err(param(format!("moment order must be at most 6, got {s}")));
        }
        if s % 2 == 1 {
            return Ok(0.0);
        }
        let f = |z: f64| self.eval(z) * z.powi(s as i32);
        Ok(2.0 * quadrature::adaptive_segments(&f, &self.breakpoints(), 0.5 * MOMENT_TOL))
    }

    /// Diffusivity `q = m_2 / 2` of the limiting local heat equation.
    pub fn diffusivity(&self) -> f64 {
        0.5 * self.moment(2).expect("order 2 is valid")
    }

    pub fn heat_params(&self) -> HeatParams {
        HeatParams { q: self.diffusivity() }
    }

    /// `Ĵ(ξ) = ∫ J(x) cos(ξx) dx`, in closed form when available.
    pub fn fourier(&self, xi: f64) -> f64 {
        match self.shape {
            Shape::Poly3 => poly3_transform(xi * self.support),
            Shape::Tabulated { .. } => self.fourier_quadrature(xi),
        }
    }

    pub(crate) fn has_closed_transform(&self) -> bool {
        matches!(self.shape, Shape::Poly3)
    }

    /// `Ĵ(ξ)` by composite Gauss–Legendre quadrature.
    pub fn fourier_quadrature(&self, xi: f64) -> f64 {
        let f = |x: f64| self.eval(x) * (xi * x).cos();
        let breaks = self.breakpoints();
        breaks
            .windows(2)
            .map(|w| {
                // at least one panel per half oscillation
                let panels = ((xi.abs() * (w[1] - w[0])) / std::f64::consts::PI).ceil() as usize + 1;
                2.0 * quadrature::composite(&f, w[0], w[1], panels)
            })
            .sum()
    }

    pub fn info(&self) -> Result<KernelInfo> {
        let mass = self.moment(0)?;
        let m2 = self.moment(2)?;
        Ok(KernelInfo {
            family: self.family().to_string(),
            d: self.support,
            mass,
            m2,
            m4: self.moment(4)?,
            q: 0.5 * m2,
            jhat_at_pi_over_d: self.fourier(std::f64::consts::PI / self.support),
        })
    }
}

/// Transform of the unit-radius poly3 kernel, `105 j_3(z) / z^3` with the
/// spherical Bessel function `j_3`.
fn poly3_transform(z: f64) -> f64 {
    let z = z.abs();
    if z <= 2.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let y = -0.5 * z * z;
        for k in 0..40 {
            term *= y / ((k + 1) as f64 * (2 * k + 9) as f64);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        return sum;
    }
    let (s, c) = z.sin_cos();
    let j3 = (15.0 / (z * z * z) - 6.0 / z) * s / z - (15.0 / (z * z) - 1.0) * c / z;
    105.0 * j3 / (z * z * z)
}
