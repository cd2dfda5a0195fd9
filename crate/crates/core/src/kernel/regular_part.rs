//! The regular part `W` of the fundamental solution, evaluated exactly in
//! time from its transform `e^{-t}(e^{Ĵt} - 1)` by an inverse FFT on a ring
//! four times longer than the grid.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::Kernel;
use crate::domain::{DiscreteKernel, Field, Grid};
use crate::error::{param, Error, Result};

/// Allowed magnitude of `W` at the point of the ring farthest from the
/// origin, relative to its peak. Larger values mean the periodic images
/// overlap; smaller ones are indistinguishable from spectral round-off.
pub const WRAP_TOL: f64 = 1e-10;

/// Transform of the convolution kernel used to build `W`.
#[derive(Clone, Debug)]
pub enum Symbol {
    /// `Ĵ(ξ)` of the continuous kernel.
    Continuum(Kernel),
    /// `Σ w_j cos(ξjh)` of the grid weights; `W` then solves the
    /// semi-discrete equation exactly.
    Lattice(DiscreteKernel),
}

/// Samples of the kernel transform in FFT frequency order.
#[derive(Clone, Debug)]
pub struct SpectralKernel {
    xi: Vec<f64>,
    jhat: Vec<f64>,
}

impl SpectralKernel {
    /// Frequencies `2πk/(Nh)` for `N` ring points of spacing `h`.
    pub fn new(symbol: &Symbol, ring: usize, h: f64) -> Result<Self> {
        let dxi = 2.0 * std::f64::consts::PI / (ring as f64 * h);
        let xi: Vec<f64> =
            (0..ring).map(|k| if k <= ring / 2 { k as f64 } else { k as f64 - ring as f64 } * dxi).collect();
        let half: Vec<f64> = (0..=ring / 2)
            .map(|k| {
                let x = k as f64 * dxi;
                match symbol {
                    Symbol::Continuum(kernel) => kernel.fourier(x),
                    Symbol::Lattice(dk) => dk.symbol(x),
                }
            })
            .collect();
        let jhat = (0..ring).map(|k| half[k.min(ring - k)]).collect();
        let sk = Self { xi, jhat };
        sk.check()?;
        Ok(sk)
    }

    fn check(&self) -> Result<()> {
        if (self.jhat[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InternalConsistency(format!("kernel transform at 0 is {}, not 1", self.jhat[0])));
        }
        if let Some(v) = self.jhat.iter().find(|v| v.abs() > 1.0 + 1e-12) {
            return Err(Error::InternalConsistency(format!("kernel transform {v} exceeds 1 in magnitude")));
        }
        Ok(())
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn jhat(&self) -> &[f64] {
        &self.jhat
    }
}

/// Number of aliased copies `ξ ± 2πp/h` added on each side when the kernel
/// transform is known in closed form.
const ALIAS_FOLDS: usize = 512;

/// Aliases below this size are not worth folding.
const ALIAS_CUTOFF: f64 = 1e-18;

/// Evaluator for `∂_x^s W(·,t)` and `∂_t W(·,t)` on a grid.
///
/// Node values are the inverse DFT of the transform sampled on the ring.
/// For kernels with a closed-form transform the samples are folded over
/// aliased frequencies, which makes them exact samples of the continuous
/// `W` (up to the periodic images, checked at the ring antipode).
pub struct RegularPart {
    grid: Arc<Grid>,
    spectrum: SpectralKernel,
    fft: Arc<dyn Fft<f64>>,
    folding: Option<Kernel>,
}

impl std::fmt::Debug for RegularPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegularPart").field("ring", &self.ring_len()).finish()
    }
}

fn w_hat(j: f64, t: f64) -> f64 {
    if j * t < 1.0 {
        (-t).exp() * (j * t).exp_m1()
    } else {
        ((j - 1.0) * t).exp() - (-t).exp()
    }
}

fn w_hat_dt(j: f64, t: f64) -> f64 {
    (j - 1.0) * ((j - 1.0) * t).exp() + (-t).exp()
}

impl RegularPart {
    pub fn new(grid: Arc<Grid>, symbol: Symbol) -> Result<Self> {
        let ring = 4 * (grid.len() - 1);
        let spectrum = SpectralKernel::new(&symbol, ring, grid.h())?;
        let fft = FftPlanner::new().plan_fft_inverse(ring);
        let folding = match symbol {
            Symbol::Continuum(k) if k.has_closed_transform() => Some(k),
            _ => None,
        };
        Ok(Self { grid, spectrum, fft, folding })
    }

    pub fn ring_len(&self) -> usize {
        self.spectrum.xi.len()
    }

    pub fn spectrum(&self) -> &SpectralKernel {
        &self.spectrum
    }

    /// Bound on `|Ĵ|` beyond the Nyquist frequency, for poly3.
    fn alias_envelope(&self, kernel: &Kernel) -> f64 {
        let z = std::f64::consts::PI * kernel.support() / self.grid.h();
        105.0 * (1.0 / z.powi(4) + 6.0 / z.powi(5) + 15.0 / z.powi(6) + 15.0 / z.powi(7))
    }

    /// Inverse transform of `(iξ)^s m(Ĵ(ξ))` for an even symbol map `m`,
    /// in ring order. `alias_size` bounds `|m|` on aliased frequencies.
    fn synthesize(&self, s: u32, m: impl Fn(f64) -> f64 + Sync, alias_size: impl Fn(f64) -> f64) -> Vec<f64> {
        let ring = self.ring_len();
        let nyquist = ring / 2;
        let h = self.grid.h();
        let period = 2.0 * std::f64::consts::PI / h;
        let folding =
            self.folding.as_ref().filter(|k| alias_size(self.alias_envelope(k)) * period.powi(s as i32) > ALIAS_CUTOFF);
        let half: Vec<f64> = (0..=nyquist)
            .into_par_iter()
            .map(|k| {
                let xi = self.spectrum.xi[k];
                let mut acc = xi.powi(s as i32) * m(self.spectrum.jhat[k]);
                if let Some(kernel) = folding {
                    for p in 1..=ALIAS_FOLDS {
                        for shifted in [xi + p as f64 * period, xi - p as f64 * period] {
                            acc += shifted.powi(s as i32) * m(kernel.fourier(shifted));
                        }
                    }
                }
                acc
            })
            .collect();
        // (iξ)^s: real for even s, imaginary and odd in ξ for odd s
        let unit = match s % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let odd = s % 2 == 1;
        let mut buf: Vec<Complex64> = (0..ring)
            .map(|k| {
                if odd && k == nyquist {
                    return Complex64::new(0.0, 0.0);
                }
                let v = if k <= nyquist {
                    half[k]
                } else if odd {
                    -half[ring - k]
                } else {
                    half[ring - k]
                };
                unit * v
            })
            .collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / (ring as f64 * h);
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(param(format!("W needs t > 0, got {t}")));
        }
        Ok(())
    }

    fn ring_values(&self, t: f64, s: u32) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        if s > 2 {
            return Err(param(format!("W derivative order must be 0, 1 or 2, got {s}")));
        }
        let vals = self.synthesize(s, |j| w_hat(j, t), |a| (-t).exp() * (a * t).exp_m1());
        self.check_wrap(&vals, t)?;
        Ok(vals)
    }

    fn check_wrap(&self, vals: &[f64], t: f64) -> Result<()> {
        let nyquist = self.ring_len() / 2;
        let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // odd derivatives vanish at the antipode itself
        let far = vals[nyquist - 1..=nyquist + 1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if far > WRAP_TOL * peak {
            return Err(Error::Truncation(format!(
                "W(·, {t}) is {far:.3e} at distance {} from the origin; the grid is too small for this time",
                nyquist as f64 * self.grid.h()
            )));
        }
        Ok(())
    }

    fn to_grid(&self, ring: &[f64], t: f64) -> Field {
        let n = self.grid.len();
        let c = self.grid.center_index();
        let len = ring.len();
        let values = (0..n).map(|i| ring[(i + len - c) % len]).collect();
        Field::from_parts(Arc::clone(&self.grid), values, t)
    }

    /// `∂_x^s W(·,t)` on the grid nodes.
    pub fn field(&self, t: f64, s: u32) -> Result<Field> {
        let ring = self.ring_values(t, s)?;
        Ok(self.to_grid(&ring, t))
    }

    /// `∂_x^s W(·,t)` on the whole ring, as `(x, value)` sorted by `x`.
    pub fn ring_field(&self, t: f64, s: u32) -> Result<(Vec<f64>, Vec<f64>)> {
        let ring = self.ring_values(t, s)?;
        let len = ring.len();
        let half = len / 2;
        let h = self.grid.h();
        let xs = (0..len).map(|k| (k as f64 - half as f64) * h).collect();
        let vals = (0..len).map(|k| ring[(k + half) % len]).collect();
        Ok((xs, vals))
    }

    /// `∂_t W(·,t)`, from the transform `e^{-t}((Ĵ-1)e^{Ĵt} + 1)`.
    pub fn time_derivative(&self, t: f64) -> Result<Field> {
        Self::check_time(t)?;
        let ring = self.synthesize(0, |j| w_hat_dt(j, t), |a| (-t).exp() * (1.0 + t) * a * (a * t).exp());
        self.check_wrap(&ring, t)?;
        Ok(self.to_grid(&ring, t))
    }
}

/// `∂_x^s W(·,t)` on `grid`, built from the grid weights of `kernel`.
///
/// This is the regular part of the semi-discrete problem: its node sum is
/// exactly `1 - e^{-t}` and it is nonnegative up to round-off. It differs
/// from samples of the continuous `W` by `O(h^4)`.
pub fn regular_part_w(grid: Arc<Grid>, t: f64, kernel: &Kernel, s: u32) -> Result<Field> {
    let dk = crate::domain::discretize_kernel(kernel, &grid)?;
    RegularPart::new(grid, Symbol::Lattice(dk))?.field(t, s)
}

/// Sets negative values to zero and returns the largest clipped magnitude.
pub fn clip_negative(field: &mut Field) -> f64 {
    let mut worst = 0.0f64;
    for v in field.values_mut() {
        if *v < 0.0 {
            worst = worst.max(-*v);
            *v = 0.0;
        }
    }
    if worst > 0.0 {
        log::debug!("clipped negative values of magnitude up to {worst:.3e} at t = {}", field.time());
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WFamily {
    /// `t^{(s+1)/2} sup |∂^s W|`.
    Sup,
    /// `t^{s/2} ∫ |∂^s W|`.
    L1,
    /// `sup_{|x| ≥ 5d} |∂^s W| |x|^{3+s} / t`.
    Tail,
}

#[derive(Clone, Debug, Serialize)]
pub struct WEstimateRow {
    pub t: f64,
    pub s: u32,
    pub sup_weighted: f64,
    pub l1_weighted: f64,
    pub tail_weighted: f64,
    /// The tail window `|x| ≥ 5d` reaches into the diffusive bulk, so the
    /// tail bound is sharp there and the row counts towards its ratio.
    pub tail_in_scope: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WEstimateReport {
    pub rows: Vec<WEstimateRow>,
}

/// Families whose max/min ratio over the time list reaches this are flagged.
pub const W_RATIO_BOUND: f64 = 10.0;

impl WEstimateReport {
    /// Max/min of a family over the rows with derivative order `s`.
    pub fn ratio(&self, family: WFamily, s: u32) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.s == s && (family != WFamily::Tail || r.tail_in_scope))
            .map(|r| match family {
                WFamily::Sup => r.sup_weighted,
                WFamily::L1 => r.l1_weighted,
                WFamily::Tail => r.tail_weighted,
            })
            .collect();
        if vals.len() < 2 {
            return 1.0;
        }
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn bounded(&self) -> bool {
        let mut orders: Vec<u32> = self.rows.iter().map(|r| r.s).collect();
        orders.dedup();
        orders
            .iter()
            .all(|&s| [WFamily::Sup, WFamily::L1, WFamily::Tail].iter().all(|&f| self.ratio(f, s) < W_RATIO_BOUND))
    }
}

/// Weighted sup, L¹ and tail norms of `∂_x^s W` over a time list.
pub fn check_w_estimates(grid: Arc<Grid>, kernel: &Kernel, times: &[f64], orders: &[u32]) -> Result<WEstimateReport> {
    if times.iter().any(|&t| t < 1.0) {
        return Err(param("W estimate times must be at least 1"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("W estimate times must be strictly increasing"));
    }
    let d = kernel.support();
    let q = kernel.diffusivity();
    let h = grid.h();
    let rp = RegularPart::new(grid, Symbol::Continuum(kernel.clone()))?;
    let mut rows = Vec::new();
    for &t in times {
        for &s in orders {
            let (xs, vals) = rp.ring_field(t, s)?;
            let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let l1 = vals.iter().map(|v| v.abs()).sum::<f64>() * h;
            let tail = xs
                .iter()
                .zip(&vals)
                .filter(|(x, _)| x.abs() >= 5.0 * d)
                .fold(0.0f64, |m, (x, v)| m.max(v.abs() * x.abs().powi(3 + s as i32) / t));
            rows.push(WEstimateRow {
                t,
                s,
                sup_weighted: sup * t.powf((s as f64 + 1.0) / 2.0),
                l1_weighted: l1 * t.powf(s as f64 / 2.0),
                tail_weighted: tail,
                tail_in_scope: 5.0 * d <= 2.0 * (2.0 * q * t).sqrt(),
            });
        }
    }
    Ok(WEstimateReport { rows })
}
