//! Error functionals measuring the approach to the dipole-type profile,
//! scaled solutions and numerical checks of the comparison barriers.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::diagnostics::Side;
use crate::domain::{apply_l, DiscreteKernel, Field, Grid};
use crate::error::{param, Error, Result};
use crate::evolution::Trajectory;
use crate::kernel::{dipole, gamma_q, Kernel, RegularPart};
use crate::quadrature;

/// Spatial windows separating the near, far and very far regimes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleWindow {
    /// Near field is `|x| ≤ t^near_exponent`.
    pub near_exponent: f64,
    /// Far band `[ξ₁, ξ₂]`, in units of `√t`.
    pub far_band: (f64, f64),
    /// Very far field is `|x| ≥ t^veryfar_exponent`.
    pub veryfar_exponent: f64,
}

impl Default for ScaleWindow {
    fn default() -> Self {
        Self { near_exponent: 0.4, far_band: (0.5, 2.0), veryfar_exponent: 0.6 }
    }
}

impl ScaleWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_exponent > 0.0 && self.near_exponent < 0.5 && self.veryfar_exponent > 0.5) {
            return Err(param(format!(
                "scale exponents must satisfy 0 < {} < 0.5 < {}",
                self.near_exponent, self.veryfar_exponent
            )));
        }
        if !(self.far_band.0 > 0.0 && self.far_band.0 < self.far_band.1) {
            return Err(param(format!("far band {:?} must satisfy 0 < ξ₁ < ξ₂", self.far_band)));
        }
        Ok(())
    }
}

/// `φ₀(x) Γ_q(x,t) / (q t)`, the removable form of `-2 (φ₀(x)/x) D_q(x,t)`.
pub fn asymptotic_profile(x: f64, t: f64, phi0: f64, q: f64) -> Result<f64> {
    Ok(phi0 * gamma_q(x, t, q)? / (q * t))
}

/// `-2 (φ₀(x)/x) D_q(x,t)`; undefined at `x = 0`.
pub fn asymptotic_profile_dipole_form(x: f64, t: f64, phi0: f64, q: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(param("the dipole form is singular at x = 0"));
    }
    Ok(-2.0 * phi0 / x * dipole(x, t, q)?)
}

/// `1 / (2 q^{3/2} √π)`: the limit of `t^{3/2} u(x,t) / φ₀(x)` at fixed `x`.
pub fn near_field_constant(q: f64) -> f64 {
    1.0 / (2.0 * q.powf(1.5) * PI.sqrt())
}

fn same_grid(u: &Field, other: &Field, what: &str) -> Result<()> {
    if u.len() != other.len() || u.grid().h() != other.grid().h() {
        return Err(Error::Configuration(format!("{what} lives on a different grid")));
    }
    Ok(())
}

fn weighted_sup(u: &Field, t: f64, reference: impl Fn(usize, f64) -> Result<f64>) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(param(format!("weighted error needs t >= 1, got {t}")));
    }
    let w = t.powf(1.5);
    let mut sup = 0.0f64;
    for (i, &v) in u.values().iter().enumerate() {
        let x = u.x(i);
        sup = sup.max(w / (x.abs() + 1.0) * (v - reference(i, x)?).abs());
    }
    Ok(sup)
}

/// `sup_x t^{3/2}/(|x|+1) |u - φ₀Γ_q/(qt)|` at the stamp of `u`.
pub fn global_weighted_error(u: &Field, phi0: &Field, q: f64) -> Result<f64> {
    same_grid(u, phi0, "phi0")?;
    let t = u.time();
    weighted_sup(u, t, |i, x| asymptotic_profile(x, t, phi0.values()[i], q))
}

/// Same functional with `W(·,t)` in place of `Γ_q(·,t)`.
pub fn global_weighted_error_w(u: &Field, phi0: &Field, w: &Field, q: f64) -> Result<f64> {
    same_grid(u, phi0, "phi0")?;
    same_grid(u, w, "W")?;
    let t = u.time();
    weighted_sup(u, t, |i, _| Ok(phi0.values()[i] * w.values()[i] / (q * t)))
}

/// Nodes with `lo ≤ |x| ≤ hi` on one side.
fn band_nodes(grid: &Grid, side: Side, lo: f64, hi: f64) -> Result<Vec<usize>> {
    if hi > grid.half_extent() {
        return Err(Error::Configuration(format!(
            "window up to |x| = {hi} exceeds the grid half-extent {}",
            grid.half_extent()
        )));
    }
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.x(i);
            let inside = x.abs() >= lo && x.abs() <= hi;
            inside
                && match side {
                    Side::Plus => x > 0.0,
                    Side::Minus => x < 0.0,
                    Side::Both => true,
                }
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::Configuration(format!("no grid nodes with {lo} <= |x| <= {hi}")));
    }
    Ok(nodes)
}

/// `sup t |u(x) + 2 M̄ D_q(|x|, t)|` over `ξ₁√t ≤ |x| ≤ ξ₂√t` on one side.
/// On the negative side the dipole is mirrored, so the profile is positive
/// on both sides.
pub fn far_field_error(u: &Field, m_bar: f64, side: Side, q: f64, band: (f64, f64)) -> Result<f64> {
    let t = u.time();
    let grid = u.grid();
    let a = grid.holes().outer_radius();
    let (lo, hi) = (band.0 * t.sqrt(), band.1 * t.sqrt());
    if lo <= a + 1.0 {
        return Err(param(format!("far band starts at {lo}, inside a + 1 = {}", a + 1.0)));
    }
    if side == Side::Both {
        return Ok(far_field_error(u, m_bar, Side::Plus, q, band)?.max(far_field_error(
            u,
            m_bar,
            Side::Minus,
            q,
            band,
        )?));
    }
    let mut sup = 0.0f64;
    for i in band_nodes(grid, side, lo, hi)? {
        let x = grid.x(i).abs();
        sup = sup.max(t * (u.values()[i] + 2.0 * m_bar * dipole(x, t, q)?).abs());
    }
    Ok(sup)
}

/// `sup_{|x| ≥ t^p} t u(x,t)`.
pub fn very_far_field_sup(u: &Field, exponent: f64) -> Result<f64> {
    let t = u.time();
    let lo = t.powf(exponent);
    let grid = u.grid();
    if lo >= grid.half_extent() {
        return Err(Error::Configuration(format!(
            "very far window |x| >= {lo} lies outside the grid (X = {}); enlarge the grid for this horizon",
            grid.half_extent()
        )));
    }
    let sup =
        band_nodes(grid, Side::Both, lo, grid.half_extent())?.into_iter().map(|i| u.values()[i]).fold(0.0, f64::max);
    Ok(t * sup)
}

/// `t^{3/2} u(x,t) / (φ₀(x) / (2 q^{3/2} √π))` at a probe point.
pub fn near_field_ratio(u: &Field, phi0: &Field, q: f64, x: f64) -> Result<f64> {
    same_grid(u, phi0, "phi0")?;
    let p = phi0.interpolate(x);
    if !(p > 0.0) {
        return Err(param(format!("probe x = {x} has phi0 = {p}; choose a point outside the hole")));
    }
    Ok(u.time().powf(1.5) * u.interpolate(x) / (p * near_field_constant(q)))
}

/// `λ² u(a + λy, λ²t)` at the points `ys`, interpolated linearly in space.
pub fn scaled_solution(trajectory: &Trajectory, lambda: f64, a: f64, t: f64, ys: &[f64]) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && t > 0.0) {
        return Err(param(format!("scaling needs λ > 0 and t > 0, got λ = {lambda}, t = {t}")));
    }
    let target = lambda * lambda * t;
    let tol = 1e-6 * target.max(1.0);
    let snap = trajectory
        .snapshots
        .iter()
        .chain(std::iter::once(&trajectory.final_state))
        .find(|f| (f.time() - target).abs() <= tol)
        .ok_or_else(|| param(format!("no snapshot at λ²t = {target}")))?;
    Ok(ys.iter().map(|y| lambda * lambda * snap.interpolate(a + lambda * y)).collect())
}

/// A functional sampled at several times.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub name: String,
    pub rows: Vec<(f64, f64)>,
    /// Times on which the decrease verdict is judged.
    pub window: (f64, f64),
}

impl ErrorReport {
    pub fn new(name: impl Into<String>, window: (f64, f64)) -> Self {
        Self { name: name.into(), rows: Vec::new(), window }
    }

    pub fn collect(
        name: &str,
        window: (f64, f64),
        fields: &[&Field],
        f: impl Fn(&Field) -> Result<f64>,
    ) -> Result<Self> {
        let mut r = Self::new(name, window);
        for u in fields {
            r.rows.push((u.time(), f(u)?));
        }
        Ok(r)
    }

    /// Strict decrease over the rows inside the window. `None` with fewer
    /// than four rows in total or fewer than two in the window.
    pub fn verdict(&self) -> Option<bool> {
        let tail = self.tail();
        if self.rows.len() < 4 || tail.len() < 2 {
            return None;
        }
        Some(tail.windows(2).all(|w| w[1].1 < w[0].1))
    }

    pub fn tail(&self) -> Vec<(f64, f64)> {
        let tol = 1e-9 * self.window.1.abs().max(1.0);
        self.rows.iter().copied().filter(|(t, _)| *t >= self.window.0 - tol && *t <= self.window.1 + tol).collect()
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.rows.iter().find(|(s, _)| (s - t).abs() <= 1e-6 * t.abs().max(1.0)).map(|r| r.1)
    }
}

/// Parameters of the barriers `V` (Gaussian-type supersolution near the
/// origin) and `R`, `w±` (correctors around `φ₀W/(qt)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierParams {
    pub alpha: f64,
    pub b: f64,
    pub t_barrier: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub k: f64,
    pub delta: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    pub t0: f64,
    pub d: f64,
    pub a0: f64,
}

/// `∫_{max(d - 2a₀, 0)}^{d} J`.
fn tail_mass(kernel: &Kernel, a0: f64) -> f64 {
    let d = kernel.support();
    quadrature::adaptive(&|y| kernel.eval(y), (d - 2.0 * a0).max(0.0), d, 1e-13)
}

impl BarrierParams {
    /// Defaults: `α = 2q/(5√e)`, `b` the larger of `5d` and the size needed
    /// near the hole, `T` the largest of the waiting times required by the
    /// supersolution argument; `γ = 0.6`, `κ = 0.2`, `K± = 1`, `δ` the
    /// largest value for which the corrector inequality holds and
    /// `t₀ = (d/δ)²`.
    pub fn default_for(kernel: &Kernel, a0: f64) -> Result<Self> {
        let d = kernel.support();
        let q = kernel.diffusivity();
        if !(a0 > 0.0) {
            return Err(param("barriers need a hole around the origin (a0 > 0)"));
        }
        let alpha = 2.0 * q / (5.0 * 0.5f64.exp());
        let mut b = 5.0 * d;
        if d > 2.0 * a0 {
            b = b.max((d - a0) * (d - 2.0 * a0) / a0 + d - a0);
        }
        let gamma = 0.6;
        let kappa = 0.2;
        let k = (2.0 * d - a0).powf(gamma) / tail_mass(kernel, a0);
        let mut p =
            Self { alpha, b, t_barrier: 0.0, kappa, gamma, k, delta: 0.0, k_plus: 1.0, k_minus: 1.0, t0: 0.0, d, a0 };
        p.t_barrier = p.waiting_time();
        p.delta = p.largest_delta(q)?;
        p.t0 = (d / p.delta).powi(2);
        Ok(p)
    }

    /// Smallest `T` meeting every largeness condition of the `V` argument.
    pub fn waiting_time(&self) -> f64 {
        let (d, a0, b, alpha) = (self.d, self.a0, self.b, self.alpha);
        // d/√(αT) + d²/(4αT) ≤ 1/2
        let s = 6f64.sqrt() - 2.0;
        let mut t = (d / s).powi(2) / alpha;
        t = t.max((a0 + b).powi(2) / (4.0 * alpha));
        t = t.max(d / (4.0 * alpha));
        if d > 2.0 * a0 {
            let shrink = -(1.0 - 2.0 * a0 / (b + d - a0)).ln();
            t = t.max(b * (d - a0) / (alpha * shrink));
            t = t.max((2.0 * d - a0 + b).powi(2) / (2.0 * alpha));
        }
        t
    }

    /// Left side of the corrector inequality minus its target, per unit of
    /// `(|x|+d)^{γ-2} t^{-(3+κ)/2}`.
    fn corrector_margin(&self, q: f64, delta: f64) -> f64 {
        let (g, kap, d) = (self.gamma, self.kappa, self.d);
        let c = (3.0 + kap) / 2.0;
        -c * (2.0 * delta).powi(2) - self.k * c * (2.0 * delta).powf(2.0 - g) * (delta / d).powf(g)
            + q / 4.0 * g * (1.0 - g)
            - q / 8.0 * g * (1.0 - g)
    }

    fn largest_delta(&self, q: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, 1.0);
        if self.corrector_margin(q, hi) >= 0.0 {
            return Ok(1.0 - f64::EPSILON);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.corrector_margin(q, mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !(lo > 0.0) {
            return Err(param("no admissible delta for the corrector"));
        }
        Ok(lo)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.alpha > 0.0) {
            v.push(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.b >= 5.0 * self.d * (1.0 - 1e-12)) {
            v.push(format!("b = {} must be at least 5d = {}", self.b, 5.0 * self.d));
        }
        if !(self.gamma > 0.2 && self.gamma < 1.0) {
            v.push(format!("gamma = {} must lie in (1/5, 1)", self.gamma));
        }
        if !(self.kappa > 0.0 && self.kappa < self.gamma - 0.2) {
            v.push(format!("kappa = {} must lie in (0, gamma - 1/5)", self.kappa));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            v.push(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.k_plus >= 1.0 && self.k_minus >= 1.0) {
            v.push(format!("K+ = {}, K- = {} must be at least 1", self.k_plus, self.k_minus));
        }
        if !(self.k > 0.0 && self.a0 > 0.0 && self.t_barrier > 0.0 && self.t0 > 0.0) {
            v.push("k, a0, T and t0 must be positive".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(param(v.join("; ")))
        }
    }

    /// `V` with unit constant: `(|x|+b) t^{-3/2} e^{-(|x|+b)²/(4αt)}` for
    /// `|x| ≥ a₀`, zero inside.
    pub fn v(&self, x: f64, t: f64) -> f64 {
        if x.abs() < self.a0 {
            return 0.0;
        }
        let z = x.abs() + self.b;
        z * t.powf(-1.5) * (-z * z / (4.0 * self.alpha * t)).exp()
    }

    pub fn v_dt(&self, x: f64, t: f64) -> f64 {
        if x.abs() < self.a0 {
            return 0.0;
        }
        let z = x.abs() + self.b;
        self.v(x, t) * (z * z / (4.0 * self.alpha * t * t) - 1.5 / t)
    }

    pub fn in_v_region(&self, x: f64, t: f64) -> bool {
        x.abs() >= self.a0 && (x.abs() + self.b).powi(2) <= 4.0 * self.alpha * t
    }

    /// `((|x|+d)^γ + k) t^{-(3+κ)/2}` for `|x| ≥ a₀`, zero inside.
    pub fn r(&self, x: f64, t: f64) -> f64 {
        if x.abs() < self.a0 {
            return 0.0;
        }
        ((x.abs() + self.d).powf(self.gamma) + self.k) * t.powf(-(3.0 + self.kappa) / 2.0)
    }

    pub fn r_dt(&self, x: f64, t: f64) -> f64 {
        -(3.0 + self.kappa) / 2.0 * self.r(x, t) / t
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierVRow {
    pub t: f64,
    pub points: usize,
    /// `min (∂_t V - L_h V)` over the region.
    pub min_residual: f64,
    /// `min_residual / sup |∂_t V|`.
    pub min_relative: f64,
    /// `sup |L_h V - L V|` against adaptive quadrature.
    pub eps_h: f64,
    /// `min (∂_t V - L V)` with the quadrature operator.
    pub min_residual_continuum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierVReport {
    pub params: BarrierParams,
    pub h: f64,
    pub rows: Vec<BarrierVRow>,
}

impl BarrierVReport {
    pub fn min_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.min_residual).fold(f64::INFINITY, f64::min)
    }

    pub fn eps_h(&self) -> f64 {
        self.rows.iter().map(|r| r.eps_h).fold(0.0, f64::max)
    }
}

/// `∫ J(y) f(x - y) dy - f(x)` by adaptive quadrature, split where `f`
/// jumps (at `x - y = ±a₀`).
fn l_quadrature(kernel: &Kernel, f: &dyn Fn(f64) -> f64, x: f64, a0: f64) -> f64 {
    let d = kernel.support();
    let mut breaks = vec![-d, d];
    for c in [x - a0, x + a0] {
        if c > -d && c < d {
            breaks.push(c);
        }
    }
    breaks.sort_by(f64::total_cmp);
    quadrature::adaptive_segments(&|y| kernel.eval(y) * f(x - y), &breaks, 1e-16) - f(x)
}

/// Residual of `V` on the nodes of `grid` with `|x| ≥ a₀` inside the
/// parabolic region, for each `t ≥ T`.
pub fn verify_barrier_v(
    params: &BarrierParams,
    kernel: &Kernel,
    grid: &Arc<Grid>,
    t_samples: &[f64],
) -> Result<BarrierVReport> {
    params.validate()?;
    let dk = DiscreteKernel::new(kernel, grid.h())?;
    let mut rows = Vec::new();
    for &t in t_samples {
        if t < params.t_barrier * (1.0 - 1e-12) {
            return Err(param(format!("sample t = {t} precedes T = {}", params.t_barrier)));
        }
        let v = Field::from_fn(grid.clone(), t, |x| params.v(x, t));
        let lv = apply_l(&v, &dk);
        let nodes: Vec<usize> = (0..grid.len()).filter(|&i| params.in_v_region(grid.x(i), t)).collect();
        if nodes.is_empty() {
            return Err(param(format!("the region of V is empty at t = {t}")));
        }
        let reach = nodes.iter().map(|&i| grid.x(i).abs()).fold(0.0, f64::max) + kernel.support();
        if reach > grid.half_extent() {
            return Err(Error::Configuration(format!("V region needs the grid to reach {reach}")));
        }
        let f = |x: f64| params.v(x, t);
        let (mut min_res, mut min_cont, mut eps, mut sup_dt) = (f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
        for &i in &nodes {
            let x = grid.x(i);
            let dt = params.v_dt(x, t);
            let lq = l_quadrature(kernel, &f, x, params.a0);
            min_res = min_res.min(dt - lv.values()[i]);
            min_cont = min_cont.min(dt - lq);
            eps = eps.max((lv.values()[i] - lq).abs());
            sup_dt = sup_dt.max(dt.abs());
        }
        rows.push(BarrierVRow {
            t,
            points: nodes.len(),
            min_residual: min_res,
            min_relative: min_res / sup_dt,
            eps_h: eps,
            min_residual_continuum: min_cont,
        });
    }
    Ok(BarrierVReport { params: *params, h: grid.h(), rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinedBoundReport {
    pub fit_time: f64,
    /// Smallest `C` with `u ≤ C V` on the region at the fit time.
    pub region_constant: f64,
    /// Smallest `C` with `‖u(t)‖_∞ ≤ C V` on the layer of width `d` outside
    /// the region, over the sup-norm samples from the fit time on.
    pub layer_constant: f64,
    /// `(t, max u / (C V))` at the later snapshots, `C` the larger constant.
    pub rows: Vec<(f64, f64)>,
}

impl RefinedBoundReport {
    pub fn constant(&self) -> f64 {
        self.region_constant.max(self.layer_constant)
    }

    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.1 <= 1.0 + 1e-9)
    }
}

/// Checks `u ≤ C V` on the region of `V` at the later snapshots, with `C`
/// large enough at the first snapshot on the region and, through the
/// sup-norm series `(t, ‖u(t)‖_∞)`, on the outer layer at all sampled times.
pub fn refined_bound_check(
    params: &BarrierParams,
    snapshots: &[&Field],
    sup_norms: &[(f64, f64)],
) -> Result<RefinedBoundReport> {
    let (first, rest) = snapshots.split_first().ok_or_else(|| param("no snapshots"))?;
    let fit_time = first.time();
    if fit_time < params.t_barrier * (1.0 - 1e-9) {
        return Err(param(format!("fit time {fit_time} precedes T = {}", params.t_barrier)));
    }
    let worst = |u: &Field| -> Result<f64> {
        let t = u.time();
        let grid = u.grid();
        let ratios: Vec<f64> = (0..u.len())
            .filter(|&i| !grid.is_masked(i) && params.in_v_region(grid.x(i), t))
            .map(|i| u.values()[i] / params.v(grid.x(i), t))
            .collect();
        if ratios.is_empty() {
            return Err(param(format!("the region of V has no free nodes at t = {t}")));
        }
        Ok(ratios.into_iter().fold(f64::NEG_INFINITY, f64::max))
    };
    let region_constant = worst(first)?;
    let t_last = rest.last().map_or(fit_time, |u| u.time());
    let layer: Vec<f64> = sup_norms
        .iter()
        .filter(|(t, _)| *t >= fit_time * (1.0 - 1e-12) && *t <= t_last * (1.0 + 1e-12))
        .map(|&(t, sup)| {
            // V decreases in |x| across the layer, so its minimum sits on the outer edge
            let edge = (4.0 * params.alpha * t).sqrt() + params.d - params.b;
            sup / params.v(edge, t)
        })
        .collect();
    if layer.is_empty() {
        return Err(param(format!("no sup-norm samples in [{fit_time}, {t_last}]")));
    }
    let layer_constant = layer.into_iter().fold(0.0, f64::max);
    let constant = region_constant.max(layer_constant);
    let rows = rest.iter().map(|u| Ok((u.time(), worst(u)? / constant))).collect::<Result<_>>()?;
    Ok(RefinedBoundReport { fit_time, region_constant, layer_constant, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectorRow {
    pub t: f64,
    pub points: usize,
    /// `min (∂_t R - L_h R) t^{(3+κ)/2} (|x|+d)^{2-γ}` on `a₀ ≤ |x| ≤ δ√t`.
    pub min_weighted: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VResidualRow {
    pub t: f64,
    /// `sup |∂_t v - L_h v| t^{12/5}` on free nodes with `|x| ≤ √t`.
    pub weighted_sup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierSignRow {
    pub t: f64,
    /// `min (∂_t - L_h) w₊` on free nodes with `|x| ≤ δ√t`.
    pub w_plus_min: f64,
    /// `max (∂_t - L_h) w₋` on the same nodes.
    pub w_minus_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierWReport {
    pub params: BarrierParams,
    pub corrector: Vec<CorrectorRow>,
    /// `(q/8) γ (1-γ)`, the continuum lower bound for the corrector rows.
    pub corrector_bound: f64,
    pub v_residual: Vec<VResidualRow>,
    pub signs: Vec<BarrierSignRow>,
}

/// Largest ratio between successive weighted `v` residuals still counted as bounded.
pub const V_RESIDUAL_GROWTH: f64 = 2.0;

impl BarrierWReport {
    pub fn corrector_constant(&self) -> f64 {
        self.corrector.iter().map(|r| r.min_weighted).fold(f64::INFINITY, f64::min)
    }

    pub fn v_residual_growth(&self) -> f64 {
        self.v_residual.windows(2).map(|w| w[1].weighted_sup / w[0].weighted_sup).fold(0.0, f64::max)
    }

    pub fn v_residual_bounded(&self) -> bool {
        self.v_residual.iter().all(|r| r.weighted_sup.is_finite()) && self.v_residual_growth() <= V_RESIDUAL_GROWTH
    }

    pub fn signs_hold(&self) -> bool {
        self.signs.iter().all(|r| r.w_plus_min > 0.0 && r.w_minus_max < 0.0)
    }
}

/// `(∂_t - L_h) v` on the grid of `phi0` at time `t`.
fn v_residual(dk: &DiscreteKernel, phi0: &Field, w_eval: &RegularPart, q: f64, t: f64) -> Result<Vec<f64>> {
    let grid = phi0.grid();
    let w = w_eval.field(t, 0)?;
    let w_dt = w_eval.time_derivative(t)?;
    let p = phi0.values();
    let v = Field::from_parts(grid.clone(), p.iter().zip(w.values()).map(|(f, w)| f * w / (q * t)).collect(), t);
    let lv = apply_l(&v, dk);
    Ok((0..grid.len())
        .map(|i| p[i] * (w_dt.values()[i] / (q * t) - w.values()[i] / (q * t * t)) - lv.values()[i])
        .collect())
}

fn r_residual(params: &BarrierParams, dk: &DiscreteKernel, grid: &Arc<Grid>, t: f64) -> Vec<f64> {
    let r = Field::from_fn(grid.clone(), t, |x| params.r(x, t));
    let lr = apply_l(&r, dk);
    (0..grid.len()).map(|i| params.r_dt(grid.x(i), t) - lr.values()[i]).collect()
}

/// `(∂_t - L_h) w₊` and `(∂_t - L_h) w₋` at every node.
fn w_residuals(
    params: &BarrierParams,
    dk: &DiscreteKernel,
    phi0: &Field,
    w_eval: &RegularPart,
    q: f64,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let res_r = r_residual(params, dk, phi0.grid(), t);
    let res_v = v_residual(dk, phi0, w_eval, q, t)?;
    let plus = res_v.iter().zip(&res_r).map(|(v, r)| v + params.k_plus * r).collect();
    let minus = res_v.iter().zip(&res_r).map(|(v, r)| v - params.k_minus * r).collect();
    Ok((plus, minus))
}

/// Weighted residual of the corrector `R` on `a₀ ≤ |x| ≤ δ√t` for each
/// `t ≥ t₀`.
pub fn verify_corrector(
    params: &BarrierParams,
    kernel: &Kernel,
    grid: &Arc<Grid>,
    t_samples: &[f64],
) -> Result<Vec<CorrectorRow>> {
    params.validate()?;
    let dk = DiscreteKernel::new(kernel, grid.h())?;
    let (g, kap, d) = (params.gamma, params.kappa, params.d);
    let mut rows = Vec::new();
    for &t in t_samples {
        if t < params.t0 * (1.0 - 1e-12) {
            return Err(param(format!("sample t = {t} precedes t0 = {}", params.t0)));
        }
        let reach = params.delta * t.sqrt();
        if reach + kernel.support() > grid.half_extent() {
            return Err(Error::Configuration(format!("corrector region needs the grid to reach {}", reach + d)));
        }
        let nodes: Vec<usize> =
            (0..grid.len()).filter(|&i| grid.x(i).abs() >= params.a0 && grid.x(i).abs() <= reach).collect();
        if nodes.is_empty() {
            return Err(param(format!("corrector region is empty at t = {t}")));
        }
        let res = r_residual(params, &dk, grid, t);
        let scale = t.powf((3.0 + kap) / 2.0);
        let min_weighted =
            nodes.iter().map(|&i| res[i] * scale * (grid.x(i).abs() + d).powf(2.0 - g)).fold(f64::INFINITY, f64::min);
        rows.push(CorrectorRow { t, points: nodes.len(), min_weighted });
    }
    Ok(rows)
}

/// Checks the corrector `R` and the signs of `(∂_t - L_h) w±` on
/// `t_samples ≥ t₀`, and the defect of `v = φ₀W/(qt)` at `v_times`.
pub fn verify_barrier_w(
    params: &BarrierParams,
    kernel: &Kernel,
    phi0: &Field,
    w_eval: &RegularPart,
    t_samples: &[f64],
    v_times: &[f64],
) -> Result<BarrierWReport> {
    let grid = phi0.grid();
    let corrector = verify_corrector(params, kernel, grid, t_samples)?;
    let dk = DiscreteKernel::new(kernel, grid.h())?;
    let q = kernel.diffusivity();
    let mut signs = Vec::new();
    for &t in t_samples {
        let (plus, minus) = w_residuals(params, &dk, phi0, w_eval, q, t)?;
        let reach = params.delta * t.sqrt();
        let (mut wp, mut wm) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in (0..grid.len()).filter(|&i| !grid.is_masked(i) && grid.x(i).abs() <= reach) {
            wp = wp.min(plus[i]);
            wm = wm.max(minus[i]);
        }
        signs.push(BarrierSignRow { t, w_plus_min: wp, w_minus_max: wm });
    }
    let mut v_rows = Vec::new();
    for &t in v_times {
        if !(t >= 1.0) {
            return Err(param(format!("v residual needs t >= 1, got {t}")));
        }
        let res_v = v_residual(&dk, phi0, w_eval, q, t)?;
        let sup = band_nodes(grid, Side::Both, 0.0, t.sqrt())?
            .into_iter()
            .filter(|&i| !grid.is_masked(i))
            .map(|i| res_v[i].abs())
            .fold(0.0, f64::max);
        v_rows.push(VResidualRow { t, weighted_sup: sup * t.powf(2.4) });
    }
    let g = params.gamma;
    Ok(BarrierWReport {
        params: *params,
        corrector,
        corrector_bound: q / 8.0 * g * (1.0 - g),
        v_residual: v_rows,
        signs,
    })
}

#[cfg(test)]
mod tests;
