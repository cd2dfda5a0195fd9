//! Stationary profiles: `Lφ = 0` off the hole, `φ = 0` on it, with linear
//! growth `b^±` at `±∞`, solved on the grid with the growth envelope
//! imposed on a collar of width `d` at both ends.

mod banded;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{side_integral, Side};
use crate::domain::{apply_l, convolve_into, discretize_kernel, DiscreteKernel, Field, Grid, HoleGeometry};
use crate::error::{param, Error, Result};
use crate::kernel::Kernel;
use crate::quadrature;
use banded::BandedSpd;

/// Tolerance for the sign checks of the discrete barriers.
pub const BARRIER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub b_plus: f64,
    pub b_minus: f64,
}

impl GrowthSpec {
    pub fn new(b_plus: f64, b_minus: f64) -> Result<Self> {
        if !(b_plus >= 0.0 && b_minus >= 0.0 && b_plus.is_finite() && b_minus.is_finite()) {
            return Err(param(format!("growth slopes must be finite and nonnegative, got ({b_plus}, {b_minus})")));
        }
        if b_plus == 0.0 && b_minus == 0.0 {
            return Err(param("growth slopes are both zero; the only such profile is φ = 0"));
        }
        Ok(Self { b_plus, b_minus })
    }

    /// `max{b⁺x, -b⁻x}`.
    pub fn envelope(&self, x: f64) -> f64 {
        (self.b_plus * x).max(-self.b_minus * x)
    }

    /// `max{b⁺(x-a), -b⁻(x+a)}`, the collar data.
    pub fn shifted_envelope(&self, x: f64, a: f64) -> f64 {
        (self.b_plus * (x - a)).max(-self.b_minus * (x + a))
    }
}

#[derive(Clone, Debug)]
pub struct Barrier {
    pub field: Field,
    /// Additive constant of the upper barrier; zero for the lower one.
    pub k: f64,
}

/// Smallest `k` for which `k + max{b⁺x, -b⁻x}` (zero on the hole) is a
/// supersolution off the hole.
pub fn upper_barrier_constant(spec: &GrowthSpec, holes: &HoleGeometry, kernel: &Kernel) -> Result<f64> {
    let a0 = holes.inner_radius();
    if a0 <= 0.0 {
        return Err(param("the upper barrier needs a hole containing a neighbourhood of the origin"));
    }
    let d = kernel.support();
    let mut k = (spec.b_plus * a0).max(spec.b_minus * a0);
    if d >= 2.0 * a0 {
        let nu = quadrature::adaptive(&|y| kernel.eval(y), d - 2.0 * a0, d, 1e-14);
        k = k.max((d - a0) * (spec.b_plus + spec.b_minus) / nu);
    }
    Ok(k)
}

/// First node index past the collar at each end.
fn collar_width(dk: &DiscreteKernel) -> usize {
    dk.radius()
}

fn is_free(grid: &Grid, collar: usize, i: usize) -> bool {
    i >= collar && i + collar < grid.len() && !grid.is_masked(i)
}

/// Upper barrier `S̄`, with `LS̄ ≤ 1e-10` checked at every unmasked node.
pub fn barrier_upper(spec: &GrowthSpec, kernel: &Kernel, grid: &Arc<Grid>) -> Result<Barrier> {
    let k = upper_barrier_constant(spec, grid.holes(), kernel)?;
    let mut field = Field::from_fn(Arc::clone(grid), 0.0, |x| k + spec.envelope(x));
    field.zero_masked();
    let dk = discretize_kernel(kernel, grid)?;
    let l = apply_l(&field, &dk);
    if let Some(i) = (0..grid.len()).find(|&i| !grid.is_masked(i) && l.values()[i] > BARRIER_TOL) {
        return Err(Error::InternalConsistency(format!(
            "upper barrier is not a supersolution at x = {}: LS = {:.3e}",
            grid.x(i),
            l.values()[i]
        )));
    }
    Ok(Barrier { field, k })
}

/// Lower barrier `S̲ = max{b⁺(x-a), -b⁻(x+a), 0}`, with `LS̲ ≥ -1e-10`
/// checked at unmasked nodes at least `d` away from the grid ends.
pub fn barrier_lower(spec: &GrowthSpec, kernel: &Kernel, grid: &Arc<Grid>) -> Result<Barrier> {
    let a = grid.holes().outer_radius();
    let field = Field::from_fn(Arc::clone(grid), 0.0, |x| spec.shifted_envelope(x, a).max(0.0));
    let dk = discretize_kernel(kernel, grid)?;
    let l = apply_l(&field, &dk);
    let collar = collar_width(&dk);
    if let Some(i) = (0..grid.len()).find(|&i| is_free(grid, collar, i) && l.values()[i] < -BARRIER_TOL) {
        return Err(Error::InternalConsistency(format!(
            "lower barrier is not a subsolution at x = {}: LS = {:.3e}",
            grid.x(i),
            l.values()[i]
        )));
    }
    Ok(Barrier { field, k: 0.0 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    /// Banded Cholesky solve of the linear system on the free nodes.
    #[default]
    Direct,
    /// Jacobi iteration `φ ← J*φ` on the free nodes.
    FixedPoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    #[default]
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: StationaryMethod,
    pub start: Start,
    pub tol: f64,
    /// Iteration cap for the fixed-point method; `200·X/h` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: StationaryMethod::Direct, start: Start::Lower, tol: 1e-10, max_iter: None }
    }
}

#[derive(Clone, Debug)]
pub struct StationaryProfile {
    field: Field,
    spec: GrowthSpec,
    upper_constant: Option<f64>,
    collar: usize,
    residual: f64,
    iterations: usize,
    method: StationaryMethod,
}

impl StationaryProfile {
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn spec(&self) -> GrowthSpec {
        self.spec
    }

    /// Constant `k` of the upper barrier, when the hole covers the origin.
    pub fn upper_constant(&self) -> Option<f64> {
        self.upper_constant
    }

    /// Number of collar nodes at each grid end.
    pub fn collar_width(&self) -> usize {
        self.collar
    }

    /// `(x, φ)` on the collar nodes.
    pub fn collar_values(&self) -> Vec<(f64, f64)> {
        let n = self.field.len();
        (0..self.collar).chain(n - self.collar..n).map(|i| (self.field.x(i), self.field.values()[i])).collect()
    }

    /// Sup of `|φ - J*φ|` over the free nodes at solve time.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn method(&self) -> StationaryMethod {
        self.method
    }

    /// Recomputes the residual with one operator application.
    pub fn verify_residual(&self, dk: &DiscreteKernel) -> f64 {
        free_residual(&self.field, dk, self.collar)
    }
}

fn free_residual(field: &Field, dk: &DiscreteKernel, collar: usize) -> f64 {
    let grid = field.grid();
    let l = apply_l(field, dk);
    (0..grid.len()).filter(|&i| is_free(grid, collar, i)).fold(0.0f64, |m, i| m.max(l.values()[i].abs()))
}

/// Boundary data on the collar, zero elsewhere.
fn collar_field(spec: &GrowthSpec, grid: &Arc<Grid>, collar: usize) -> Vec<f64> {
    let a = grid.holes().outer_radius();
    let n = grid.len();
    (0..n).map(|i| if i < collar || i + collar >= n { spec.shifted_envelope(grid.x(i), a) } else { 0.0 }).collect()
}

fn warn_on_collar_linearity(spec: &GrowthSpec, kernel: &Kernel, grid: &Grid) {
    let Ok(k) = upper_barrier_constant(spec, grid.holes(), kernel) else {
        return;
    };
    let x = grid.half_extent() - kernel.support();
    let a = grid.holes().outer_radius();
    // a side with zero slope has S̲ = 0 there, so only growing sides are compared
    let gaps: Vec<String> = [(x, spec.b_plus), (-x, spec.b_minus)]
        .into_iter()
        .filter(|&(_, slope)| slope > 0.0)
        .filter_map(|(side, _)| {
            let upper = k + spec.envelope(side);
            let gap = upper - spec.shifted_envelope(side, a).max(0.0);
            (gap > 0.01 * upper).then(|| format!("{:.1}% at x = {side}", 100.0 * gap / upper))
        })
        .collect();
    if !gaps.is_empty() {
        log::warn!(
            "collar data not yet in the linear regime (barrier gap {}); expect an O(1/X) truncation error",
            gaps.join(", ")
        );
    }
}

/// Jacobi iteration for the stationary problem, exposed step by step.
pub struct FixedPointIteration {
    grid: Arc<Grid>,
    dk: DiscreteKernel,
    collar: usize,
    phi: Vec<f64>,
    scratch: Vec<f64>,
    iterations: usize,
    last_update: f64,
    previous_update: f64,
}

impl FixedPointIteration {
    pub fn new(spec: &GrowthSpec, kernel: &Kernel, grid: &Arc<Grid>, start: Start) -> Result<Self> {
        let dk = discretize_kernel(kernel, grid)?;
        let collar = collar_width(&dk);
        let boundary = collar_field(spec, grid, collar);
        let initial = match start {
            Start::Lower => barrier_lower(spec, kernel, grid)?,
            Start::Upper => barrier_upper(spec, kernel, grid)?,
        };
        let phi = (0..grid.len())
            .map(|i| if is_free(grid, collar, i) { initial.field.values()[i] } else { boundary[i] })
            .collect();
        Ok(Self {
            grid: Arc::clone(grid),
            dk,
            collar,
            phi,
            scratch: vec![0.0; grid.len()],
            iterations: 0,
            last_update: f64::INFINITY,
            previous_update: f64::INFINITY,
        })
    }

    /// One sweep; returns the sup-norm of the update.
    pub fn step(&mut self) -> f64 {
        convolve_into(&self.phi, &self.dk, &mut self.scratch);
        let mut upd = 0.0f64;
        for i in 0..self.phi.len() {
            if is_free(&self.grid, self.collar, i) {
                upd = upd.max((self.scratch[i] - self.phi[i]).abs());
                self.phi[i] = self.scratch[i];
            }
        }
        self.iterations += 1;
        self.previous_update = self.last_update;
        self.last_update = upd;
        upd
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Contraction factor estimated from the last two updates.
    pub fn rate(&self) -> f64 {
        if self.previous_update.is_finite() && self.previous_update > 0.0 {
            (self.last_update / self.previous_update).min(1.0)
        } else {
            1.0
        }
    }

    /// Geometric bound on the distance to the fixed point.
    pub fn error_estimate(&self) -> f64 {
        let rho = self.rate();
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        self.last_update * rho / (1.0 - rho)
    }
}

fn solve_direct(boundary: &[f64], grid: &Grid, dk: &DiscreteKernel, collar: usize) -> Result<Vec<f64>> {
    let n = grid.len();
    let r = dk.radius();
    let m = n - 2 * collar;
    let mut a = BandedSpd::zeros(m, r);
    let mut rhs = vec![0.0; m];
    for row in 0..m {
        let i = row + collar;
        if grid.is_masked(i) {
            a.set(row, row, 1.0);
            continue;
        }
        a.set(row, row, 1.0 - dk.weight(0));
        for j in 1..=r.min(row) {
            if !grid.is_masked(i - j) {
                a.set(row, row - j, -dk.weight(j as isize));
            }
        }
        // collar nodes within reach
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(n - 1);
        rhs[row] = (lo..=hi)
            .filter(|&c| c < collar || c + collar >= n)
            .map(|c| dk.weight(i as isize - c as isize) * boundary[c])
            .sum();
    }
    a.factor()?;
    let mut phi = boundary.to_vec();
    let mut x = rhs.clone();
    a.solve(&mut x);
    phi[collar..collar + m].copy_from_slice(&x);
    // one step of iterative refinement
    let mut jphi = vec![0.0; n];
    convolve_into(&phi, dk, &mut jphi);
    let mut res: Vec<f64> = (0..m)
        .map(|row| {
            let i = row + collar;
            if grid.is_masked(i) {
                0.0
            } else {
                jphi[i] - phi[i]
            }
        })
        .collect();
    a.solve(&mut res);
    for (row, dr) in res.iter().enumerate() {
        phi[row + collar] += dr;
    }
    Ok(phi)
}

/// Solves `Lφ = 0` on the free nodes with the collar data of `spec`.
pub fn solve_stationary(
    spec: &GrowthSpec,
    kernel: &Kernel,
    grid: &Arc<Grid>,
    options: &SolverOptions,
) -> Result<StationaryProfile> {
    if !(options.tol > 0.0) {
        return Err(param(format!("solver tolerance must be positive, got {}", options.tol)));
    }
    let dk = discretize_kernel(kernel, grid)?;
    let collar = collar_width(&dk);
    warn_on_collar_linearity(spec, kernel, grid);
    let (values, iterations) = match options.method {
        StationaryMethod::Direct => {
            let boundary = collar_field(spec, grid, collar);
            (solve_direct(&boundary, grid, &dk, collar)?, 1)
        }
        StationaryMethod::FixedPoint => {
            let max_iter = options.max_iter.unwrap_or(200 * (grid.half_extent() / grid.h()).round() as usize);
            let mut it = FixedPointIteration::new(spec, kernel, grid, options.start)?;
            loop {
                let upd = it.step();
                if upd <= options.tol && it.error_estimate() <= options.tol {
                    break;
                }
                if it.iterations() >= max_iter {
                    return Err(Error::Convergence { iterations: it.iterations(), last_update: upd });
                }
            }
            let n = it.iterations();
            (it.phi, n)
        }
    };
    let mut field = Field::new(Arc::clone(grid), values, 0.0)?;
    field.zero_masked();
    let residual = free_residual(&field, &dk, collar);
    if residual > options.tol {
        return Err(Error::Discretization(format!(
            "stationary residual {residual:.3e} exceeds the tolerance {:.3e}",
            options.tol
        )));
    }
    let slack = 10.0 * options.tol;
    let lower = barrier_lower(spec, kernel, grid)?;
    if let Some(i) = (0..grid.len()).find(|&i| field.values()[i] < lower.field.values()[i] - slack) {
        return Err(Error::Discretization(format!("profile falls below the lower barrier at x = {}", grid.x(i))));
    }
    let upper_constant = if grid.holes().inner_radius() > 0.0 {
        let upper = barrier_upper(spec, kernel, grid)?;
        if let Some(i) = (0..grid.len()).find(|&i| field.values()[i] > upper.field.values()[i] + slack) {
            return Err(Error::Discretization(format!("profile exceeds the upper barrier at x = {}", grid.x(i))));
        }
        Some(upper.k)
    } else {
        log::info!("hole does not cover the origin; upper barrier check skipped");
        None
    };
    Ok(StationaryProfile { field, spec: *spec, upper_constant, collar, residual, iterations, method: options.method })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// At least one asymptotic first momentum is positive.
    Dipole,
    /// Both asymptotic first momenta vanish; the dipole profile is zero and
    /// solutions decay faster than it predicts.
    FastDecay,
}

#[derive(Clone, Debug)]
pub struct PhiFamily {
    pub phi_plus: StationaryProfile,
    pub phi_minus: StationaryProfile,
    pub phi_one: StationaryProfile,
    /// `∫ u0 φ₊`, the limit of the first momentum on the right.
    pub m_plus: f64,
    /// `∫ u0 φ₋`.
    pub m_minus: f64,
    /// `∫_{ℝ+} u0 φ₊`; differs from `m_plus` when `φ₊` is positive left of the hole.
    pub m_plus_half: f64,
    /// `∫_{ℝ-} u0 φ₋`.
    pub m_minus_half: f64,
    /// Profile with slopes `(M̄⁺, M̄⁻)`; absent in the fast-decay regime.
    pub phi_zero: Option<StationaryProfile>,
    pub regime: Regime,
}

/// `φ₊`, `φ₋`, `φ₁`, the asymptotic momenta of `u0` and `φ₀`.
pub fn phi_family(kernel: &Kernel, grid: &Arc<Grid>, u0: &Field, options: &SolverOptions) -> Result<PhiFamily> {
    let phi_plus = solve_stationary(&GrowthSpec::new(1.0, 0.0)?, kernel, grid, options)?;
    let phi_minus = solve_stationary(&GrowthSpec::new(0.0, 1.0)?, kernel, grid, options)?;
    let phi_one = solve_stationary(&GrowthSpec::new(1.0, 1.0)?, kernel, grid, options)?;
    let weighted = |profile: &StationaryProfile| -> Vec<f64> {
        u0.values().iter().zip(profile.field().values()).map(|(u, p)| u * p).collect()
    };
    let (wp, wm) = (weighted(&phi_plus), weighted(&phi_minus));
    let m_plus = side_integral(grid, &wp, Side::Both, |_| 1.0);
    let m_minus = side_integral(grid, &wm, Side::Both, |_| 1.0);
    let m_plus_half = side_integral(grid, &wp, Side::Plus, |_| 1.0);
    let m_minus_half = side_integral(grid, &wm, Side::Minus, |_| 1.0);
    let (phi_zero, regime) = if m_plus > 0.0 || m_minus > 0.0 {
        let spec = GrowthSpec::new(m_plus.max(0.0), m_minus.max(0.0))?;
        (Some(solve_stationary(&spec, kernel, grid, options)?), Regime::Dipole)
    } else {
        log::warn!("both asymptotic first momenta vanish: fast-decay regime, the dipole asymptotics are vacuous");
        (None, Regime::FastDecay)
    };
    Ok(PhiFamily { phi_plus, phi_minus, phi_one, m_plus, m_minus, m_plus_half, m_minus_half, phi_zero, regime })
}

/// Weighted derivative bounds of the bounded remainder `ψ = φ - max{b⁺x, -b⁻x}`.
#[derive(Clone, Debug, Serialize)]
pub struct PsiReport {
    #[serde(skip)]
    pub psi: Vec<f64>,
    #[serde(skip)]
    pub dpsi: Vec<Option<f64>>,
    #[serde(skip)]
    pub d2psi: Vec<Option<f64>>,
    /// Sup of `|ψ|` over free nodes.
    pub sup_psi: f64,
    /// Bound on `|ψ|` implied by the two barriers.
    pub psi_bound: Option<f64>,
    /// `|x|` windows `[5d, X/4]` and `[X/4, X/2]`.
    pub windows: [(f64, f64); 2],
    /// `sup |ψ'| |x|^{4/5}` per window.
    pub dpsi_weighted: [f64; 2],
    /// `sup |ψ''| |x|^{5/3}` per window.
    pub d2psi_weighted: [f64; 2],
    /// Round-off level of the weighted `ψ'` and `ψ''` sups in the outer
    /// window; growth below it is not meaningful.
    pub noise_floor: [f64; 2],
    pub bounded: bool,
}

/// Largest allowed growth of a weighted sup from the inner to the outer window.
pub const PSI_GROWTH_BOUND: f64 = 5.0;

impl PsiReport {
    /// Outer over inner window value for `ψ'`.
    pub fn dpsi_growth(&self) -> f64 {
        self.dpsi_weighted[1] / self.dpsi_weighted[0]
    }

    pub fn d2psi_growth(&self) -> f64 {
        self.d2psi_weighted[1] / self.d2psi_weighted[0]
    }
}

/// Fourth-order central differences of `ψ` on nodes whose five-point
/// stencil avoids the hole and the grid ends.
pub fn psi_diagnostics(profile: &StationaryProfile, kernel: &Kernel) -> PsiReport {
    let field = profile.field();
    let grid = field.grid();
    let spec = profile.spec();
    let n = grid.len();
    let h = grid.h();
    let psi: Vec<f64> = (0..n).map(|i| field.values()[i] - spec.envelope(grid.x(i))).collect();
    let stencil_ok = |i: usize| i >= 2 && i + 2 < n && (i - 2..=i + 2).all(|j| !grid.is_masked(j));
    let dpsi: Vec<Option<f64>> = (0..n)
        .map(|i| stencil_ok(i).then(|| (psi[i - 2] - 8.0 * psi[i - 1] + 8.0 * psi[i + 1] - psi[i + 2]) / (12.0 * h)))
        .collect();
    let d2psi: Vec<Option<f64>> = (0..n)
        .map(|i| {
            stencil_ok(i).then(|| {
                (-psi[i - 2] + 16.0 * psi[i - 1] - 30.0 * psi[i] + 16.0 * psi[i + 1] - psi[i + 2]) / (12.0 * h * h)
            })
        })
        .collect();
    let collar = profile.collar_width();
    let sup_psi = (0..n).filter(|&i| is_free(grid, collar, i)).fold(0.0f64, |m, i| m.max(psi[i].abs()));
    let a = grid.holes().outer_radius();
    let psi_bound = profile.upper_constant().map(|k| k.max(a * spec.b_plus.max(spec.b_minus)));
    let x_max = grid.half_extent();
    let windows = [(5.0 * kernel.support(), x_max / 4.0), (x_max / 4.0, x_max / 2.0)];
    let weighted_sup = |vals: &[Option<f64>], p: f64, (lo, hi): (f64, f64)| {
        (0..n)
            .filter(|&i| (lo..=hi).contains(&grid.x(i).abs()))
            .filter_map(|i| vals[i].map(|v| v.abs() * grid.x(i).abs().powf(p)))
            .fold(0.0f64, f64::max)
    };
    let dpsi_weighted = windows.map(|w| weighted_sup(&dpsi, 0.8, w));
    let d2psi_weighted = windows.map(|w| weighted_sup(&d2psi, 5.0 / 3.0, w));
    let scale = field.sup_norm() * f64::EPSILON * 100.0;
    let noise_floor = [scale / h * windows[1].1.powf(0.8), scale / (h * h) * windows[1].1.powf(5.0 / 3.0)];
    let growth_ok =
        |w: [f64; 2], floor: f64| w.iter().all(|v| v.is_finite()) && (w[1] <= PSI_GROWTH_BOUND * w[0] || w[1] <= floor);
    let bounded = growth_ok(dpsi_weighted, noise_floor[0])
        && growth_ok(d2psi_weighted, noise_floor[1])
        && psi_bound.is_none_or(|b| sup_psi <= b + 1e-9);
    PsiReport { psi, dpsi, d2psi, sup_psi, psi_bound, windows, dpsi_weighted, d2psi_weighted, noise_floor, bounded }
}
