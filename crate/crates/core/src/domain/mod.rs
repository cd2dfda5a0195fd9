//! Hole geometry, the uniform grid on `[-X, X]`, fields on it and the
//! discrete nonlocal operator.

mod convolution;

pub use convolution::{
    apply_l, apply_l_into, convolve, convolve_fft_into, convolve_into, convolve_with, discretize_kernel,
    ConvolutionMethod, DiscreteKernel,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

fn config(msg: impl Into<String>) -> Error {
    Error::Configuration(msg.into())
}

/// A finite union of disjoint open intervals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoleGeometry {
    intervals: Vec<(f64, f64)>,
    inner_radius: f64,
    outer_radius: f64,
}

impl HoleGeometry {
    /// Validated hole: intervals are sorted, must be disjoint, and their
    /// union must contain a neighbourhood `(-a0, a0)` of the origin.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let geometry = Self::separated(intervals)?;
        if geometry.inner_radius <= 0.0 {
            return Err(config(format!(
                "hole {:?} must contain an interval (-a0, a0) around the origin",
                geometry.intervals
            )));
        }
        Ok(geometry)
    }

    /// Like [`HoleGeometry::new`] but the origin need not be covered, so
    /// the complement may have bounded components. The inner radius is then 0.
    pub fn separated(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(config("hole must contain at least one interval"));
        }
        for &(l, r) in &intervals {
            if !(l.is_finite() && r.is_finite() && l < r) {
                return Err(config(format!("hole interval ({l}, {r}) must be finite with left < right")));
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(config(format!("hole intervals {:?} and {:?} overlap", w[0], w[1])));
            }
        }
        let outer_radius = intervals.iter().fold(0.0f64, |m, &(l, r)| m.max(l.abs()).max(r.abs()));
        let inner_radius = intervals.iter().find(|&&(l, r)| l < 0.0 && r > 0.0).map_or(0.0, |&(l, r)| (-l).min(r));
        Ok(Self { intervals, inner_radius, outer_radius })
    }

    /// No hole at all; only meaningful for the whole-line problem.
    pub fn empty() -> Self {
        Self { intervals: Vec::new(), inner_radius: 0.0, outer_radius: 0.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Largest `a0` with `(-a0, a0)` inside the hole.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Smallest `a` with the hole inside `(-a, a)`.
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Strict membership in one of the open intervals, with a tolerance that
    /// keeps endpoints outside.
    pub fn contains_with_tol(&self, x: f64, tol: f64) -> bool {
        self.intervals.iter().any(|&(l, r)| x > l + tol && x < r - tol)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.contains_with_tol(x, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Dirichlet exterior problem with a nonempty hole.
    Exterior,
    /// Whole-line problem, no hole.
    Cauchy,
}

#[derive(Clone, Debug)]
pub struct Grid {
    half_extent: f64,
    h: f64,
    center: usize,
    mask: Vec<bool>,
    holes: HoleGeometry,
    mode: GridMode,
}

impl Grid {
    /// Uniform grid `x_i = -X + i h` with the hole mask.
    ///
    /// Requires `X/h` integral, `h ≤ d/10` and `X ≥ 10 max(a, d)`.
    pub fn new(half_extent: f64, h: f64, holes: HoleGeometry, kernel: &Kernel, mode: GridMode) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(config(format!("grid spacing h must be positive, got {h}")));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(config(format!("grid half-extent X must be positive, got {half_extent}")));
        }
        let ratio = half_extent / h;
        let center = ratio.round();
        if (ratio - center).abs() > 1e-9 * ratio.max(1.0) {
            return Err(config(format!("X/h must be an integer, got X = {half_extent}, h = {h}")));
        }
        let d = kernel.support();
        if h > d / 10.0 * (1.0 + 1e-12) {
            return Err(config(format!("grid spacing h = {h} exceeds the bound d/10 = {}", d / 10.0)));
        }
        let reach = holes.outer_radius().max(d);
        if half_extent < 10.0 * reach * (1.0 - 1e-12) {
            return Err(config(format!(
                "grid half-extent X = {half_extent} is below the bound 10·max(a, d) = {}",
                10.0 * reach
            )));
        }
        match (mode, holes.is_empty()) {
            (GridMode::Exterior, true) => return Err(config("exterior mode requires a nonempty hole")),
            (GridMode::Cauchy, false) => return Err(config("cauchy mode requires an empty hole")),
            _ => {}
        }
        let center = center as usize;
        let n = 2 * center + 1;
        let tol = 1e-9 * h;
        let mask = (0..n).map(|i| holes.contains_with_tol((i as f64 - center as f64) * h, tol)).collect();
        Ok(Self { half_extent: center as f64 * h, h, center, mask, holes, mode })
    }

    /// Warns and returns false when `X < 4 sqrt(q t_end)`.
    pub fn check_horizon(&self, q: f64, t_end: f64) -> bool {
        let needed = 4.0 * (q * t_end).sqrt();
        if self.half_extent < needed {
            log::warn!(
                "grid half-extent {} is below the truncation margin 4·sqrt(q·t_end) = {needed:.3}",
                self.half_extent
            );
            return false;
        }
        true
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Index of the node at `x = 0`.
    pub fn center_index(&self) -> usize {
        self.center
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.center as f64) * self.h
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Index of the node nearest to `x`, if `x` lies on the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = (x / self.h).round() + self.center as f64;
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn holes(&self) -> &HoleGeometry {
        &self.holes
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }
}

/// Values on the nodes of a grid at one time.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("field value at x = {} is not finite", grid.x(i))));
        }
        Ok(Self { grid, values, time })
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, time }
    }

    pub fn zeros(grid: Arc<Grid>, time: f64) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], time }
    }

    pub fn from_fn(grid: Arc<Grid>, time: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    /// Value at the node nearest to `x`.
    pub fn at(&self, x: f64) -> Option<f64> {
        self.grid.index_of(x).map(|i| self.values[i])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sets all masked nodes to zero.
    pub fn zero_masked(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(self.grid.mask()) {
            if m {
                *v = 0.0;
            }
        }
    }

    /// Largest absolute value on masked nodes.
    pub fn hole_violation(&self) -> f64 {
        self.values.iter().zip(self.grid.mask()).filter(|(_, &m)| m).fold(0.0f64, |acc, (v, _)| acc.max(v.abs()))
    }

    /// Linear interpolation between nodes; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let s = x / self.grid.h + self.grid.center as f64;
        if s < 0.0 || s > (self.len() - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.len() - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
