//! Explicit time integration of `u_t = J*u - u` with `u = 0` on the hole,
//! and the representation-formula oracle for the hole-free problem.

use std::sync::Arc;

use log::warn;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{mass, second_momentum, MomentRow, MomentSeries};
use crate::domain::{apply_l_into, DiscreteKernel, Field, Grid, GridMode};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, RegularPart, Symbol};
use crate::stationary::StationaryProfile;

/// Largest admissible time step; the discrete `L` has spectrum in `[-2, 0]`.
pub const MAX_DT: f64 = 0.5;

/// Fraction of the grid (measured from each end) treated as the boundary layer.
const BOUNDARY_LAYER: f64 = 0.1;
const BOUNDARY_MASS_WARN: f64 = 1e-6;

/// Built-in initial profiles. Masked nodes are zeroed when sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// `amplitude` on `[left, right]`.
    Indicator {
        left: f64,
        right: f64,
        amplitude: f64,
    },
    /// `amplitude · exp(-(x - center)² / (2 width²))`.
    GaussianBump {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    TwoBumps {
        centers: [f64; 2],
        widths: [f64; 2],
        amplitudes: [f64; 2],
    },
    /// Linear interpolation of `(x, u)` pairs sorted by `x`, zero outside.
    Samples {
        points: Vec<(f64, f64)>,
    },
}

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        let bump = |c: f64, w: f64, a: f64| a * (-(x - c).powi(2) / (2.0 * w * w)).exp();
        match self {
            Self::Indicator { left, right, amplitude } => {
                if x >= *left && x <= *right {
                    *amplitude
                } else {
                    0.0
                }
            }
            Self::GaussianBump { center, width, amplitude } => bump(*center, *width, *amplitude),
            Self::TwoBumps { centers, widths, amplitudes } => {
                (0..2).map(|k| bump(centers[k], widths[k], amplitudes[k])).sum()
            }
            Self::Samples { points } => {
                let k = points.partition_point(|p| p.0 <= x);
                if k == 0 || k == points.len() {
                    return if points.last().is_some_and(|p| p.0 == x) { points[k - 1].1 } else { 0.0 };
                }
                let ((x0, u0), (x1, u1)) = (points[k - 1], points[k]);
                u0 + (u1 - u0) * (x - x0) / (x1 - x0)
            }
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InitialData(m));
        match self {
            Self::Indicator { left, right, .. } if !(left < right) => {
                bad(format!("indicator needs left < right, got [{left}, {right}]"))
            }
            Self::GaussianBump { width, .. } if !(*width > 0.0) => {
                bad(format!("bump width must be positive, got {width}"))
            }
            Self::TwoBumps { widths, .. } if widths.iter().any(|w| !(*w > 0.0)) => {
                bad(format!("bump widths must be positive, got {widths:?}"))
            }
            Self::Samples { points } if points.windows(2).any(|w| !(w[0].0 < w[1].0)) => {
                bad("sample abscissae must increase strictly".into())
            }
            Self::Samples { points } if points.is_empty() => bad("no samples".into()),
            _ => Ok(()),
        }
    }

    /// Samples the profile on `grid`, zero on masked nodes.
    pub fn sample(&self, grid: Arc<Grid>) -> Result<Field> {
        self.check()?;
        let mut f = Field::from_fn(grid, 0.0, |x| self.eval(x));
        f.zero_masked();
        if !f.is_finite() {
            return Err(Error::InitialData("profile produced non-finite values".into()));
        }
        Ok(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialDataFlags {
    pub nonnegative: bool,
    pub bounded: bool,
    pub zero_on_hole: bool,
    /// `Σ u₀ (1 + x²) h`.
    pub weighted_mass: f64,
    /// Share of the mass within the outer tenth of the grid.
    pub boundary_mass_fraction: f64,
}

/// Initial datum that passed [`validate_initial_data`].
#[derive(Clone, Debug)]
pub struct InitialData {
    field: Field,
    flags: InitialDataFlags,
}

impl InitialData {
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn flags(&self) -> &InitialDataFlags {
        &self.flags
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }
}

pub fn validate_initial_data(u0: Field) -> Result<InitialData> {
    let grid = Arc::clone(u0.grid());
    if !u0.is_finite() {
        return Err(Error::InitialData("initial datum is not finite".into()));
    }
    if let Some((i, v)) = u0.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::InitialData(format!("negative value {v} at x = {}", grid.x(i))));
    }
    if let Some((i, v)) = u0.values().iter().enumerate().find(|(i, v)| grid.is_masked(*i) && **v != 0.0) {
        return Err(Error::InitialData(format!("value {v} inside the hole at x = {}", grid.x(i))));
    }
    let m = mass(&u0);
    let edge = (1.0 - BOUNDARY_LAYER) * grid.half_extent();
    let h = grid.h();
    let near_edge: f64 =
        u0.values().iter().enumerate().filter(|(i, _)| grid.x(*i).abs() >= edge).map(|(_, v)| v * h).sum();
    let fraction = if m > 0.0 { near_edge / m } else { 0.0 };
    if fraction > BOUNDARY_MASS_WARN {
        warn!("{:.2e} of the initial mass lies within {} of the grid ends", fraction, grid.half_extent() - edge);
    }
    let flags = InitialDataFlags {
        nonnegative: true,
        bounded: true,
        zero_on_hole: true,
        weighted_mass: m + second_momentum(&u0),
        boundary_mass_fraction: fraction,
    };
    Ok(InitialData { field: u0, flags })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub snapshot_times: Vec<f64>,
    /// Recorded in manifests. Reductions always run in a fixed order.
    pub deterministic: bool,
    /// Diagnostics are recorded every `diag_every` steps and at the last step.
    pub diag_every: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_end: 400.0,
            scheme: Scheme::Rk4,
            snapshot_times: vec![25.0, 50.0, 100.0, 200.0, 400.0],
            deterministic: true,
            diag_every: 1,
        }
    }
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64, snapshot_times: Vec<f64>) -> Result<Self> {
        let c = Self { dt, t_end, snapshot_times, ..Self::default() };
        c.validate()?;
        Ok(c)
    }

    /// All violations, joined.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            v.push(format!("dt = {} violates the stability bound 0 < dt <= {MAX_DT}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            v.push(format!("t_end = {} must be positive", self.t_end));
        } else if self.dt > 0.0 {
            let steps = self.t_end / self.dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                v.push(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt));
            }
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            v.push("snapshot times must increase strictly".into());
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) {
            v.push(format!("snapshot times must lie in [0, {}]", self.t_end));
        }
        if self.diag_every == 0 {
            v.push("diag_every must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Configuration(v.join("; ")))
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn snapshot_steps(&self) -> Result<Vec<usize>> {
        let steps: Vec<usize> = self.snapshot_times.iter().map(|t| (t / self.dt).round() as usize).collect();
        if steps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Configuration(format!(
                "snapshot times {:?} collide at step size {}",
                self.snapshot_times, self.dt
            )));
        }
        Ok(steps)
    }
}

/// Reusable buffers for stepping `u' = P(J*u - u)`, `P` zeroing masked nodes.
pub struct Stepper<'a> {
    dk: &'a DiscreteKernel,
    masked: Vec<usize>,
    scheme: Scheme,
    dt: f64,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &Grid, dk: &'a DiscreteKernel, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::Configuration(format!("dt = {dt} violates the stability bound 0 < dt <= {MAX_DT}")));
        }
        if (dk.h() - grid.h()).abs() > 1e-12 * grid.h() {
            return Err(Error::Configuration(format!(
                "kernel spacing {} differs from grid spacing {}",
                dk.h(),
                grid.h()
            )));
        }
        let n = grid.len();
        let masked = (0..n).filter(|&i| grid.is_masked(i)).collect();
        Ok(Self { dk, masked, scheme, dt, k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n] })
    }

    fn rhs(dk: &DiscreteKernel, masked: &[usize], u: &[f64], out: &mut [f64]) {
        apply_l_into(u, dk, out);
        for &i in masked {
            out[i] = 0.0;
        }
    }

    /// Advances `u` by one step in place.
    pub fn advance(&mut self, u: &mut [f64]) {
        let dt = self.dt;
        let [k1, k2, k3, k4] = &mut self.k;
        match self.scheme {
            Scheme::Euler => {
                Self::rhs(self.dk, &self.masked, u, k1);
                for (v, d) in u.iter_mut().zip(k1.iter()) {
                    *v += dt * d;
                }
            }
            Scheme::Rk4 => {
                let s = &mut self.stage;
                Self::rhs(self.dk, &self.masked, u, k1);
                for ((o, v), d) in s.iter_mut().zip(u.iter()).zip(k1.iter()) {
                    *o = v + 0.5 * dt * d;
                }
                Self::rhs(self.dk, &self.masked, s, k2);
                for ((o, v), d) in s.iter_mut().zip(u.iter()).zip(k2.iter()) {
                    *o = v + 0.5 * dt * d;
                }
                Self::rhs(self.dk, &self.masked, s, k3);
                for ((o, v), d) in s.iter_mut().zip(u.iter()).zip(k3.iter()) {
                    *o = v + dt * d;
                }
                Self::rhs(self.dk, &self.masked, s, k4);
                for (i, v) in u.iter_mut().enumerate() {
                    *v += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

fn check_finite(u: &[f64], time: f64) -> Result<()> {
    if u.iter().sum::<f64>().is_finite() {
        Ok(())
    } else {
        Err(Error::Integration { time, reason: "non-finite values".into() })
    }
}

/// One step of size `dt`. Masked nodes of the result are zero whenever they
/// are zero in `u`.
pub fn step(u: &Field, dk: &DiscreteKernel, dt: f64, scheme: Scheme) -> Result<Field> {
    let mut stepper = Stepper::new(u.grid(), dk, dt, scheme)?;
    let mut values = u.values().to_vec();
    stepper.advance(&mut values);
    let t = u.time() + dt;
    check_finite(&values, t)?;
    Ok(Field::from_parts(Arc::clone(u.grid()), values, t))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub diagnostics: MomentSeries,
    pub final_state: Field,
}

impl Trajectory {
    /// Snapshot whose stamp is within `tol` of `t`.
    pub fn snapshot_at(&self, t: f64, tol: f64) -> Option<&Field> {
        self.snapshots.iter().find(|f| (f.time() - t).abs() <= tol)
    }
}

/// Named stationary profiles whose functionals `∫ u φ` are tracked.
pub type TrackedProfiles<'a> = [(&'a str, &'a StationaryProfile)];

pub fn evolve(
    data: &InitialData,
    dk: &DiscreteKernel,
    config: &EvolutionConfig,
    profiles: &TrackedProfiles,
) -> Result<Trajectory> {
    config.validate()?;
    let grid = Arc::clone(data.grid());
    for (name, p) in profiles {
        if p.field().len() != grid.len() {
            return Err(Error::Configuration(format!("profile {name} lives on a different grid")));
        }
    }
    let refs: Vec<&StationaryProfile> = profiles.iter().map(|(_, p)| *p).collect();
    let mut series = MomentSeries::new(profiles.iter().map(|(n, _)| n.to_string()).collect());
    let snap_steps = config.snapshot_steps()?;
    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut next_snap = 0;
    let steps = config.steps();

    let mut stepper = Stepper::new(&grid, dk, config.dt, config.scheme)?;
    let mut values = data.field().values().to_vec();
    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let record = k % config.diag_every == 0 || k == steps;
        let is_snap = next_snap < snap_steps.len() && snap_steps[next_snap] == k;
        if record || is_snap {
            let field = Field::from_parts(Arc::clone(&grid), values.clone(), t);
            if record {
                series.push(MomentRow::measure(&field, &refs))?;
            }
            if is_snap {
                snapshots.push(field);
                next_snap += 1;
            }
        }
        if k < steps {
            stepper.advance(&mut values);
            check_finite(&values, (k + 1) as f64 * config.dt)?;
        }
    }
    let final_state = Field::from_parts(grid, values, steps as f64 * config.dt);
    Ok(Trajectory { snapshots, diagnostics: series, final_state })
}

/// Full linear convolution `c_m = Σ a_i b_{m-i}` via zero-padded FFTs.
fn linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let len = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let pad = |v: &[f64]| {
        let mut c = vec![Complex64::new(0.0, 0.0); len];
        for (o, &x) in c.iter_mut().zip(v) {
            o.re = x;
        }
        c
    };
    let (mut fa, mut fb) = (pad(a), pad(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|c| c.re / len as f64).collect()
}

/// `e^{-t} u₀ + W(·,t) * u₀` for the hole-free problem, with `W` built from
/// the grid weights so that it solves the semi-discrete equation exactly.
pub fn cauchy_oracle(data: &InitialData, t: f64, kernel: &Kernel) -> Result<Field> {
    let grid = Arc::clone(data.grid());
    if grid.mode() != GridMode::Cauchy {
        return Err(Error::Configuration("the representation formula needs a grid without holes".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("oracle time must be positive, got {t}")));
    }
    let dk = DiscreteKernel::new(kernel, grid.h())?;
    let (_, ring) = RegularPart::new(Arc::clone(&grid), Symbol::Lattice(dk))?.ring_field(t, 0)?;
    let n = grid.len();
    let half = ring.len() / 2;
    // offsets -(n-1)..=(n-1)
    let w: Vec<f64> = ring[half + 1 - n..half + n].iter().map(|v| v * grid.h()).collect();
    let u0 = data.field().values();
    let conv = linear_convolution(u0, &w);
    let decay = (-t).exp();
    let values = (0..n).map(|i| decay * u0[i] + conv[i + n - 1]).collect();
    Field::new(grid, values, t)
}
