use std::path::Path;
use std::sync::Arc;

use nldiff_core::diagnostics::MomentumWindows;
use nldiff_core::domain::{Grid, GridMode, HoleGeometry};
use nldiff_core::evolution::{validate_initial_data, EvolutionConfig, InitialData, InitialProfile};
use nldiff_core::kernel::Kernel;
use nldiff_core::stationary::SolverOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelConfig {
    Poly3 {
        d: f64,
    },
    /// `(x, J(x))` samples on `[0, d]`, symmetrized.
    Tabulated {
        samples: Vec<(f64, f64)>,
    },
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::Poly3 { d: 1.75 }
    }
}

impl KernelConfig {
    pub fn build(&self) -> nldiff_core::error::Result<Kernel> {
        match self {
            Self::Poly3 { d } => Kernel::poly3(*d),
            Self::Tabulated { samples } => Kernel::tabulated(samples),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub half_extent: f64,
    pub h: f64,
    pub mode: GridMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_extent: 64.0, h: 0.05, mode: GridMode::Exterior }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoleConfig {
    pub intervals: Vec<(f64, f64)>,
    /// Allow holes that do not cover the origin.
    pub separated: bool,
}

impl Default for HoleConfig {
    fn default() -> Self {
        Self { intervals: vec![(-0.5, 0.5)], separated: false }
    }
}

impl HoleConfig {
    pub fn build(&self, mode: GridMode) -> nldiff_core::error::Result<HoleGeometry> {
        match mode {
            GridMode::Cauchy => Ok(HoleGeometry::empty()),
            GridMode::Exterior if self.separated => HoleGeometry::separated(self.intervals.clone()),
            GridMode::Exterior => HoleGeometry::new(self.intervals.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Window of the decay-rate fits.
    pub tail_window: (f64, f64),
    /// Snapshot times along which error series must decrease.
    pub check_times: Vec<f64>,
    pub near_probes: Vec<f64>,
    pub near_range: (f64, f64),
    /// Far-field band in units of `√t`.
    pub far_band: (f64, f64),
    pub veryfar_exponent: f64,
    pub momentum_early: (f64, f64),
    pub momentum_late: (f64, f64),
    pub momentum_ratio: f64,
    pub drift_tol: f64,
    pub sup_exponent: (f64, f64),
    pub mass_exponent: (f64, f64),
    pub barriers: bool,
    pub barrier_h: f64,
    pub barrier_extent: f64,
    pub v_residual_times: Vec<f64>,
    pub oracle_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tail_window: (100.0, 400.0),
            check_times: vec![100.0, 200.0, 400.0],
            near_probes: vec![2.0, 5.0],
            near_range: (0.85, 1.15),
            far_band: (0.5, 2.0),
            veryfar_exponent: 0.6,
            momentum_early: (50.0, 100.0),
            momentum_late: (200.0, 400.0),
            momentum_ratio: 2.0,
            drift_tol: 1e-4,
            sup_exponent: (-1.1, -0.9),
            mass_exponent: (-0.6, -0.4),
            barriers: true,
            barrier_h: 0.02,
            barrier_extent: 40.0,
            v_residual_times: vec![50.0, 100.0],
            oracle_tol: 1e-6,
        }
    }
}

impl VerifyConfig {
    pub fn momentum_windows(&self) -> MomentumWindows {
        MomentumWindows { early: self.momentum_early, late: self.momentum_late }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Run directory, relative to the output root.
    pub output: String,
    /// Seed for randomized property checks; the pipeline itself is deterministic.
    pub seed: u64,
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub hole: HoleConfig,
    pub initial: InitialProfile,
    pub evolution: EvolutionConfig,
    pub stationary: SolverOptions,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: "default".into(),
            seed: 0,
            kernel: KernelConfig::default(),
            grid: GridConfig::default(),
            hole: HoleConfig::default(),
            initial: InitialProfile::TwoBumps { centers: [2.0, -3.0], widths: [0.5, 0.5], amplitudes: [1.0, 0.5] },
            evolution: EvolutionConfig::default(),
            stationary: SolverOptions::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// The validated objects a config describes.
pub struct Setup {
    pub kernel: Kernel,
    pub grid: Arc<Grid>,
    pub data: InitialData,
}

impl ExperimentConfig {
    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configs always serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Every violation found, without stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.output.trim().is_empty() {
            v.push("output must name a directory".into());
        }
        let kernel = self.kernel.build().map_err(|e| v.push(format!("kernel: {e}"))).ok();
        let holes = self.hole.build(self.grid.mode).map_err(|e| v.push(format!("hole: {e}"))).ok();
        if self.grid.mode == GridMode::Cauchy && self.hole.intervals != HoleConfig::default().intervals {
            v.push("hole: cauchy mode ignores holes; remove the intervals".into());
        }
        v.extend(self.evolution.violations().into_iter().map(|m| format!("evolution: {m}")));
        if !(self.stationary.tol > 0.0) {
            v.push(format!("stationary: tol = {} must be positive", self.stationary.tol));
        }
        if let (Some(kernel), Some(holes)) = (&kernel, holes) {
            match Grid::new(self.grid.half_extent, self.grid.h, holes, kernel, self.grid.mode) {
                Ok(grid) => {
                    let needed = 4.0 * (kernel.diffusivity() * self.evolution.t_end).sqrt();
                    if grid.half_extent() < needed {
                        v.push(format!(
                            "grid: half_extent = {} is below the truncation margin 4·sqrt(q·t_end) = {needed:.3}",
                            grid.half_extent()
                        ));
                    }
                    let grid = Arc::new(grid);
                    self.check_initial(&grid, &mut v);
                    self.check_verify(&grid, &mut v);
                }
                Err(e) => v.push(format!("grid: {e}")),
            }
        }
        v
    }

    fn check_initial(&self, grid: &Arc<Grid>, v: &mut Vec<String>) {
        match self.initial.sample(grid.clone()) {
            Ok(field) => {
                if let Err(e) = validate_initial_data(field) {
                    v.push(format!("initial: {e}"));
                }
            }
            Err(e) => v.push(format!("initial: {e}")),
        }
    }

    fn check_verify(&self, grid: &Grid, v: &mut Vec<String>) {
        let c = &self.verify;
        let t_end = self.evolution.t_end;
        let window = |name: &str, w: (f64, f64), v: &mut Vec<String>| {
            if !(w.0 > 0.0 && w.0 < w.1 && w.1 <= t_end) {
                v.push(format!("verify: {name} = [{}, {}] must satisfy 0 < start < end <= t_end = {t_end}", w.0, w.1));
            }
        };
        window("tail_window", c.tail_window, v);
        window("momentum_early", c.momentum_early, v);
        window("momentum_late", c.momentum_late, v);
        if c.momentum_late.1 < 8.0 * c.momentum_early.0 {
            v.push("verify: momentum windows must span a factor of at least 8".into());
        }
        let snapshots = &self.evolution.snapshot_times;
        if c.check_times.len() < 2 || c.check_times.windows(2).any(|w| !(w[0] < w[1])) {
            v.push("verify: check_times needs at least two strictly increasing times".into());
        }
        for t in &c.check_times {
            if !snapshots.iter().any(|s| (s - t).abs() <= 1e-9 * t.max(1.0)) {
                v.push(format!("verify: check time {t} is not a snapshot time"));
            }
            if *t < 1.0 {
                v.push(format!("verify: check time {t} must be at least 1"));
            }
        }
        for x in &c.near_probes {
            if grid.holes().contains(*x) || x.abs() >= grid.half_extent() {
                v.push(format!("verify: near-field probe {x} must lie off the hole and inside the grid"));
            }
        }
        if !(c.near_range.0 < 1.0 && c.near_range.1 > 1.0) {
            v.push("verify: near_range must bracket 1".into());
        }
        if !(c.far_band.0 > 0.0 && c.far_band.0 < c.far_band.1) {
            v.push("verify: far_band must satisfy 0 < lower < upper".into());
        }
        if let Some(&t) = c.check_times.last() {
            if c.far_band.1 * t.sqrt() > grid.half_extent() {
                v.push(format!("verify: far_band reaches beyond the grid at t = {t}"));
            }
        }
        if !(c.veryfar_exponent > 0.5 && c.veryfar_exponent < 1.0) {
            v.push(format!("verify: veryfar_exponent = {} must lie in (1/2, 1)", c.veryfar_exponent));
        }
        for (name, r) in [("sup_exponent", c.sup_exponent), ("mass_exponent", c.mass_exponent)] {
            if !(r.0 < r.1) {
                v.push(format!("verify: {name} must be an increasing range"));
            }
        }
        if !(c.drift_tol > 0.0 && c.oracle_tol > 0.0 && c.momentum_ratio > 0.0) {
            v.push("verify: drift_tol, oracle_tol and momentum_ratio must be positive".into());
        }
        if c.barriers && !(c.barrier_h > 0.0 && c.barrier_extent > 0.0) {
            v.push("verify: barrier_h and barrier_extent must be positive".into());
        }
        if c.v_residual_times.iter().any(|t| !(*t >= 1.0)) {
            v.push("verify: v_residual_times must be at least 1".into());
        }
        let spacing = self.evolution.dt * self.evolution.diag_every as f64;
        if spacing > 0.0 && (c.tail_window.1 - c.tail_window.0) / spacing < 8.0 {
            v.push("verify: tail_window holds fewer than 8 diagnostic rows".into());
        }
    }

    /// Builds kernel, grid and initial data of a config that passed validation.
    pub fn setup(&self) -> Result<Setup> {
        let kernel = self.kernel.build()?;
        let holes = self.hole.build(self.grid.mode)?;
        let grid = Arc::new(Grid::new(self.grid.half_extent, self.grid.h, holes, &kernel, self.grid.mode)?);
        let data = validate_initial_data(self.initial.sample(grid.clone())?)?;
        Ok(Setup { kernel, grid, data })
    }
}

/// Dotted paths present in `input` but absent from `canonical`.
fn unknown_keys(input: &toml::Value, canonical: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match (input, canonical) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, value) in a {
                match b.get(k) {
                    Some(expected) => unknown_keys(value, expected, &join(k), out),
                    None => out.push(join(k)),
                }
            }
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                unknown_keys(x, y, &format!("{prefix}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Deserializes each top-level entry on its own so a type error names its
/// section; entries that do parse still get their unknown keys listed.
fn section_errors(value: &toml::Value, whole: &str) -> Vec<String> {
    let mut problems = Vec::new();
    if let toml::Value::Table(table) = value {
        for (key, entry) in table {
            let single = toml::Value::Table(toml::Table::from_iter([(key.clone(), entry.clone())]));
            match ExperimentConfig::deserialize(single.clone()) {
                Ok(c) => {
                    let canonical = toml::Value::try_from(&c).expect("configs always serialize");
                    let mut unknown = Vec::new();
                    unknown_keys(&single, &canonical, "", &mut unknown);
                    problems.extend(unknown.into_iter().map(|k| format!("unknown key `{k}`")));
                }
                Err(e) => problems.push(format!("{key}: {}", e.message())),
            }
        }
    }
    if problems.is_empty() {
        problems.push(whole.to_string());
    }
    problems
}

/// Parses TOML text strictly: unknown keys and inconsistent blocks are all
/// reported together.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::config(format!("syntax: {}", e.message())))?;
    let config = match ExperimentConfig::deserialize(value.clone()) {
        Ok(c) => c,
        Err(e) => return Err(CliError::Config(section_errors(&value, e.message()))),
    };
    let canonical = toml::Value::try_from(&config).expect("configs always serialize");
    let mut unknown = Vec::new();
    unknown_keys(&value, &canonical, "", &mut unknown);
    let mut problems: Vec<String> = unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect();
    problems.extend(config.violations());
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Config(problems))
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}
