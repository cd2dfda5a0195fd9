use std::path::Path;
use std::time::Instant;

use nldiff_core::asymptotics::{
    far_field_error, global_weighted_error, global_weighted_error_w, near_field_ratio, verify_barrier_v,
    verify_barrier_w, verify_corrector, very_far_field_sup, BarrierParams,
};
use nldiff_core::diagnostics::{fit_decay_rate, momentum_limit_check, DecayFit, MomentSeries, MomentumReport, Side};
use nldiff_core::domain::{discretize_kernel, Field, Grid, GridMode, HoleGeometry};
use nldiff_core::evolution::{cauchy_oracle, evolve, Trajectory};
use nldiff_core::kernel::{regular_part_w, RegularPart, Symbol};
use nldiff_core::stationary::{phi_family, psi_diagnostics, PhiFamily, Regime, StationaryProfile};
use serde::Serialize;

use crate::artifacts::{
    read_diagnostics, read_snapshot, snapshot_file, ArtifactWriter, PhaseRecord, RunManifest, DIAG_FILE,
};
use crate::config::{ExperimentConfig, Setup};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Stationary,
    Evolve,
    Report,
    Verify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stationary => "stationary",
            Stage::Evolve => "evolve",
            Stage::Report => "report",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
    pub report: Option<Report>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Debug, Serialize)]
struct StationarySummary {
    m_plus: f64,
    m_minus: f64,
    m_plus_half: f64,
    m_minus_half: f64,
    regime: Regime,
    residuals: Vec<(String, f64)>,
    upper_constants: Vec<(String, Option<f64>)>,
    remainder: nldiff_core::stationary::PsiReport,
}

/// Error functionals along the check times.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    pub global: Vec<f64>,
    pub global_w: Vec<f64>,
    pub far_plus: Vec<f64>,
    pub far_minus: Vec<f64>,
    pub very_far: Vec<f64>,
    /// `sup t|u|` over the far-field band.
    pub band: Vec<f64>,
    /// `(probe, ratio per check time)`.
    pub near: Vec<(f64, Vec<f64>)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub sup_decay: DecayFit,
    pub mass_decay: DecayFit,
    pub momentum: Option<MomentumReport>,
    pub errors: Option<ErrorSeries>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    setup: Setup,
    family: Option<PhiFamily>,
    trajectory: Option<Trajectory>,
}

impl Context<'_> {
    fn exterior(&self) -> bool {
        self.setup.grid.mode() == GridMode::Exterior
    }

    fn phi_zero(&self) -> Option<&StationaryProfile> {
        self.family.as_ref().and_then(|f| f.phi_zero.as_ref())
    }

    fn snapshot(&self, t: f64) -> Result<&Field> {
        let tr = self.trajectory.as_ref().expect("evolve runs before report");
        tr.snapshot_at(t, 1e-9 * t.max(1.0)).ok_or_else(|| CliError::config(format!("no snapshot at t = {t}")))
    }
}

/// Runs `stages` in order into `dir`. With `reuse`, a trajectory already in
/// `dir` under the same config hash replaces the integration.
pub fn run_pipeline(config: &ExperimentConfig, stages: &[Stage], dir: &Path, reuse: bool) -> Result<RunOutcome> {
    let hash = config.hash();
    let mut writer = ArtifactWriter::new(dir, &hash)?;
    let mut manifest = RunManifest::new(&hash, config.evolution.deterministic);
    let previous = if reuse { RunManifest::read(dir).ok().filter(|m| m.config_hash == hash) } else { None };
    writer.text("config.toml", &config.to_toml())?;
    let mut outcome = RunOutcome { manifest: manifest.clone(), checks: Vec::new(), report: None };
    let result = (|| -> Result<()> {
        let mut ctx = Context { config, setup: config.setup()?, family: None, trajectory: None };
        for &stage in stages {
            let start = Instant::now();
            let status = match stage {
                Stage::Stationary => stationary_phase(&mut ctx, &mut writer)?,
                Stage::Evolve => evolve_phase(&mut ctx, &mut writer, previous.as_ref())?,
                Stage::Report => {
                    let report = report_phase(&ctx, &mut writer)?;
                    outcome.report = Some(report);
                    "ran"
                }
                Stage::Verify => {
                    let report = outcome.report.as_ref().expect("report runs before verify");
                    outcome.checks = verify_phase(&ctx, report, &mut writer)?;
                    "ran"
                }
            };
            manifest.phases.push(PhaseRecord {
                name: stage.name().into(),
                status: status.into(),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Ok(())
    })();
    match &result {
        Ok(()) if outcome.passed() => {}
        Ok(()) => manifest.outcome = "check-failure".into(),
        Err(e) => {
            let done = manifest.phases.len();
            if let Some(stage) = stages.get(done) {
                manifest.phases.push(PhaseRecord { name: stage.name().into(), status: "failed".into(), seconds: 0.0 });
            }
            manifest.outcome = e.to_string();
        }
    }
    manifest.files = writer.inventory()?;
    manifest.write(dir)?;
    result?;
    outcome.manifest = manifest;
    Ok(outcome)
}

fn stationary_phase(ctx: &mut Context, writer: &mut ArtifactWriter) -> Result<&'static str> {
    if !ctx.exterior() {
        return Ok("skipped");
    }
    let Setup { kernel, grid, data } = &ctx.setup;
    let fam = phi_family(kernel, grid, data.field(), &ctx.config.stationary)?;
    let zero = fam.phi_zero.as_ref().map(|p| p.field().values().to_vec()).unwrap_or_else(|| vec![0.0; grid.len()]);
    let header = ["x", "phi_plus", "phi_minus", "phi_one", "phi_zero"].map(String::from);
    let rows = (0..grid.len()).map(|i| {
        vec![
            grid.x(i),
            fam.phi_plus.field().values()[i],
            fam.phi_minus.field().values()[i],
            fam.phi_one.field().values()[i],
            zero[i],
        ]
    });
    writer.csv("stationary.csv", &header, rows)?;
    let named = [("phi_plus", &fam.phi_plus), ("phi_minus", &fam.phi_minus), ("phi_one", &fam.phi_one)];
    let mut named: Vec<(&str, &StationaryProfile)> = named.to_vec();
    if let Some(z) = &fam.phi_zero {
        named.push(("phi_zero", z));
    }
    let summary = StationarySummary {
        m_plus: fam.m_plus,
        m_minus: fam.m_minus,
        m_plus_half: fam.m_plus_half,
        m_minus_half: fam.m_minus_half,
        regime: fam.regime,
        residuals: named.iter().map(|(n, p)| (n.to_string(), p.residual())).collect(),
        upper_constants: named.iter().map(|(n, p)| (n.to_string(), p.upper_constant())).collect(),
        remainder: psi_diagnostics(&fam.phi_one, kernel),
    };
    writer.json("stationary.json", &summary)?;
    ctx.family = Some(fam);
    Ok("ran")
}

fn load_trajectory(ctx: &Context, dir: &Path, hash: &str) -> Result<Trajectory> {
    let diagnostics: MomentSeries = read_diagnostics(&dir.join(DIAG_FILE), hash)?;
    let snapshots = ctx
        .config
        .evolution
        .snapshot_times
        .iter()
        .map(|&t| read_snapshot(&dir.join(snapshot_file(t)), hash, &ctx.setup.grid, t))
        .collect::<Result<Vec<_>>>()?;
    let final_state = snapshots.last().cloned().unwrap_or_else(|| ctx.setup.data.field().clone());
    Ok(Trajectory { snapshots, diagnostics, final_state })
}

fn evolve_phase(
    ctx: &mut Context,
    writer: &mut ArtifactWriter,
    previous: Option<&RunManifest>,
) -> Result<&'static str> {
    if let Some(prev) = previous {
        let names: Vec<String> = std::iter::once(DIAG_FILE.to_string())
            .chain(ctx.config.evolution.snapshot_times.iter().map(|&t| snapshot_file(t)))
            .collect();
        if names.iter().all(|n| prev.files.iter().any(|f| &f.path == n)) {
            match load_trajectory(ctx, writer.dir(), &prev.config_hash) {
                Ok(tr) => {
                    for n in &names {
                        writer.adopt(n);
                    }
                    ctx.trajectory = Some(tr);
                    return Ok("reused");
                }
                Err(e) => log::warn!("stored trajectory unusable, integrating again: {e}"),
            }
        }
    }
    let Setup { kernel, grid, data } = &ctx.setup;
    let dk = discretize_kernel(kernel, grid)?;
    let tracked: Vec<(&str, &StationaryProfile)> = match &ctx.family {
        Some(f) => vec![("phi_one", &f.phi_one), ("phi_plus", &f.phi_plus), ("phi_minus", &f.phi_minus)],
        None => Vec::new(),
    };
    let tr = evolve(data, &dk, &ctx.config.evolution, &tracked)?;
    writer.diagnostics(&tr.diagnostics)?;
    for s in &tr.snapshots {
        writer.snapshot(s)?;
    }
    ctx.trajectory = Some(tr);
    Ok("ran")
}

fn band_value(u: &Field, band: (f64, f64)) -> f64 {
    let t = u.time();
    let (lo, hi) = (band.0 * t.sqrt(), band.1 * t.sqrt());
    (0..u.len()).filter(|&i| (lo..=hi).contains(&u.x(i).abs())).map(|i| t * u.values()[i].abs()).fold(0.0, f64::max)
}

fn error_series(ctx: &Context, phi0: &Field, fam: &PhiFamily) -> Result<ErrorSeries> {
    let v = &ctx.config.verify;
    let Setup { kernel, grid, .. } = &ctx.setup;
    let q = kernel.diffusivity();
    let mut e = ErrorSeries { near: v.near_probes.iter().map(|&x| (x, Vec::new())).collect(), ..Default::default() };
    for &t in &v.check_times {
        let u = ctx.snapshot(t)?;
        e.t.push(t);
        e.global.push(global_weighted_error(u, phi0, q)?);
        let w = regular_part_w(grid.clone(), t, kernel, 0)?;
        e.global_w.push(global_weighted_error_w(u, phi0, &w, q)?);
        e.far_plus.push(far_field_error(u, fam.m_plus, Side::Plus, q, v.far_band)?);
        e.far_minus.push(far_field_error(u, fam.m_minus, Side::Minus, q, v.far_band)?);
        e.very_far.push(very_far_field_sup(u, v.veryfar_exponent)?);
        e.band.push(band_value(u, v.far_band));
        for (x, ratios) in &mut e.near {
            ratios.push(near_field_ratio(u, phi0, q, *x)?);
        }
    }
    Ok(e)
}

fn report_phase(ctx: &Context, writer: &mut ArtifactWriter) -> Result<Report> {
    let v = &ctx.config.verify;
    let tr = ctx.trajectory.as_ref().expect("evolve runs before report");
    let sup_decay = fit_decay_rate(&tr.diagnostics.column(|r| r.sup_norm), v.tail_window)?;
    let mass_decay = fit_decay_rate(&tr.diagnostics.column(|r| r.mass), v.tail_window)?;
    let (momentum, errors) = match (&ctx.family, ctx.phi_zero()) {
        (Some(fam), Some(phi0)) => (
            Some(momentum_limit_check(&tr.diagnostics, fam.m_plus, fam.m_minus, v.momentum_windows())?),
            Some(error_series(ctx, phi0.field(), fam)?),
        ),
        _ => (None, None),
    };
    if let Some(e) = &errors {
        let mut header =
            ["t", "global", "global_w", "far_plus", "far_minus", "very_far", "band"].map(String::from).to_vec();
        header.extend(e.near.iter().map(|(x, _)| format!("near_{x}")));
        let rows = (0..e.t.len()).map(|k| {
            let mut row =
                vec![e.t[k], e.global[k], e.global_w[k], e.far_plus[k], e.far_minus[k], e.very_far[k], e.band[k]];
            row.extend(e.near.iter().map(|(_, r)| r[k]));
            row
        });
        writer.csv("errors.csv", &header, rows)?;
    }
    let report = Report { sup_decay, mass_decay, momentum, errors };
    writer.json("report.json", &report)?;
    Ok(report)
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn series(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(" > ")
}

fn verify_phase(ctx: &Context, report: &Report, writer: &mut ArtifactWriter) -> Result<Vec<Check>> {
    let v = &ctx.config.verify;
    let tr = ctx.trajectory.as_ref().expect("evolve runs before verify");
    let mut checks = Vec::new();
    if !ctx.exterior() {
        let Setup { kernel, data, .. } = &ctx.setup;
        let last = tr.snapshots.last().ok_or_else(|| CliError::config("the oracle check needs a snapshot"))?;
        let exact = cauchy_oracle(data, last.time(), kernel)?;
        let gap = last.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::new("oracle", gap <= v.oracle_tol, format!("sup gap {gap:.3e} at t = {}", last.time())));
        let masses = tr.diagnostics.column(|r| r.mass);
        let m0 = masses[0].1;
        let drift = masses.iter().map(|(_, m)| ((m - m0) / m0).abs()).fold(0.0, f64::max);
        checks.push(Check::new("mass-conservation", drift <= v.drift_tol, format!("relative drift {drift:.3e}")));
    } else {
        exterior_checks(ctx, report, &mut checks)?;
    }
    #[derive(Serialize)]
    struct Verdict<'a> {
        passed: bool,
        checks: &'a [Check],
    }
    writer.json("verify.json", &Verdict { passed: checks.iter().all(|c| c.pass), checks: &checks })?;
    Ok(checks)
}

fn exterior_checks(ctx: &Context, report: &Report, checks: &mut Vec<Check>) -> Result<()> {
    let v = &ctx.config.verify;
    let Setup { kernel, grid, .. } = &ctx.setup;
    let tr = ctx.trajectory.as_ref().expect("evolve runs before verify");
    let fam = ctx.family.as_ref().expect("stationary runs before verify");
    let drift = tr.diagnostics.conservation_drift(0).unwrap_or(f64::NAN);
    checks.push(Check::new("conservation", drift <= v.drift_tol, format!("phi_one functional drift {drift:.3e}")));
    let within = |x: f64, r: (f64, f64)| x >= r.0 && x <= r.1;
    let e = report.sup_decay.exponent;
    checks.push(Check::new("sup-decay", within(e, v.sup_exponent), format!("exponent {e:.4}")));
    let e = report.mass_decay.exponent;
    checks.push(Check::new("mass-decay", within(e, v.mass_exponent), format!("exponent {e:.4}")));
    let tol = ctx.config.stationary.tol;
    let mut profiles = vec![&fam.phi_plus, &fam.phi_minus, &fam.phi_one];
    profiles.extend(&fam.phi_zero);
    let residual = profiles.iter().map(|p| p.residual()).fold(0.0, f64::max);
    let mut stationary_ok = residual <= tol;
    let mut detail = format!("residual {residual:.2e}");
    if let Some(phi0) = &fam.phi_zero {
        let gap = (0..grid.len())
            .map(|i| {
                let lin =
                    fam.m_plus * fam.phi_plus.field().values()[i] + fam.m_minus * fam.phi_minus.field().values()[i];
                (lin - phi0.field().values()[i]).abs()
            })
            .fold(0.0, f64::max);
        stationary_ok &= gap <= 10.0 * tol;
        detail += &format!(", superposition gap {gap:.2e}");
    }
    checks.push(Check::new("stationary", stationary_ok, detail));
    let (Some(m), Some(errs), Some(phi0)) = (&report.momentum, &report.errors, ctx.phi_zero()) else {
        log::info!("fast-decay regime: asymptotic checks skipped");
        return Ok(());
    };
    let (rp, rm) = (m.gap_plus.ratio(), m.gap_minus.ratio());
    checks.push(Check::new(
        "momentum",
        rp <= v.momentum_ratio && rm <= v.momentum_ratio,
        format!("window ratios {rp:.4} (right), {rm:.4} (left)"),
    ));
    let mut near_ok = true;
    let mut parts = Vec::new();
    for (x, r) in &errs.near {
        let (first, last) = (r[0], r[r.len() - 1]);
        near_ok &= within(last, v.near_range) && (last - 1.0).abs() < (first - 1.0).abs();
        parts.push(format!("x = {x}: {first:.4} -> {last:.4}"));
    }
    checks.push(Check::new("near-field", near_ok, parts.join(", ")));
    checks.push(Check::new(
        "far-field",
        strictly_decreasing(&errs.far_plus) && strictly_decreasing(&errs.far_minus),
        format!("right {}, left {}", series(&errs.far_plus), series(&errs.far_minus)),
    ));
    let comparable = errs.global.iter().zip(&errs.global_w).all(|(d, w)| *w <= 1.5 * d);
    checks.push(Check::new(
        "global-error",
        strictly_decreasing(&errs.global) && strictly_decreasing(&errs.global_w) && comparable,
        format!("heat form {}, regular-part form {}", series(&errs.global), series(&errs.global_w)),
    ));
    let (last, band) = (errs.very_far[errs.very_far.len() - 1], errs.band[errs.band.len() - 1]);
    checks.push(Check::new(
        "very-far-field",
        strictly_decreasing(&errs.very_far) && last <= 0.1 * band,
        format!("{}, band {band:.4e}", series(&errs.very_far)),
    ));
    let a0 = grid.holes().inner_radius();
    if v.barriers && a0 > 0.0 {
        let params = BarrierParams::default_for(kernel, a0)?;
        let holes = HoleGeometry::new(grid.holes().intervals().to_vec())?;
        let fine = std::sync::Arc::new(Grid::new(v.barrier_extent, v.barrier_h, holes, kernel, GridMode::Exterior)?);
        let t = params.t_barrier;
        let vr = verify_barrier_v(&params, kernel, &fine, &[t, 2.0 * t, 4.0 * t])?;
        let corr = verify_corrector(&params, kernel, grid, &[params.t0, 2.0 * params.t0])?;
        let min_corr = corr.iter().map(|r| r.min_weighted).fold(f64::INFINITY, f64::min);
        let dk = discretize_kernel(kernel, grid)?;
        let w = RegularPart::new(grid.clone(), Symbol::Lattice(dk))?;
        let wr = verify_barrier_w(&params, kernel, phi0.field(), &w, &[], &v.v_residual_times)?;
        checks.push(Check::new(
            "barriers",
            vr.min_residual() >= -1e-6 && min_corr > 0.0 && wr.v_residual_bounded(),
            format!(
                "V residual {:.3e}, corrector {min_corr:.4e}, v-residual growth {:.4}",
                vr.min_residual(),
                wr.v_residual_growth()
            ),
        ));
    }
    Ok(())
}
