//! Masses, momenta, conserved functionals and decay-rate fits.

use serde::{Deserialize, Serialize};

use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use crate::stationary::StationaryProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
    Both,
}

/// Trapezoid weight of node `i` restricted to one half-line. The node at
/// `x = 0` contributes half to each side.
pub fn side_weight(grid: &Grid, i: usize, side: Side) -> f64 {
    let h = grid.h();
    let base = if i == 0 || i + 1 == grid.len() { 0.5 * h } else { h };
    let c = grid.center_index();
    match side {
        Side::Both => base,
        _ if i == c => 0.5 * base,
        Side::Plus if i > c => base,
        Side::Minus if i < c => base,
        _ => 0.0,
    }
}

/// `∫_{side} f(x) g(x_i)` by the trapezoid rule over the nodes.
pub fn side_integral(grid: &Grid, values: &[f64], side: Side, weight: impl Fn(f64) -> f64) -> f64 {
    values.iter().enumerate().map(|(i, v)| side_weight(grid, i, side) * v * weight(grid.x(i))).sum()
}

/// `M(t) = ∫ u`.
pub fn mass(field: &Field) -> f64 {
    side_integral(field.grid(), field.values(), Side::Both, |_| 1.0)
}

/// `M_1^±(t) = ∫_{ℝ±} u |x|`, or both sides together.
pub fn first_momentum(field: &Field, side: Side) -> f64 {
    side_integral(field.grid(), field.values(), side, f64::abs)
}

/// `M_2(t) = ∫ u x²`.
pub fn second_momentum(field: &Field) -> f64 {
    side_integral(field.grid(), field.values(), Side::Both, |x| x * x)
}

/// `M_φ(t) = ∫ u φ`.
pub fn conserved_functional(field: &Field, profile: &StationaryProfile) -> f64 {
    let phi = profile.field().values();
    let grid = field.grid();
    field.values().iter().zip(phi).enumerate().map(|(i, (u, p))| side_weight(grid, i, Side::Both) * u * p).sum()
}

/// One row of the per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub mass: f64,
    pub m1_plus: f64,
    pub m1_minus: f64,
    pub m1: f64,
    pub m2: f64,
    pub sup_norm: f64,
    /// `M_φ` for each profile supplied to the integrator, in order.
    pub m_phi: Vec<f64>,
}

impl MomentRow {
    pub fn measure(field: &Field, profiles: &[&StationaryProfile]) -> Self {
        let m1_plus = first_momentum(field, Side::Plus);
        let m1_minus = first_momentum(field, Side::Minus);
        Self {
            t: field.time(),
            mass: mass(field),
            m1_plus,
            m1_minus,
            m1: m1_plus + m1_minus,
            m2: second_momentum(field),
            sup_norm: field.sup_norm(),
            m_phi: profiles.iter().map(|p| conserved_functional(field, p)).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MomentSeries {
    pub profile_names: Vec<String>,
    pub rows: Vec<MomentRow>,
}

impl MomentSeries {
    pub fn new(profile_names: Vec<String>) -> Self {
        Self { profile_names, rows: Vec::new() }
    }

    /// Appends a row; times must increase strictly and values be finite.
    pub fn push(&mut self, row: MomentRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.t <= last.t {
                return Err(Error::Series(format!("time {} does not follow {}", row.t, last.t)));
            }
        }
        let finite = [row.mass, row.m1_plus, row.m1_minus, row.m2, row.sup_norm].iter().all(|v| v.is_finite())
            && row.m_phi.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Series(format!("non-finite diagnostics at t = {}", row.t)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// `(t, value)` pairs of one column.
    pub fn column(&self, f: impl Fn(&MomentRow) -> f64) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, f(r))).collect()
    }

    /// Largest relative deviation of `M_φ` (profile `index`) from its first value.
    pub fn conservation_drift(&self, index: usize) -> Option<f64> {
        let first = self.rows.first()?.m_phi.get(index).copied()?;
        Some(self.rows.iter().map(|r| ((r.m_phi[index] - first) / first).abs()).fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares slope of `log value` against `log t` on `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if pts.len() < 8 {
        return Err(Error::Series(format!(
            "decay fit needs at least 8 points in [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((row, (t, v))) = series
        .iter()
        .enumerate()
        .find(|(_, (t, v))| *t >= window.0 && *t <= window.1 && !(*v > 0.0 && v.is_finite() && *t > 0.0))
    {
        return Err(Error::Series(format!("row {row} (t = {t}) has non-positive value {v}")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { exponent: slope, prefactor: (my - slope * mx).exp(), window, r_squared, points: pts.len() })
}

/// Default tail window `[t_end/4, t_end]`.
pub fn tail_window(t_end: f64) -> (f64, f64) {
    (t_end / 4.0, t_end)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentumWindows {
    pub early: (f64, f64),
    pub late: (f64, f64),
}

impl MomentumWindows {
    /// `[t_end/8, t_end/4]` and `[t_end/2, t_end]`.
    pub fn dyadic(t_end: f64) -> Self {
        Self { early: (t_end / 8.0, t_end / 4.0), late: (t_end / 2.0, t_end) }
    }
}

/// Largest allowed late/early ratio for quantities claimed to be bounded.
pub const BOUNDED_RATIO: f64 = 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct WindowedSup {
    pub early: f64,
    pub late: f64,
}

impl WindowedSup {
    pub fn ratio(&self) -> f64 {
        self.late / self.early
    }

    pub fn bounded(&self) -> bool {
        self.early.is_finite() && self.late.is_finite() && self.late <= BOUNDED_RATIO * self.early
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentumReport {
    pub windows: MomentumWindows,
    pub m_bar_plus: f64,
    pub m_bar_minus: f64,
    /// `sup |M₁⁺(t) - M̄⁺| t^{1/2}` per window.
    pub gap_plus: WindowedSup,
    pub gap_minus: WindowedSup,
    /// `sup (M₂(t) - M₂(0)) / t^{1/2}` per window.
    pub m2_growth: WindowedSup,
    /// `sup M(t) / ‖u(t)‖_∞^{1/2}` over both windows.
    pub mass_sup_coupling: f64,
    /// `|M₁⁺ - M̄⁺| / M̄⁺` at the last row.
    pub final_relative_gap_plus: f64,
    pub final_relative_gap_minus: f64,
    pub bounded: bool,
}

/// Convergence of the one-sided first momenta to their asymptotic values.
pub fn momentum_limit_check(
    series: &MomentSeries,
    m_bar_plus: f64,
    m_bar_minus: f64,
    windows: MomentumWindows,
) -> Result<MomentumReport> {
    let last = series.rows.last().ok_or_else(|| Error::Series("empty series".into()))?;
    let first = &series.rows[0];
    if windows.early.0 <= 0.0 || windows.late.1 / windows.early.0 < 8.0 - 1e-12 {
        return Err(Error::Series("momentum check needs windows spanning a factor of at least 8".into()));
    }
    if last.t < windows.late.1 * (1.0 - 1e-12) {
        return Err(Error::Series(format!("series ends at {} before the late window {:?}", last.t, windows.late)));
    }
    let windowed = |f: &dyn Fn(&MomentRow) -> f64| {
        let sup =
            |(lo, hi): (f64, f64)| series.rows.iter().filter(|r| r.t >= lo && r.t <= hi).map(f).fold(0.0f64, f64::max);
        WindowedSup { early: sup(windows.early), late: sup(windows.late) }
    };
    let gap_plus = windowed(&|r| (r.m1_plus - m_bar_plus).abs() * r.t.sqrt());
    let gap_minus = windowed(&|r| (r.m1_minus - m_bar_minus).abs() * r.t.sqrt());
    let m2_growth = windowed(&|r| (r.m2 - first.m2) / r.t.sqrt());
    let coupling = windowed(&|r| r.mass / r.sup_norm.sqrt());
    let relative = |m: f64, bar: f64| if bar > 0.0 { (m - bar).abs() / bar } else { m.abs() };
    let bounded = gap_plus.bounded() && gap_minus.bounded() && m2_growth.bounded();
    Ok(MomentumReport {
        windows,
        m_bar_plus,
        m_bar_minus,
        final_relative_gap_plus: relative(last.m1_plus, m_bar_plus),
        final_relative_gap_minus: relative(last.m1_minus, m_bar_minus),
        gap_plus,
        gap_minus,
        m2_growth,
        mass_sup_coupling: coupling.early.max(coupling.late),
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridMode, HoleGeometry};
    use crate::kernel::Kernel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid(h: f64) -> Arc<Grid> {
        let k = Kernel::poly3(1.0).unwrap();
        Arc::new(Grid::new(20.0, h, HoleGeometry::new(vec![(-0.5, 0.5)]).unwrap(), &k, GridMode::Exterior).unwrap())
    }

    #[test]
    fn indicator_moments() {
        let g = grid(0.05);
        let u = Field::from_fn(g.clone(), 0.0, |x| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 });
        let h = g.h();
        assert!((mass(&u) - 1.0).abs() <= 2.0 * h);
        assert!((first_momentum(&u, Side::Plus) - 1.5).abs() <= 2.0 * h);
        assert_eq!(first_momentum(&u, Side::Minus), 0.0);
        assert!((second_momentum(&u) - 7.0 / 3.0).abs() <= 2.0 * h * 7.0 / 3.0);
        let zero = Field::zeros(g, 0.0);
        assert_eq!((mass(&zero), first_momentum(&zero, Side::Both), second_momentum(&zero)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn symmetric_field_has_equal_side_momenta() {
        let g = grid(0.05);
        let u = Field::from_fn(g, 0.0, |x| (-(x * x) / 3.0).exp() * x * x);
        assert_abs_diff_eq!(first_momentum(&u, Side::Plus), first_momentum(&u, Side::Minus), epsilon = 1e-14);
        let total = first_momentum(&u, Side::Both);
        assert_abs_diff_eq!(first_momentum(&u, Side::Plus) + first_momentum(&u, Side::Minus), total, epsilon = 1e-13);
    }

    #[test]
    fn quadratures_are_second_order() {
        // ∫ x² e^{-x²} |x| over ℝ+ is 1/2
        let err = |h: f64| {
            let u = Field::from_fn(grid(h), 0.0, |x| x * x * (-(x * x)).exp());
            (first_momentum(&u, Side::Plus) - 0.5).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-2 && e2 <= e1 / 3.5 || e2 < 1e-12, "{e1} {e2}");
    }

    #[test]
    fn exact_power_law_fit() {
        let s: Vec<(f64, f64)> = (1..=40).map(|k| (k as f64 * 5.0, 7.0 / (k as f64 * 5.0))).collect();
        let fit = fit_decay_rate(&s, (10.0, 200.0)).unwrap();
        assert_abs_diff_eq!(fit.exponent, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.prefactor, 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn perturbed_power_law_fit() {
        let s: Vec<(f64, f64)> =
            (10..=100).map(|t| (t as f64, (t as f64).powf(-0.5) * (1.0 + 0.1 / t as f64))).collect();
        let fit = fit_decay_rate(&s, (10.0, 100.0)).unwrap();
        assert!((-0.55..=-0.45).contains(&fit.exponent));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let mut s: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 1.0 / k as f64)).collect();
        assert!(fit_decay_rate(&s, (1.0, 5.0)).is_err());
        s[12].1 = 0.0;
        let e = fit_decay_rate(&s, (1.0, 20.0)).unwrap_err();
        assert!(e.to_string().contains("row 12"));
    }

    #[test]
    fn series_rejects_nonincreasing_time() {
        let g = grid(0.1);
        let f = Field::zeros(g, 1.0);
        let mut s = MomentSeries::new(vec![]);
        s.push(MomentRow::measure(&f, &[])).unwrap();
        assert!(s.push(MomentRow::measure(&f, &[])).is_err());
    }

    proptest! {
        #[test]
        fn fit_recovers_any_exponent(p in -3.0f64..-0.1, c in 0.1f64..10.0) {
            let s: Vec<(f64, f64)> = (1..=30).map(|k| (k as f64, c * (k as f64).powf(p))).collect();
            let fit = fit_decay_rate(&s, (1.0, 30.0)).unwrap();
            prop_assert!((fit.exponent - p).abs() < 1e-10);
        }
    }
}
