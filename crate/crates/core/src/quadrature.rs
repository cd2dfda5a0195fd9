//! Gauss–Legendre based quadrature: an adaptive rule with an absolute error
//! target and a composite rule for oscillatory integrands.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

const MAX_DEPTH: u32 = 40;

fn rule(points: usize) -> &'static GaussLegendre {
    static G10: OnceLock<GaussLegendre> = OnceLock::new();
    static G20: OnceLock<GaussLegendre> = OnceLock::new();
    let cell = match points {
        10 => &G10,
        20 => &G20,
        _ => unreachable!("only 10- and 20-point rules are cached"),
    };
    cell.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(points).unwrap()))
}

/// Adaptive bisection driven by the difference between a 10-point rule on
/// the panel and the same rule on its two halves.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = rule(10).integrate(a, b, f);
    refine(f, a, b, whole, abs_tol, 0)
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule(10).integrate(a, m, f);
    let right = rule(10).integrate(m, b, f);
    let halves = left + right;
    if (halves - whole).abs() <= tol || depth >= MAX_DEPTH {
        return halves;
    }
    refine(f, a, m, left, 0.5 * tol, depth + 1) + refine(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Adaptive quadrature over consecutive segments `breaks[i]..breaks[i+1]`,
/// splitting the tolerance evenly.
pub fn adaptive_segments<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], abs_tol: f64) -> f64 {
    let segments = breaks.len().saturating_sub(1).max(1) as f64;
    breaks.windows(2).map(|w| adaptive(f, w[0], w[1], abs_tol / segments)).sum()
}

/// Composite 20-point Gauss–Legendre with `panels` equal panels.
pub fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * width;
            rule(20).integrate(lo, lo + width, f)
        })
        .sum()
}
