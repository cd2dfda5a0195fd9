use super::*;
use crate::diagnostics::{mass, MomentSeries};
use crate::domain::{GridMode, HoleGeometry};
use crate::kernel::Symbol;
use crate::stationary::{solve_stationary, GrowthSpec, SolverOptions};
use approx::assert_abs_diff_eq;

fn kernel() -> Kernel {
    Kernel::poly3(1.0).unwrap()
}

fn grid(x: f64, h: f64) -> Arc<Grid> {
    let holes = HoleGeometry::new(vec![(-0.5, 0.5)]).unwrap();
    Arc::new(Grid::new(x, h, holes, &kernel(), GridMode::Exterior).unwrap())
}

fn phi0(g: &Arc<Grid>, bp: f64, bm: f64) -> Field {
    let spec = GrowthSpec::new(bp, bm).unwrap();
    solve_stationary(&spec, &kernel(), g, &SolverOptions::default()).unwrap().field().clone()
}

#[test]
fn near_field_constant_value() {
    // 1/(2 (1/18)^{3/2} √π)
    assert_abs_diff_eq!(near_field_constant(1.0 / 18.0), 21.542883, epsilon = 1e-6);
}

#[test]
fn scale_window_validation() {
    assert!(ScaleWindow::default().validate().is_ok());
    assert!(ScaleWindow { near_exponent: 0.5, ..Default::default() }.validate().is_err());
    assert!(ScaleWindow { far_band: (2.0, 0.5), ..Default::default() }.validate().is_err());
}

#[test]
fn removable_form_agrees() {
    let g = grid(20.0, 0.05);
    let p = phi0(&g, 1.0, 0.7);
    let q = kernel().diffusivity();
    for t in [1.0, 30.0, 400.0] {
        for i in 0..g.len() {
            let x = g.x(i);
            if x.abs() < g.h() {
                continue;
            }
            let a = asymptotic_profile(x, t, p.values()[i], q).unwrap();
            let b = asymptotic_profile_dipole_form(x, t, p.values()[i], q).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-300, "{x} {t}: {a} {b}");
        }
    }
    assert!(asymptotic_profile_dipole_form(0.0, 1.0, 1.0, q).is_err());
}

#[test]
fn profile_vanishes_in_the_hole_and_far_away() {
    let q = kernel().diffusivity();
    assert_eq!(asymptotic_profile(0.2, 10.0, 0.0, q).unwrap(), 0.0);
    let far = asymptotic_profile(40.0, 10.0, 40.0, q).unwrap();
    assert!(far < 1e-100);
}

#[test]
fn global_error_vanishes_on_the_profile() {
    let g = grid(20.0, 0.05);
    let p = phi0(&g, 1.0, 1.0);
    let q = kernel().diffusivity();
    let t = 50.0;
    let exact = Field::from_fn(g.clone(), t, |_| 0.0);
    let values: Vec<f64> = (0..g.len()).map(|i| asymptotic_profile(g.x(i), t, p.values()[i], q).unwrap()).collect();
    let exact = Field::new(exact.grid().clone(), values, t).unwrap();
    assert_eq!(global_weighted_error(&exact, &p, q).unwrap(), 0.0);
    let mut bumped = exact.clone();
    bumped.values_mut()[g.index_of(3.0).unwrap()] += 1e-3;
    let e = global_weighted_error(&bumped, &p, q).unwrap();
    assert_abs_diff_eq!(e, 1e-3 * t.powf(1.5) / 4.0, epsilon = 1e-9);
    let early = Field::zeros(g, 0.5);
    assert!(global_weighted_error(&early, &p, q).is_err());
}

#[test]
fn far_field_vanishes_on_exact_dipoles() {
    let g = grid(40.0, 0.05);
    let q = kernel().diffusivity();
    let t = 100.0;
    let (mp, mm) = (1.3, 0.4);
    let u = Field::from_fn(g.clone(), t, |x| {
        let m = if x >= 0.0 { mp } else { mm };
        -2.0 * m * dipole(x.abs(), t, q).unwrap()
    });
    assert!(far_field_error(&u, mp, Side::Plus, q, (0.5, 2.0)).unwrap() < 1e-14);
    assert!(far_field_error(&u, mm, Side::Minus, q, (0.5, 2.0)).unwrap() < 1e-14);
    let off = far_field_error(&u, 1.0, Side::Plus, q, (0.5, 2.0)).unwrap();
    let wide = far_field_error(&u, 1.0, Side::Plus, q, (0.25, 3.0)).unwrap();
    assert!(off > 0.0 && wide >= off);
    assert!(far_field_error(&u, mp, Side::Plus, q, (0.5, 5.0)).is_err());
}

#[test]
fn very_far_field_is_small_for_gaussian_data() {
    let g = grid(40.0, 0.05);
    let q = kernel().diffusivity();
    let t = 100.0;
    let u = Field::from_fn(g.clone(), t, |x| gamma_q(x, t, q).unwrap());
    let v = very_far_field_sup(&u, 0.6).unwrap();
    assert!(v < 1e-4 * t * u.sup_norm(), "{v}");
    let late = Field::zeros(g, 1000.0);
    assert!(matches!(very_far_field_sup(&late, 0.6), Err(Error::Configuration(_))));
}

fn trajectory_from(fields: Vec<Field>) -> Trajectory {
    let last = fields.last().unwrap().clone();
    Trajectory { snapshots: fields, diagnostics: MomentSeries::default(), final_state: last }
}

#[test]
fn scaled_solution_identity_and_mass() {
    let g = grid(20.0, 0.05);
    let u = Field::from_fn(g.clone(), 4.0, |x| (-(x - 2.0).powi(2)).exp() * if x.abs() > 0.5 { 1.0 } else { 0.0 });
    let tr = trajectory_from(vec![u.clone()]);
    let xs = g.xs();
    let same = scaled_solution(&tr, 1.0, 0.0, 4.0, &xs).unwrap();
    for (a, b) in same.iter().zip(u.values()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }
    // nodes of the scaled variable map exactly onto grid nodes
    let lambda = 2.0;
    let ys: Vec<f64> = xs.iter().map(|x| x / lambda).collect();
    let scaled = scaled_solution(&tr, lambda, 0.0, 1.0, &ys).unwrap();
    let hy = g.h() / lambda;
    let n = ys.len();
    let integral: f64 =
        scaled.iter().enumerate().map(|(i, v)| if i == 0 || i + 1 == n { 0.5 } else { 1.0 } * v * hy).sum();
    assert_abs_diff_eq!(integral, lambda * mass(&u), epsilon = 1e-12);
    assert!(scaled_solution(&tr, 3.0, 0.0, 1.0, &ys).is_err());
}

#[test]
fn error_report_verdict() {
    let mut r = ErrorReport::new("e", (100.0, 400.0));
    r.rows = vec![(100.0, 3.0), (200.0, 2.0), (400.0, 1.0)];
    assert_eq!(r.verdict(), None);
    r.rows.insert(0, (50.0, 0.5));
    assert_eq!(r.verdict(), Some(true));
    r.rows[3].1 = 2.5;
    assert_eq!(r.verdict(), Some(false));
    assert_eq!(r.value_at(200.0), Some(2.0));
}

#[test]
fn default_barrier_parameters() {
    let k = Kernel::poly3(1.75).unwrap();
    let p = BarrierParams::default_for(&k, 0.5).unwrap();
    p.validate().unwrap();
    assert!(p.alpha < k.diffusivity());
    assert!(p.b >= 5.0 * 1.75);
    assert!(p.t_barrier > 1000.0 && p.t_barrier < 5000.0, "{}", p.t_barrier);
    assert_abs_diff_eq!(p.t0, (1.75 / p.delta).powi(2), epsilon = 1e-9 * p.t0);
    assert!(p.corrector_margin(k.diffusivity(), p.delta) >= 0.0);
    assert!(BarrierParams::default_for(&k, 0.0).is_err());
    let bad = BarrierParams { gamma: 0.1, ..p };
    assert!(bad.validate().is_err());
    let bad = BarrierParams { kappa: 0.5, ..p };
    assert!(bad.validate().is_err());
}

#[test]
fn barrier_time_derivatives() {
    let p = BarrierParams::default_for(&kernel(), 0.5).unwrap();
    let (x, t, dt) = (2.0, 800.0, 1e-3);
    let fd = (p.v(x, t + dt) - p.v(x, t - dt)) / (2.0 * dt);
    assert_abs_diff_eq!(p.v_dt(x, t), fd, epsilon = 1e-8 * p.v_dt(x, t).abs());
    let fd = (p.r(-x, t + dt) - p.r(-x, t - dt)) / (2.0 * dt);
    assert_abs_diff_eq!(p.r_dt(-x, t), fd, epsilon = 1e-8 * fd.abs());
    assert_eq!(p.v(0.3, t), 0.0);
    assert_eq!(p.r(-0.3, t), 0.0);
}

#[test]
fn v_is_a_supersolution() {
    let k = kernel();
    let p = BarrierParams::default_for(&k, 0.5).unwrap();
    let g = grid(12.0, 0.02);
    let t = p.t_barrier;
    let report = verify_barrier_v(&p, &k, &g, &[t, 2.0 * t, 4.0 * t]).unwrap();
    for r in &report.rows {
        assert!(r.min_residual >= -1e-6, "{r:?}");
        assert!(r.min_residual_continuum >= -r.eps_h, "{r:?}");
        assert!(r.points > 0);
    }
    assert!(verify_barrier_v(&p, &k, &g, &[0.5 * t]).is_err());
}

#[test]
fn corrector_constant_is_positive() {
    let k = kernel();
    let p = BarrierParams::default_for(&k, 0.5).unwrap();
    let g = grid(12.0, 0.05);
    let rows = verify_corrector(&p, &k, &g, &[p.t0, 4.0 * p.t0]).unwrap();
    for r in &rows {
        assert!(r.min_weighted > 0.0, "{r:?}");
    }
}

#[test]
fn corrector_enters_linearly() {
    let k = kernel();
    let g = grid(40.0, 0.05);
    let p = phi0(&g, 1.0, 1.0);
    let dk = DiscreteKernel::new(&k, g.h()).unwrap();
    let w = RegularPart::new(g.clone(), Symbol::Lattice(dk.clone())).unwrap();
    let q = k.diffusivity();
    let params = BarrierParams::default_for(&k, 0.5).unwrap();
    let doubled = BarrierParams { k_plus: 2.0, ..params };
    let t = 60.0;
    let v = v_residual(&dk, &p, &w, q, t).unwrap();
    let (one, _) = w_residuals(&params, &dk, &p, &w, q, t).unwrap();
    let (two, _) = w_residuals(&doubled, &dk, &p, &w, q, t).unwrap();
    for i in 0..g.len() {
        let (c1, c2) = (one[i] - v[i], two[i] - v[i]);
        assert!((c2 - 2.0 * c1).abs() <= 1e-12 * c1.abs().max(1e-30), "{i}: {c1} {c2}");
    }
}

#[test]
fn v_residual_decays() {
    let k = kernel();
    let g = grid(40.0, 0.05);
    let p = phi0(&g, 1.0, 1.0);
    let params = BarrierParams::default_for(&k, 0.5).unwrap();
    let dk = DiscreteKernel::new(&k, g.h()).unwrap();
    let w = RegularPart::new(g.clone(), Symbol::Lattice(dk)).unwrap();
    let report = verify_barrier_w(&params, &k, &p, &w, &[], &[50.0, 100.0]).unwrap();
    assert_eq!(report.v_residual.len(), 2);
    assert!(report.v_residual_bounded(), "{:?}", report.v_residual);
}
