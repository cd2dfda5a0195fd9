use std::sync::Arc;

use nldiff_core::asymptotics::{refined_bound_check, BarrierParams};
use nldiff_core::diagnostics::{momentum_limit_check, MomentumWindows};
use nldiff_core::domain::{discretize_kernel, Field, Grid, GridMode, HoleGeometry};
use nldiff_core::evolution::{evolve, validate_initial_data, EvolutionConfig, InitialData, InitialProfile};
use nldiff_core::kernel::Kernel;
use nldiff_core::stationary::{phi_family, SolverOptions};

fn setup(x: f64, h: f64) -> (Kernel, Arc<Grid>, InitialData) {
    let kernel = Kernel::poly3(1.0).unwrap();
    let holes = HoleGeometry::new(vec![(-0.5, 0.5)]).unwrap();
    let grid = Arc::new(Grid::new(x, h, holes, &kernel, GridMode::Exterior).unwrap());
    let profile = InitialProfile::TwoBumps { centers: [2.0, -3.0], widths: [0.5, 0.5], amplitudes: [1.0, 0.5] };
    let data = validate_initial_data(profile.sample(grid.clone()).unwrap()).unwrap();
    (kernel, grid, data)
}

#[test]
fn solution_stays_below_the_gaussian_barrier() {
    let (kernel, grid, data) = setup(80.0, 0.1);
    let params = BarrierParams::default_for(&kernel, 0.5).unwrap();
    let fit = params.t_barrier.ceil();
    let times = vec![fit, 2.0 * fit, 4.0 * fit];
    let mut config = EvolutionConfig::new(0.1, 4.0 * fit, times.clone()).unwrap();
    config.diag_every = 10;
    let dk = discretize_kernel(&kernel, &grid).unwrap();
    let trajectory = evolve(&data, &dk, &config, &[]).unwrap();
    let snapshots: Vec<&Field> = times.iter().map(|&t| trajectory.snapshot_at(t, 1e-6).unwrap()).collect();
    let report = refined_bound_check(&params, &snapshots, &trajectory.diagnostics.column(|r| r.sup_norm)).unwrap();
    assert!(report.holds(), "{report:?}");
    assert_eq!(report.rows.len(), 2);
    assert!(report.constant() >= report.region_constant);
    assert!(refined_bound_check(&params, &snapshots[..1], &[]).is_err());
}

#[test]
fn moments_of_a_moderate_run() {
    let (kernel, grid, data) = setup(40.0, 0.05);
    let fam = phi_family(&kernel, &grid, data.field(), &SolverOptions::default()).unwrap();
    let dk = discretize_kernel(&kernel, &grid).unwrap();
    let config = EvolutionConfig::new(0.05, 200.0, vec![200.0]).unwrap();
    let tracked = [("phi_plus", &fam.phi_plus), ("phi_minus", &fam.phi_minus)];
    let trajectory = evolve(&data, &dk, &config, &tracked).unwrap();
    let series = &trajectory.diagnostics;
    for pair in series.rows.windows(2) {
        assert!(pair[1].mass <= pair[0].mass * (1.0 + 1e-13));
        assert!(pair[1].sup_norm <= pair[0].sup_norm * (1.0 + 1e-13));
    }
    // d = 2a₀ here, so the half-line and whole-line limits coincide
    assert!((fam.m_plus - fam.m_plus_half).abs() <= 1e-12);
    for index in 0..2 {
        assert!(series.conservation_drift(index).unwrap() <= 1e-10);
    }
    let last = series.rows.last().unwrap();
    assert!((last.m_phi[0] - fam.m_plus).abs() <= 1e-9 * fam.m_plus);
    let report = momentum_limit_check(series, fam.m_plus, fam.m_minus, MomentumWindows::dyadic(200.0)).unwrap();
    assert!(report.bounded, "{report:?}");
    assert!(report.final_relative_gap_plus < 0.1 && report.final_relative_gap_minus < 0.1);
}
