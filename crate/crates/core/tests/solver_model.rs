use nejunction_core::analytic::{rate_constant, CellParams};
use nejunction_core::geometry::{
    effective_geometry, EffectiveGeometry, JunctionGeometry, Reporter,
};
use nejunction_core::solver::{
    build_grid, convergence_study, simulate, step, Mode, SimConfig, SimState, TimeScheme,
};
use proptest::prelude::*;

fn reference_cfg(reporter: Reporter) -> SimConfig {
    let geom = effective_geometry(&JunctionGeometry::reference_cone(), &reporter).unwrap();
    SimConfig::new(CellParams::reference(), geom, reporter)
}

/// δ₁ → 0 solution of the two-reservoir system with finite δ₂, starting
/// from ρ_NE = 0, ρ_ER = 1.
fn two_reservoir_ne(kappa: f64, delta2: f64, t: f64) -> f64 {
    -(-kappa * (1.0 + delta2) * t).exp_m1() / (1.0 + delta2)
}

#[test]
fn mass_is_conserved_over_long_runs() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.t_end = Some(100.0);
    cfg.settings.stride = 1000;
    let out = simulate(&cfg).unwrap();
    let m0 = out.mass[0];
    let drift = out
        .mass
        .iter()
        .map(|m| ((m - m0) / m0).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-9, "relative drift {drift:e}");
}

#[test]
fn full_mode_follows_two_reservoir_solution() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.stride = 10;
    let kappa = cfg.kappa();
    cfg.settings.t_end = Some(3.0 / kappa);
    let out = simulate(&cfg).unwrap();
    let delta2 = 30.0 / 200.0;
    for (t, v) in out.times.iter().zip(&out.rho_ne) {
        let exact = two_reservoir_ne(kappa, delta2, *t);
        assert!((v - exact).abs() < 2e-4, "t={t}: {v} vs {exact}");
    }
}

#[test]
fn full_mode_plateau_is_mass_equilibrium() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.dt = 0.05;
    cfg.settings.t_end = Some(120.0);
    let out = simulate(&cfg).unwrap();
    let grid = build_grid(&cfg.geom, cfg.settings.n_cells).unwrap();
    let total_volume = 230.0 + 40.0 * grid.junction_volume();
    let equilibrium = out.mass[0] / total_volume;
    let end = out.final_state;
    assert!((equilibrium - 0.8696).abs() < 1e-4);
    assert!((end.rho_ne - equilibrium).abs() < 1e-8);
    assert!((end.rho_er - equilibrium).abs() < 1e-8);
    assert!(end.rho_j.iter().all(|v| (v - equilibrium).abs() < 1e-8));
}

#[test]
fn ne_density_never_decreases() {
    let mut cfg = reference_cfg(Reporter::large());
    cfg.settings.stride = 1;
    cfg.settings.dt = 0.01;
    cfg.settings.t_end = Some(60.0);
    let out = simulate(&cfg).unwrap();
    assert!(out.rho_ne.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn frozen_er_within_half_percent_of_exponential() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.mode = Mode::FrozenEr;
    cfg.settings.dt = 0.01;
    cfg.settings.stride = 1;
    let kappa = cfg.kappa();
    cfg.settings.t_end = Some(3.0 / kappa);
    let out = simulate(&cfg).unwrap();
    for (t, v) in out.times.iter().zip(&out.rho_ne) {
        let exact = 1.0 - (-kappa * t).exp();
        assert!((v - exact).abs() <= 0.005 * exact.max(1e-300) + 1e-15);
    }
}

#[test]
fn frozen_er_is_within_two_percent_at_five_seconds() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.mode = Mode::FrozenEr;
    cfg.settings.dt = 0.01;
    cfg.settings.t_end = Some(5.0);
    let kappa = cfg.kappa();
    let v = simulate(&cfg).unwrap().final_state.rho_ne;
    let exact = 1.0 - (-kappa * 5.0).exp();
    assert!(((v - exact) / exact).abs() < 0.02);
}

#[test]
fn quasistationary_mode_matches_full_mode() {
    let mut full = reference_cfg(Reporter::small());
    full.settings.t_end = Some(10.0);
    let mut qs = full.clone();
    qs.settings.mode = Mode::QuasistationaryJunction;
    let a = simulate(&full).unwrap();
    let b = simulate(&qs).unwrap();
    for (x, y) in a.rho_ne.iter().zip(&b.rho_ne) {
        assert!((x - y).abs() < 2e-4);
    }
    let m0 = b.mass[0];
    assert!(b.mass.iter().all(|m| ((m - m0) / m0).abs() < 1e-13));
}

#[test]
fn time_refinement_is_first_order() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.n_cells = 16;
    cfg.settings.t_end = Some(5.0);
    let report = convergence_study(&cfg, &[], &[0.08, 0.04, 0.02, 0.01, 0.005]).unwrap();
    let order = report.temporal_order.unwrap();
    assert!((order - 1.0).abs() < 0.05, "observed order {order}");
    // halving dt halves the error against the finest level, asymptotically
    let e: Vec<f64> = report.temporal.iter().map(|l| l.error).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn space_refinement_is_second_order_on_cone() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.t_end = Some(5.0);
    cfg.settings.dt = 0.01;
    let report = convergence_study(&cfg, &[4, 8, 16, 32, 64], &[]).unwrap();
    let order = report.spatial_order.unwrap();
    assert!(order >= 1.9, "observed order {order}");
    let e: Vec<f64> = report.spatial.iter().map(|l| l.error).collect();
    assert!(e[..e.len() - 1].windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn cylinder_flux_is_resolution_independent() {
    let geom =
        EffectiveGeometry::from_geometry(JunctionGeometry::cone(9.25e-3, 0.0, 0.01).unwrap());
    let mut cfg = SimConfig::new(CellParams::reference(), geom, Reporter::small());
    cfg.settings.mode = Mode::Full;
    cfg.settings.t_end = Some(5.0);
    cfg.settings.dt = 0.01;
    let report = convergence_study(&cfg, &[4, 16, 64], &[]).unwrap();
    for level in &report.spatial {
        // only the (negligible) junction storage differs between levels
        assert!(level.error < 1e-7, "{level:?}");
    }
}

#[test]
fn crank_nicolson_conserves_mass_and_tracks_euler() {
    let mut ie = reference_cfg(Reporter::small());
    ie.settings.t_end = Some(5.0);
    ie.settings.dt = 0.01;
    let mut cn = ie.clone();
    cn.settings.scheme = TimeScheme::CrankNicolson;
    let a = simulate(&ie).unwrap();
    let b = simulate(&cn).unwrap();
    let m0 = b.mass[0];
    assert!(b.mass.iter().all(|m| ((m - m0) / m0).abs() < 1e-12));
    assert!((a.final_state.rho_ne - b.final_state.rho_ne).abs() < 2e-3);
}

#[test]
fn reference_rates_from_solver_config() {
    let cfg = reference_cfg(Reporter::large());
    let r = rate_constant(&cfg.cell, &cfg.geom, &cfg.reporter);
    assert!((cfg.kappa() - r.kappa).abs() < 1e-18);
    assert!((cfg.t_end() - 5.0 / r.kappa).abs() < 1e-9);
}

#[test]
fn deterministic_output() {
    let mut cfg = reference_cfg(Reporter::small());
    cfg.settings.t_end = Some(2.0);
    cfg.settings.record_junction = true;
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
    let mut j = Vec::new();
    a.write_junction_csv(&mut j).unwrap();
    let text = String::from_utf8(j).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 65);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn implicit_steps_respect_bounds_and_conserve_mass(
        init in prop::collection::vec(0.0f64..1.0, 10),
        log_dt in -7.0f64..1.0,
        angle_deg in 0.0f64..60.0,
    ) {
        let rep = Reporter::small();
        let geom = effective_geometry(&JunctionGeometry::cone(11e-3, angle_deg.to_radians(), 0.01).unwrap(), &rep).unwrap();
        let cfg = SimConfig::new(CellParams::reference(), geom, rep);
        let grid = build_grid(&cfg.geom, 8).unwrap();
        let mut s = SimState { t: 0.0, rho_ne: init[0], rho_er: init[1], rho_j: init[2..].to_vec() };
        let lo = init.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = init.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let m0 = s.total_mass(&cfg.cell, &grid);
        let dt = 10f64.powf(log_dt);
        for _ in 0..5 {
            s = step(&s, &cfg, &grid, dt).unwrap();
            let all = s.rho_j.iter().chain([&s.rho_ne, &s.rho_er]);
            for &v in all {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{} outside [{}, {}]", v, lo, hi);
            }
        }
        let m1 = s.total_mass(&cfg.cell, &grid);
        prop_assert!(((m1 - m0) / m0).abs() < 1e-12);
    }
}
