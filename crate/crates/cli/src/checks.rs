//! Built-in verification suite run by `nejunction check`.

use nejunction_core::analytic::recovery_curve;
use nejunction_core::geometry::{Cone, JunctionGeometry};
use nejunction_core::solver::{simulate, Mode};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn outcome(name: &'static str, value: f64, limit: f64, what: &str) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: value < limit,
        detail: format!("{what} {value:.3e} (limit {limit:.0e})"),
    }
}

/// Total mass in full mode over 10⁴ implicit steps.
fn conservation(cfg: &RunConfig) -> Result<CheckOutcome> {
    let mut sim = cfg.sim_config()?;
    sim.settings.mode = Mode::Full;
    sim.settings.t_end = Some(sim.settings.dt * 1e4);
    sim.settings.stride = 1000;
    let out = simulate(&sim)?;
    let m0 = out.mass[0];
    let drift = out
        .mass
        .iter()
        .map(|m| ((m - m0) / m0).abs())
        .fold(0.0, f64::max);
    Ok(outcome(
        "conservation",
        drift,
        1e-9,
        "max relative mass drift",
    ))
}

/// Closed-form A* against adaptive quadrature over the configured sweep grid.
fn cone_closed_form(cfg: &RunConfig) -> Result<CheckOutcome> {
    let axes = &cfg.sweep.axes;
    let mut worst = 0.0f64;
    for &l in &axes.lengths {
        for &a in &axes.angles_deg {
            for &r in &axes.radii {
                let g = JunctionGeometry::Cone(Cone::from_degrees(r, a, l)?);
                let exact = g.harmonic_mean_area();
                let quad = g.harmonic_mean_area_quadrature(1e-10);
                worst = worst.max(((quad - exact) / exact).abs());
            }
        }
    }
    Ok(outcome(
        "cone_closed_form",
        worst,
        1e-6,
        "max relative A* error",
    ))
}

/// Frozen-ER mode against the exponential, and quasi-stationary against
/// full mode.
fn reduced_vs_full(cfg: &RunConfig) -> Result<Vec<CheckOutcome>> {
    let mut sim = cfg.sim_config()?;
    sim.settings.t_end = Some(3.0 / sim.kappa());
    sim.settings.dt = sim.t_end() / 3000.0;
    sim.settings.stride = 100;
    let run = |mode| {
        let mut c = sim.clone();
        c.settings.mode = mode;
        simulate(&c)
    };
    let frozen = run(Mode::FrozenEr)?;
    let exact = recovery_curve(sim.kappa(), 1.0, &frozen.times)?;
    let rel = frozen
        .rho_ne
        .iter()
        .zip(exact.values())
        .skip(1)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);

    let qs = run(Mode::QuasistationaryJunction)?;
    let full = run(Mode::Full)?;
    let gap = qs
        .rho_ne
        .iter()
        .zip(&full.rho_ne)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        outcome(
            "frozen_er_exact",
            rel,
            1e-10,
            "max relative deviation from 1-exp(-kt)",
        ),
        outcome("quasistationary_vs_full", gap, 1e-3, "max |rho_NE| gap"),
    ])
}

pub fn run_checks(cfg: &RunConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![conservation(cfg)?, cone_closed_form(cfg)?];
    out.extend(reduced_vs_full(cfg)?);
    Ok(out)
}
