//! Reduced two-reservoir model: the junction is quasi-stationary and the ER
//! density is frozen, so the NE recovers exponentially with rate `κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EffectiveGeometry, Reporter};
use crate::series::TimeSeries;

/// Junction count and reservoir volumes (µm³).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub junctions: u32,
    pub volume_er: f64,
    pub volume_ne: f64,
}

impl CellParams {
    pub fn new(junctions: u32, volume_er: f64, volume_ne: f64) -> Result<Self> {
        if junctions < 1 {
            return Err(Error::Domain("junction count must be at least 1".into()));
        }
        if !(volume_ne > 0.0 && volume_ne.is_finite()) {
            return Err(Error::Domain(format!(
                "V_NE must be positive, got {volume_ne}"
            )));
        }
        if !(volume_er > volume_ne && volume_er.is_finite()) {
            return Err(Error::Domain(format!(
                "V_ER ({volume_er}) must exceed V_NE ({volume_ne})"
            )));
        }
        Ok(Self {
            junctions,
            volume_er,
            volume_ne,
        })
    }

    /// HeLa reference cell: 40 junctions, V_ER = 200 µm³, V_NE = 30 µm³.
    pub fn reference() -> Self {
        Self {
            junctions: 40,
            volume_er: 200.0,
            volume_ne: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// Transport rate constant, 1/s.
    pub kappa: f64,
    /// Harmonic-mean junction cross-section, µm².
    pub a_star: f64,
    /// `ln 2 / κ`, s.
    pub half_time: f64,
}

/// `κ = k D A* / (V_NE L)`.
pub fn rate_constant(
    cell: &CellParams,
    geom: &EffectiveGeometry,
    reporter: &Reporter,
) -> RateResult {
    let a_star = geom.harmonic_mean_area();
    let kappa = f64::from(cell.junctions) * reporter.diffusivity * a_star
        / (cell.volume_ne * geom.length());
    RateResult {
        kappa,
        a_star,
        half_time: std::f64::consts::LN_2 / kappa,
    }
}

/// NE density `ρ_ER0 (1 − e^{−κt})` after a complete NE bleach at t = 0.
pub fn recovery_curve(kappa: f64, rho_er0: f64, times: &[f64]) -> Result<TimeSeries> {
    if let Some(&t0) = times.first() {
        if t0 < 0.0 {
            return Err(Error::Argument(format!(
                "times must be non-negative, got {t0}"
            )));
        }
    }
    TimeSeries::from_fn(times.to_vec(), |t| -rho_er0 * (-kappa * t).exp_m1())
}

/// Quasi-stationary flux through one junction, positive toward the NE.
pub fn junction_flux(geom: &EffectiveGeometry, diffusivity: f64, rho_er: f64, rho_ne: f64) -> f64 {
    diffusivity * geom.harmonic_mean_area() * (rho_er - rho_ne) / geom.length()
}
