//! Parameter sweeps over junction length, opening angle, reporter and
//! junction radius, with optional comparison against measured curves.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{rate_constant, recovery_curve, CellParams};
use crate::error::{Error, Result};
use crate::frapfit::{compare_model_data, fit_one_phase};
use crate::geometry::{effective_geometry, Cone, JunctionGeometry, Reporter};
use crate::series::TimeSeries;
use crate::solver::{dimensionless_numbers, simulate, SimConfig, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Analytic,
    FullPde,
}

/// Axis values; an empty axis falls back to the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    /// Junction lengths, µm.
    pub lengths: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub reporters: Vec<Reporter>,
    /// Junction radii before steric correction, µm.
    pub radii: Vec<f64>,
}

impl SweepAxes {
    /// L ∈ {5, 10, 20} nm × α ∈ {0°, 25°, 50°} × {small, large}, R = 11 nm.
    pub fn reference_grid() -> Self {
        Self {
            lengths: vec![5e-3, 10e-3, 20e-3],
            angles_deg: vec![0.0, 25.0, 50.0],
            reporters: vec![Reporter::small(), Reporter::large()],
            radii: vec![11e-3],
        }
    }

    pub fn point_count(&self) -> usize {
        [
            self.lengths.len(),
            self.angles_deg.len(),
            self.reporters.len(),
            self.radii.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub cell: CellParams,
    /// Base junction (un-corrected radius); supplies values for empty axes.
    pub junction: Cone,
    pub reporter: Reporter,
    pub solver: SolverSettings,
    pub axes: SweepAxes,
    /// Measured normalized curves keyed by reporter name.
    pub data: BTreeMap<String, TimeSeries>,
    pub mode: SweepMode,
}

impl SweepSpec {
    pub fn new(axes: SweepAxes) -> Self {
        let JunctionGeometry::Cone(junction) = JunctionGeometry::reference_cone() else {
            unreachable!()
        };
        Self {
            cell: CellParams::reference(),
            junction,
            reporter: Reporter::small(),
            solver: SolverSettings::default(),
            axes,
            data: BTreeMap::new(),
            mode: SweepMode::Analytic,
        }
    }

    fn validate(&self) -> Result<()> {
        let a = &self.axes;
        if a.lengths.is_empty()
            && a.angles_deg.is_empty()
            && a.reporters.is_empty()
            && a.radii.is_empty()
        {
            return Err(Error::Argument(
                "sweep needs at least one non-empty axis".into(),
            ));
        }
        for &l in &a.lengths {
            Cone::new(self.junction.radius, self.junction.angle, l)?;
        }
        for &deg in &a.angles_deg {
            Cone::from_degrees(self.junction.radius, deg, self.junction.length)?;
        }
        for &r in &a.radii {
            Cone::new(r, self.junction.angle, self.junction.length)?;
        }
        for rep in &a.reporters {
            Reporter::new(rep.name.clone(), rep.diffusivity, rep.radius)?;
        }
        Ok(())
    }

    fn points(&self) -> Vec<SweepPoint> {
        let or = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let lengths = or(&self.axes.lengths, self.junction.length);
        let angles = or(&self.axes.angles_deg, self.junction.angle.to_degrees());
        let radii = or(&self.axes.radii, self.junction.radius);
        let reporters = if self.axes.reporters.is_empty() {
            vec![self.reporter.clone()]
        } else {
            self.axes.reporters.clone()
        };
        let mut pts = Vec::with_capacity(self.axes.point_count());
        for &length in &lengths {
            for &alpha_deg in &angles {
                for reporter in &reporters {
                    for &radius in &radii {
                        pts.push(SweepPoint {
                            length,
                            alpha_deg,
                            reporter: reporter.clone(),
                            radius,
                        });
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone)]
struct SweepPoint {
    length: f64,
    alpha_deg: f64,
    reporter: Reporter,
    radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub length_um: f64,
    pub alpha_deg: f64,
    pub reporter: String,
    pub radius_um: f64,
    /// `None` when the reporter does not fit through the junction.
    pub kappa: Option<f64>,
    pub half_time: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: f64,
    pub rmse: Option<f64>,
    pub feasible: bool,
}

pub const SUMMARY_HEADER: &str =
    "L_um,alpha_deg,reporter,R_um,kappa_per_s,half_time_s,delta1,delta2,rmse,status";

fn evaluate(spec: &SweepSpec, p: &SweepPoint) -> Result<SweepRow> {
    let delta2 = spec.cell.volume_ne / spec.cell.volume_er;
    let mut row = SweepRow {
        length_um: p.length,
        alpha_deg: p.alpha_deg,
        reporter: p.reporter.name.clone(),
        radius_um: p.radius,
        kappa: None,
        half_time: None,
        delta1: None,
        delta2,
        rmse: None,
        feasible: false,
    };
    let raw = JunctionGeometry::Cone(Cone::from_degrees(p.radius, p.alpha_deg, p.length)?);
    let geom = match effective_geometry(&raw, &p.reporter) {
        Ok(g) => g,
        Err(Error::InfeasibleGeometry(_)) => return Ok(row),
        Err(e) => return Err(e),
    };
    let mut cfg = SimConfig::new(spec.cell, geom, p.reporter.clone());
    cfg.settings = spec.solver.clone();
    cfg.settings.record_junction = false;
    let data = spec.data.get(&p.reporter.name);

    let kappa = match spec.mode {
        SweepMode::Analytic => {
            let rate = rate_constant(&spec.cell, &cfg.geom, &p.reporter);
            if let Some(d) = data {
                let model = recovery_curve(rate.kappa, 1.0, d.times())?;
                row.rmse = Some(compare_model_data(d, &model)?.rmse);
            }
            rate.kappa
        }
        SweepMode::FullPde => {
            let out = simulate(&cfg)?;
            let grid_volume =
                crate::solver::build_grid(&cfg.geom, cfg.settings.n_cells)?.junction_volume();
            let plateau = out.mass[0]
                / (spec.cell.volume_er
                    + spec.cell.volume_ne
                    + f64::from(spec.cell.junctions) * grid_volume);
            let curve = out.ne_series().map_values(|v| v / plateau);
            if let Some(d) = data {
                row.rmse = Some(compare_model_data(d, &curve)?.rmse);
            }
            let fit = fit_one_phase(&curve, None)?;
            if !fit.converged {
                return Err(Error::Fit(format!(
                    "could not fit simulated recovery at L={} alpha={} {}",
                    p.length, p.alpha_deg, p.reporter.name
                )));
            }
            fit.kappa
        }
    };
    let dims = dimensionless_numbers(&cfg);
    row.kappa = Some(kappa);
    row.half_time = Some(std::f64::consts::LN_2 / kappa);
    row.delta1 = Some(dims.delta1);
    row.feasible = true;
    Ok(row)
}

/// Evaluates every grid point (in parallel on the current rayon pool) and
/// returns rows in lexicographic axis order: length, angle, reporter, radius.
///
/// In `FullPde` mode `κ` is the one-phase fit of the simulated NE curve
/// normalized by its conserved-mass plateau.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.points()
        .par_iter()
        .map(|p| evaluate(spec, p))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.length_um,
            r.alpha_deg,
            r.reporter,
            r.radius_um,
            opt(r.kappa),
            opt(r.half_time),
            opt(r.delta1),
            r.delta2,
            opt(r.rmse),
            if r.feasible { "ok" } else { "infeasible" }
        )?;
    }
    Ok(())
}

/// Model curve (and aligned data, if any) for one sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureCurve {
    pub file_name: String,
    pub t: Vec<f64>,
    pub model: Vec<f64>,
    pub data: Option<Vec<f64>>,
}

impl FigureCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        match &self.data {
            Some(d) => {
                writeln!(out, "t_s,model,data")?;
                for ((t, m), v) in self.t.iter().zip(&self.model).zip(d) {
                    writeln!(out, "{t},{m},{v}")?;
                }
            }
            None => {
                writeln!(out, "t_s,model")?;
                for (t, m) in self.t.iter().zip(&self.model) {
                    writeln!(out, "{t},{m}")?;
                }
            }
        }
        Ok(())
    }
}

/// Plot-ready normalized curves `1 − e^{−κt}`, one per feasible row.
///
/// Rows whose reporter has data are evaluated on the data's time grid with
/// the data alongside; others use `times`.
pub fn emit_figure_data(
    rows: &[SweepRow],
    times: &[f64],
    data: &BTreeMap<String, TimeSeries>,
) -> Result<Vec<FigureCurve>> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| r.kappa.map(|k| (i, r, k)))
        .map(|(i, r, kappa)| {
            let file_name = format!(
                "curve_{i:03}_{}_L{}nm_a{}deg_R{}nm.csv",
                r.reporter,
                r.length_um * 1e3,
                r.alpha_deg,
                r.radius_um * 1e3
            );
            let (t, d) = match data.get(&r.reporter) {
                Some(series) => (series.times().to_vec(), Some(series.values().to_vec())),
                None => (times.to_vec(), None),
            };
            let model = recovery_curve(kappa, 1.0, &t)?.values().to_vec();
            Ok(FigureCurve {
                file_name,
                t,
                model,
                data: d,
            })
        })
        .collect()
}
