//! Time-dependent junction/reservoir model.
//!
//! The junction density is discretized with a conservative finite-volume
//! scheme on a uniform grid. Each junction cell exchanges mass with its
//! neighbours through faces with conductance `D·A(face)/Δz`; the end cells
//! couple to the NE (z = 0) and ER (z = L) reservoirs through half-cell
//! conductances `2·D·A/Δz`. Ordering the unknowns as `[ρ_NE, ρ_J.., ρ_ER]`
//! makes the coupled system tridiagonal, so every implicit step is an exact
//! Thomas solve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{rate_constant, CellParams};
use crate::error::{Error, Result};
use crate::geometry::{EffectiveGeometry, Reporter};
use crate::series::TimeSeries;

/// Uniform finite-volume grid along a junction (z = 0 at the NE end).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dz: f64,
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    /// `A` evaluated exactly at each face.
    pub face_areas: Vec<f64>,
    /// `∫ A dz` over each cell.
    pub volumes: Vec<f64>,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn junction_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

pub const MIN_CELLS: usize = 4;

pub fn build_grid(geom: &EffectiveGeometry, n_cells: usize) -> Result<Grid> {
    if n_cells < MIN_CELLS {
        return Err(Error::Argument(format!(
            "grid needs at least {MIN_CELLS} cells, got {n_cells}"
        )));
    }
    let len = geom.length();
    let dz = len / n_cells as f64;
    let faces: Vec<f64> = (0..=n_cells)
        .map(|i| if i == n_cells { len } else { i as f64 * dz })
        .collect();
    let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let face_areas = faces
        .iter()
        .map(|&z| geom.area_at(z))
        .collect::<Result<Vec<_>>>()?;
    let volumes = faces
        .windows(2)
        .map(|w| geom.volume_between(w[0], w[1]))
        .collect();
    Ok(Grid {
        dz,
        faces,
        centers,
        face_areas,
        volumes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Junction PDE coupled to both reservoir ODEs.
    Full,
    /// Junction replaced by its steady flux; both reservoirs evolve.
    QuasistationaryJunction,
    /// Steady junction flux and a constant ER density.
    FrozenEr,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "quasistationary" | "quasistationary_junction" => Ok(Mode::QuasistationaryJunction),
            "frozen_er" | "frozen-er" => Ok(Mode::FrozenEr),
            other => Err(Error::Argument(format!(
                "unknown mode `{other}` (expected full, quasistationary, frozen_er)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    ImplicitEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub n_cells: usize,
    /// Time step, s.
    pub dt: f64,
    /// End time, s; `None` means five reduced-model time constants.
    pub t_end: Option<f64>,
    pub mode: Mode,
    pub scheme: TimeScheme,
    /// Record every `stride`-th step (the final step is always recorded).
    pub stride: usize,
    pub record_junction: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_cells: 64,
            dt: 1e-3,
            t_end: None,
            mode: Mode::Full,
            scheme: TimeScheme::ImplicitEuler,
            stride: 100,
            record_junction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub rho_j: Vec<f64>,
    pub rho_er: f64,
    pub rho_ne: f64,
}

impl SimState {
    /// State right after a complete NE bleach: `ρ_NE = 0`, `ρ_ER = ρ_ER0`,
    /// junction linear in z between the two.
    pub fn bleach(grid: &Grid, rho_er0: f64) -> Self {
        let len = *grid.faces.last().unwrap();
        Self {
            t: 0.0,
            rho_j: grid.centers.iter().map(|z| rho_er0 * z / len).collect(),
            rho_er: rho_er0,
            rho_ne: 0.0,
        }
    }

    pub fn uniform(grid: &Grid, value: f64) -> Self {
        Self {
            t: 0.0,
            rho_j: vec![value; grid.n_cells()],
            rho_er: value,
            rho_ne: value,
        }
    }

    /// `V_ER ρ_ER + V_NE ρ_NE + k Σ vᵢ ρ_J,i`.
    pub fn total_mass(&self, cell: &CellParams, grid: &Grid) -> f64 {
        let junction: f64 = grid
            .volumes
            .iter()
            .zip(&self.rho_j)
            .map(|(v, r)| v * r)
            .sum();
        cell.volume_er * self.rho_er
            + cell.volume_ne * self.rho_ne
            + f64::from(cell.junctions) * junction
    }

    pub fn reservoir_mass(&self, cell: &CellParams) -> f64 {
        cell.volume_er * self.rho_er + cell.volume_ne * self.rho_ne
    }

    fn validate(&self, n_cells: usize) -> Result<()> {
        if self.rho_j.len() != n_cells {
            return Err(Error::Argument(format!(
                "initial junction state has {} cells, grid has {n_cells}",
                self.rho_j.len()
            )));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.rho_er) && ok(self.rho_ne) && self.rho_j.iter().all(|&v| ok(v))) {
            return Err(Error::Argument(
                "densities must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub cell: CellParams,
    pub geom: EffectiveGeometry,
    pub reporter: Reporter,
    pub settings: SolverSettings,
    /// Defaults to [`SimState::bleach`] with `ρ_ER0 = 1`.
    pub initial: Option<SimState>,
}

impl SimConfig {
    pub fn new(cell: CellParams, geom: EffectiveGeometry, reporter: Reporter) -> Self {
        Self {
            cell,
            geom,
            reporter,
            settings: SolverSettings::default(),
            initial: None,
        }
    }

    pub fn kappa(&self) -> f64 {
        rate_constant(&self.cell, &self.geom, &self.reporter).kappa
    }

    pub fn t_end(&self) -> f64 {
        self.settings.t_end.unwrap_or_else(|| 5.0 / self.kappa())
    }

    /// Conductance of all `k` junctions in the quasi-stationary limit,
    /// `k D A*/L` (µm³/s).
    pub fn total_conductance(&self) -> f64 {
        f64::from(self.cell.junctions) * self.reporter.diffusivity * self.geom.harmonic_mean_area()
            / self.geom.length()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::Argument(format!(
                "dt must be positive, got {}",
                s.dt
            )));
        }
        let t_end = self.t_end();
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Argument(format!(
                "t_end must be non-negative, got {t_end}"
            )));
        }
        if s.stride == 0 {
            return Err(Error::Argument("stride must be at least 1".into()));
        }
        if s.n_cells < MIN_CELLS {
            return Err(Error::Argument(format!(
                "n_cells must be at least {MIN_CELLS}, got {}",
                s.n_cells
            )));
        }
        Ok(())
    }
}

/// Precomputed tridiagonal factorization for one step size.
struct Stepper {
    mode: Mode,
    scheme: TimeScheme,
    dt: f64,
    /// Mass weights of the unknowns `[V_NE, k v₁.., V_ER]`.
    weights: Vec<f64>,
    /// Conductance between unknown `i` and `i + 1`.
    links: Vec<f64>,
    sub: Vec<f64>,
    upper_scaled: Vec<f64>,
    pivots: Vec<f64>,
    /// Relaxation rate of `ρ_ER − ρ_NE` in the reduced modes.
    relax_rate: f64,
    er_fraction: f64,
    steady_profile: Vec<f64>,
}

impl Stepper {
    fn new(cfg: &SimConfig, grid: &Grid, dt: f64) -> Result<Self> {
        let k = f64::from(cfg.cell.junctions);
        let d = cfg.reporter.diffusivity;
        let n = grid.n_cells();
        let mut weights = Vec::with_capacity(n + 2);
        weights.push(cfg.cell.volume_ne);
        weights.extend(grid.volumes.iter().map(|v| k * v));
        weights.push(cfg.cell.volume_er);
        let links: Vec<f64> = grid
            .face_areas
            .iter()
            .enumerate()
            .map(|(f, &a)| {
                let h = if f == 0 || f == n {
                    0.5 * grid.dz
                } else {
                    grid.dz
                };
                k * d * a / h
            })
            .collect();

        let theta = match cfg.settings.scheme {
            TimeScheme::ImplicitEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        };
        let m = n + 2;
        let mut diag = vec![0.0; m];
        let mut sub = vec![0.0; m];
        let mut sup = vec![0.0; m];
        for i in 0..m {
            diag[i] = weights[i] / dt;
            if i > 0 {
                diag[i] += theta * links[i - 1];
                sub[i] = -theta * links[i - 1];
            }
            if i + 1 < m {
                diag[i] += theta * links[i];
                sup[i] = -theta * links[i];
            }
        }
        let mut pivots = vec![0.0; m];
        let mut upper_scaled = vec![0.0; m];
        for i in 0..m {
            let p = if i == 0 {
                diag[0]
            } else {
                diag[i] - sub[i] * upper_scaled[i - 1]
            };
            if p == 0.0 || !p.is_finite() {
                return Err(Error::Singular(i));
            }
            pivots[i] = p;
            upper_scaled[i] = sup[i] / p;
        }

        let g = cfg.total_conductance();
        let relax_rate = match cfg.settings.mode {
            Mode::FrozenEr => g / cfg.cell.volume_ne,
            _ => g / cfg.cell.volume_ne + g / cfg.cell.volume_er,
        };
        let total_inv = cfg.geom.inverse_area_integral(0.0, cfg.geom.length());
        let steady_profile = grid
            .centers
            .iter()
            .map(|&z| cfg.geom.inverse_area_integral(0.0, z) / total_inv)
            .collect();

        Ok(Self {
            mode: cfg.settings.mode,
            scheme: cfg.settings.scheme,
            dt,
            weights,
            links,
            sub,
            upper_scaled,
            pivots,
            relax_rate,
            er_fraction: cfg.cell.volume_er / (cfg.cell.volume_er + cfg.cell.volume_ne),
            steady_profile,
        })
    }

    fn step(&self, state: &SimState) -> SimState {
        match self.mode {
            Mode::Full => self.step_full(state),
            Mode::QuasistationaryJunction | Mode::FrozenEr => self.step_reduced(state),
        }
    }

    /// Exact propagation of the linear two-reservoir system: the density
    /// difference decays as `exp(−λ dt)`.
    fn step_reduced(&self, state: &SimState) -> SimState {
        let gap = state.rho_er - state.rho_ne;
        let transferred = -gap * (-self.relax_rate * self.dt).exp_m1();
        let (rho_ne, rho_er) = match self.mode {
            Mode::FrozenEr => (state.rho_ne + transferred, state.rho_er),
            _ => (
                state.rho_ne + self.er_fraction * transferred,
                state.rho_er - (1.0 - self.er_fraction) * transferred,
            ),
        };
        let rho_j = self
            .steady_profile
            .iter()
            .map(|s| rho_ne + (rho_er - rho_ne) * s)
            .collect();
        SimState {
            t: state.t + self.dt,
            rho_j,
            rho_er,
            rho_ne,
        }
    }

    fn step_full(&self, state: &SimState) -> SimState {
        let m = self.weights.len();
        let mut x = Vec::with_capacity(m);
        x.push(state.rho_ne);
        x.extend_from_slice(&state.rho_j);
        x.push(state.rho_er);

        let mut rhs: Vec<f64> = x
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v / self.dt)
            .collect();
        if self.scheme == TimeScheme::CrankNicolson {
            for (i, link) in self.links.iter().enumerate() {
                let flow = 0.5 * link * (x[i + 1] - x[i]);
                rhs[i] += flow;
                rhs[i + 1] -= flow;
            }
        }

        // Thomas forward sweep with the cached pivots, then back substitution.
        let mut y = rhs;
        y[0] /= self.pivots[0];
        for i in 1..m {
            y[i] = (y[i] - self.sub[i] * y[i - 1]) / self.pivots[i];
        }
        for i in (0..m - 1).rev() {
            y[i] -= self.upper_scaled[i] * y[i + 1];
        }

        SimState {
            t: state.t + self.dt,
            rho_ne: y[0],
            rho_er: y[m - 1],
            rho_j: y[1..m - 1].to_vec(),
        }
    }
}

/// One time step of size `dt`.
pub fn step(state: &SimState, cfg: &SimConfig, grid: &Grid, dt: f64) -> Result<SimState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    state.validate(grid.n_cells())?;
    Ok(Stepper::new(cfg, grid, dt)?.step(state))
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub times: Vec<f64>,
    pub rho_ne: Vec<f64>,
    pub rho_er: Vec<f64>,
    /// Conserved quantity per recorded time: total mass in `Full` mode,
    /// reservoir mass in the reduced modes.
    pub mass: Vec<f64>,
    /// Junction cell centers, µm.
    pub centers: Vec<f64>,
    pub junction: Option<Vec<Vec<f64>>>,
    pub final_state: SimState,
}

impl SimOutput {
    pub fn ne_series(&self) -> TimeSeries {
        TimeSeries::new(self.times.clone(), self.rho_ne.clone())
            .expect("solver times are increasing")
    }

    pub fn er_series(&self) -> TimeSeries {
        TimeSeries::new(self.times.clone(), self.rho_er.clone())
            .expect("solver times are increasing")
    }

    /// CSV `t_s,rho_NE,rho_ER`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,rho_NE,rho_ER")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{}",
                self.times[i], self.rho_ne[i], self.rho_er[i]
            )?;
        }
        Ok(())
    }

    /// Wide CSV with one column per junction cell (`z_<center µm>`).
    pub fn write_junction_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let Some(snaps) = &self.junction else {
            return Err(Error::Argument(
                "junction snapshots were not recorded".into(),
            ));
        };
        write!(out, "t_s")?;
        for z in &self.centers {
            write!(out, ",z_{z}")?;
        }
        writeln!(out)?;
        for (t, row) in self.times.iter().zip(snaps) {
            write!(out, "{t}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let grid = build_grid(&cfg.geom, cfg.settings.n_cells)?;
    let mut state = match &cfg.initial {
        Some(s) => {
            s.validate(grid.n_cells())?;
            s.clone()
        }
        None => SimState::bleach(&grid, 1.0),
    };
    let t0 = state.t;
    let dt = cfg.settings.dt;
    let t_end = cfg.t_end();
    let n_steps = if t_end <= 0.0 {
        0
    } else {
        ((t_end / dt) - 1e-9).ceil().max(1.0) as usize
    };
    let last_dt = t_end - (n_steps.saturating_sub(1)) as f64 * dt;

    let conserved = |s: &SimState| match cfg.settings.mode {
        Mode::Full => s.total_mass(&cfg.cell, &grid),
        _ => s.reservoir_mass(&cfg.cell),
    };
    let mut out = SimOutput {
        times: vec![t0],
        rho_ne: vec![state.rho_ne],
        rho_er: vec![state.rho_er],
        mass: vec![conserved(&state)],
        centers: grid.centers.clone(),
        junction: cfg
            .settings
            .record_junction
            .then(|| vec![state.rho_j.clone()]),
        final_state: state.clone(),
    };
    if n_steps == 0 {
        return Ok(out);
    }

    let main = Stepper::new(cfg, &grid, dt)?;
    let tail = if ((last_dt - dt) / dt).abs() > 1e-9 {
        Some(Stepper::new(cfg, &grid, last_dt)?)
    } else {
        None
    };

    for i in 1..=n_steps {
        let stepper = match (&tail, i == n_steps) {
            (Some(t), true) => t,
            _ => &main,
        };
        state = stepper.step(&state);
        state.t = if i == n_steps {
            t0 + t_end
        } else {
            t0 + i as f64 * dt
        };
        if !(state.rho_ne.is_finite() && state.rho_er.is_finite()) {
            return Err(Error::Singular(i));
        }
        if i % cfg.settings.stride == 0 || i == n_steps {
            out.times.push(state.t);
            out.rho_ne.push(state.rho_ne);
            out.rho_er.push(state.rho_er);
            out.mass.push(conserved(&state));
            if let Some(j) = out.junction.as_mut() {
                j.push(state.rho_j.clone());
            }
        }
    }
    out.final_state = state;
    Ok(out)
}

/// Volume ratios controlling the timescale separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensionless {
    /// Total junction volume over NE volume, `k L A* / V_NE`.
    pub delta1: f64,
    /// `V_NE / V_ER`.
    pub delta2: f64,
    /// Set when either ratio exceeds [`Dimensionless::WARN_THRESHOLD`].
    pub warning: bool,
}

impl Dimensionless {
    /// Above this the reduced exponential model is no longer a close fit.
    pub const WARN_THRESHOLD: f64 = 0.1;
}

pub fn dimensionless_numbers(cfg: &SimConfig) -> Dimensionless {
    let k = f64::from(cfg.cell.junctions);
    let delta1 = k * cfg.geom.length() * cfg.geom.harmonic_mean_area() / cfg.cell.volume_ne;
    let delta2 = cfg.cell.volume_ne / cfg.cell.volume_er;
    Dimensionless {
        delta1,
        delta2,
        warning: delta1 >= Dimensionless::WARN_THRESHOLD || delta2 >= Dimensionless::WARN_THRESHOLD,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLevel {
    pub n_cells: usize,
    pub dt: f64,
    pub rho_ne_end: f64,
    /// `|ρ_NE(t_end) − finest|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub spatial: Vec<ConvergenceLevel>,
    pub temporal: Vec<ConvergenceLevel>,
    /// Richardson estimate from the three finest spatial levels.
    pub spatial_order: Option<f64>,
    pub temporal_order: Option<f64>,
}

/// Refines `n_cells` at the configured `dt`, and `dt` at the configured
/// `n_cells`; errors are measured against the finest level of each family.
pub fn convergence_study(
    cfg: &SimConfig,
    n_cells: &[usize],
    dts: &[f64],
) -> Result<ConvergenceReport> {
    if n_cells.len() < 2 && dts.len() < 2 {
        return Err(Error::Argument(
            "convergence study needs at least two refinement levels".into(),
        ));
    }
    let t_end = cfg.t_end();
    let run = |n: usize, dt: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.settings.n_cells = n;
        c.settings.dt = dt;
        c.settings.t_end = Some(t_end);
        c.settings.record_junction = false;
        c.settings.stride = usize::MAX;
        c.initial = None;
        Ok(*simulate(&c)?.rho_ne.last().unwrap())
    };

    let mut ns = n_cells.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut ds = dts.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    ds.dedup();

    let spatial_vals: Vec<f64> = ns
        .par_iter()
        .map(|&n| run(n, cfg.settings.dt))
        .collect::<Result<_>>()?;
    let temporal_vals: Vec<f64> = ds
        .par_iter()
        .map(|&dt| run(cfg.settings.n_cells, dt))
        .collect::<Result<_>>()?;

    let levels = |vals: &[f64], pick: &dyn Fn(usize) -> (usize, f64)| -> Vec<ConvergenceLevel> {
        let finest = vals.last().copied().unwrap_or(f64::NAN);
        vals.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (n, dt) = pick(i);
                ConvergenceLevel {
                    n_cells: n,
                    dt,
                    rho_ne_end: v,
                    error: (v - finest).abs(),
                }
            })
            .collect()
    };
    let spatial = if ns.len() >= 2 {
        levels(&spatial_vals, &|i| (ns[i], cfg.settings.dt))
    } else {
        Vec::new()
    };
    let temporal = if ds.len() >= 2 {
        levels(&temporal_vals, &|i| (cfg.settings.n_cells, ds[i]))
    } else {
        Vec::new()
    };

    let spatial_h: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    Ok(ConvergenceReport {
        spatial_order: richardson_order(&spatial_h, &spatial_vals),
        temporal_order: richardson_order(&ds, &temporal_vals),
        spatial,
        temporal,
    })
}

/// Observed order `ln(|u₁−u₂| / |u₂−u₃|) / ln(h₂/h₃)` from the three finest
/// levels (`h` descending).
pub fn richardson_order(h: &[f64], values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 3 || h.len() != n {
        return None;
    }
    let d1 = (values[n - 3] - values[n - 2]).abs();
    let d2 = (values[n - 2] - values[n - 1]).abs();
    if d1 == 0.0 || d2 == 0.0 {
        return None;
    }
    Some((d1 / d2).ln() / (h[n - 2] / h[n - 1]).ln())
}
