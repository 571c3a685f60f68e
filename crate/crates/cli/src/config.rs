//! Run configuration: one TOML document drives every subcommand.
//!
//! Units are part of the key names and values are converted on load
//! (degrees become radians). Omitted keys take the reference-cell values.
//! Command-line overrides are applied to the parsed document before
//! validation, so a flag always wins over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nejunction_core::frap2d::WalkConfig;
use nejunction_core::geometry::{effective_geometry, Cone, JunctionGeometry, Profile, Reporter};
use nejunction_core::solver::{Mode, SimConfig, SolverSettings, TimeScheme};
use nejunction_core::sweep::{SweepAxes, SweepMode, SweepSpec};
use nejunction_core::{CellParams, EffectiveGeometry};

use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    cell: RawCell,
    #[serde(default)]
    junction: RawJunction,
    #[serde(default)]
    reporter: RawReporter,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    fit: RawFit,
    #[serde(default)]
    frap2d: RawFrap2d,
    #[serde(default)]
    io: RawIo,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    k: Option<i64>,
    #[serde(rename = "V_ER_um3")]
    v_er: Option<f64>,
    #[serde(rename = "V_NE_um3")]
    v_ne: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJunction {
    kind: Option<String>,
    #[serde(rename = "R_um")]
    radius: Option<f64>,
    alpha_deg: Option<f64>,
    #[serde(rename = "L_um")]
    length: Option<f64>,
    profile_csv: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReporter {
    name: Option<String>,
    #[serde(rename = "D_um2_s")]
    diffusivity: Option<f64>,
    r_um: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    n_cells: Option<i64>,
    dt_s: Option<f64>,
    t_end_s: Option<f64>,
    mode: Option<String>,
    scheme: Option<String>,
    stride: Option<i64>,
    record_junction: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    mode: Option<String>,
    #[serde(rename = "L_um")]
    lengths: Option<Vec<f64>>,
    alpha_deg: Option<Vec<f64>>,
    reporters: Option<Vec<String>>,
    #[serde(rename = "R_um")]
    radii: Option<Vec<f64>>,
    large_r_um: Option<Vec<f64>>,
    data: Option<BTreeMap<String, PathBuf>>,
    curve_t_end_s: Option<f64>,
    curve_points: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    cells_dir: Option<PathBuf>,
    background: Option<f64>,
    reference_csv: Option<PathBuf>,
    grid_points: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrap2d {
    mask: Option<PathBuf>,
    bleach: Option<PathBuf>,
    observed: Option<PathBuf>,
    pixel_um: Option<f64>,
    n_particles: Option<i64>,
    n_steps: Option<i64>,
    seed: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIo {
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JunctionSpec {
    Cone(Cone),
    Profile { path: PathBuf, profile: Profile },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub axes: SweepAxes,
    /// Measured normalized curves keyed by reporter name.
    pub data: BTreeMap<String, PathBuf>,
    pub curve_t_end: Option<f64>,
    pub curve_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub cells_dir: Option<PathBuf>,
    pub background: f64,
    pub reference_csv: Option<PathBuf>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frap2dConfig {
    pub mask: Option<PathBuf>,
    pub bleach: Option<PathBuf>,
    pub observed: Option<PathBuf>,
    pub pixel_size: f64,
    pub walk: WalkConfig,
}

/// Validated configuration in internal units (µm, s, radians).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub cell: CellParams,
    pub junction: JunctionSpec,
    pub reporter: Reporter,
    pub solver: SolverSettings,
    pub sweep: SweepConfig,
    pub fit: FitConfig,
    pub frap2d: Frap2dConfig,
    /// Where results go; not part of the config hash.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn count(key: &str, v: i64, min: i64) -> Result<usize> {
    if v >= min {
        Ok(v as usize)
    } else {
        Err(invalid(key, format!("must be at least {min}, got {v}")))
    }
}

fn angle_deg(key: &str, v: f64) -> Result<f64> {
    if (0.0..90.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(
            key,
            format!("must lie in [0, 90) degrees, got {v}"),
        ))
    }
}

/// Resolves a path from the config file against the file's directory.
fn rebase(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

/// `section.key=value` override; the value is read as a TOML literal and
/// falls back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s.split_once('=').ok_or_else(|| {
        CliError::Usage(format!(
            "override `{s}` is not of the form section.key=value"
        ))
    })?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

fn apply_override(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| CliError::Usage(format!("override key `{key}` must be section.key")))?;
    let entry = doc
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(invalid(section, "is not a table")),
    }
}

impl RunConfig {
    /// Reference values for every key.
    pub fn reference() -> Self {
        Self::from_toml_str("", None, &[]).expect("defaults are valid")
    }

    /// Loads `path` (or defaults when `None`) and applies overrides.
    /// Relative paths inside the file resolve against its directory;
    /// paths given as overrides resolve against the working directory.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text, Some(p.parent().unwrap_or(Path::new("."))), overrides)
            }
            None => Self::from_toml_str("", None, overrides),
        }
    }

    pub fn from_toml_str(
        text: &str,
        base: Option<&Path>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Parse(one_line(&e.to_string())))?;
        // Paths in the file are rebased before overrides land, so flag
        // paths keep their working-directory meaning.
        let mut raw_file: RawConfig = doc
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Parse(one_line(&e.to_string())))?;
        rebase_paths(&mut raw_file, base);
        if overrides.is_empty() {
            return Self::resolve(raw_file);
        }
        for (k, v) in overrides {
            apply_override(&mut doc, k, v.clone())?;
        }
        let mut raw: RawConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Parse(one_line(&e.to_string())))?;
        // Keep the file's rebased paths unless a flag replaced them.
        let overridden = |key: &str| overrides.iter().any(|(k, _)| k == key);
        macro_rules! keep {
            ($key:literal, $($f:ident).+) => {
                if !overridden($key) {
                    raw.$($f).+ = raw_file.$($f).+.clone();
                }
            };
        }
        keep!("junction.profile_csv", junction.profile_csv);
        keep!("sweep.data", sweep.data);
        keep!("fit.cells_dir", fit.cells_dir);
        keep!("fit.reference_csv", fit.reference_csv);
        keep!("frap2d.mask", frap2d.mask);
        keep!("frap2d.bleach", frap2d.bleach);
        keep!("frap2d.observed", frap2d.observed);
        keep!("io.output_dir", io.output_dir);
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let reference = CellParams::reference();
        let k = match raw.cell.k {
            Some(k) if k < 1 || k > i64::from(u32::MAX) => {
                return Err(invalid(
                    "cell.k",
                    format!("must be a positive integer, got {k}"),
                ))
            }
            Some(k) => k as u32,
            None => reference.junctions,
        };
        let v_er = positive(
            "cell.V_ER_um3",
            raw.cell.v_er.unwrap_or(reference.volume_er),
        )?;
        let v_ne = positive(
            "cell.V_NE_um3",
            raw.cell.v_ne.unwrap_or(reference.volume_ne),
        )?;
        let cell = CellParams::new(k, v_er, v_ne).map_err(|e| invalid("cell.V_ER_um3", e))?;

        let JunctionGeometry::Cone(base) = JunctionGeometry::reference_cone() else {
            unreachable!()
        };
        let j = raw.junction;
        let kind = j.kind.as_deref().unwrap_or(if j.profile_csv.is_some() {
            "profile"
        } else {
            "cone"
        });
        let radius = positive("junction.R_um", j.radius.unwrap_or(base.radius))?;
        let alpha = angle_deg(
            "junction.alpha_deg",
            j.alpha_deg.unwrap_or(base.angle.to_degrees()),
        )?;
        let length = positive("junction.L_um", j.length.unwrap_or(base.length))?;
        let cone = Cone::from_degrees(radius, alpha, length).map_err(|e| invalid("junction", e))?;
        let junction = match kind {
            "cone" => JunctionSpec::Cone(cone),
            "profile" => {
                let path = j.profile_csv.ok_or_else(|| {
                    invalid(
                        "junction.profile_csv",
                        "required when junction.kind = \"profile\"",
                    )
                })?;
                let profile = Profile::read_csv_path(&path)
                    .map_err(|e| invalid("junction.profile_csv", e))?;
                JunctionSpec::Profile { path, profile }
            }
            other => {
                return Err(invalid(
                    "junction.kind",
                    format!("expected \"cone\" or \"profile\", got \"{other}\""),
                ))
            }
        };

        let r = raw.reporter;
        let name = r.name.unwrap_or_else(|| "small".into());
        let reporter = match Reporter::preset(&name) {
            Some(p) => Reporter::new(
                name,
                positive("reporter.D_um2_s", r.diffusivity.unwrap_or(p.diffusivity))?,
                r.r_um.unwrap_or(p.radius),
            ),
            None => {
                let d = r.diffusivity.ok_or_else(|| {
                    invalid(
                        "reporter.D_um2_s",
                        format!("required for custom reporter \"{name}\""),
                    )
                })?;
                let rr = r.r_um.ok_or_else(|| {
                    invalid(
                        "reporter.r_um",
                        format!("required for custom reporter \"{name}\""),
                    )
                })?;
                Reporter::new(name, positive("reporter.D_um2_s", d)?, rr)
            }
        }
        .map_err(|e| invalid("reporter.r_um", e))?;

        let s = raw.solver;
        let defaults = SolverSettings::default();
        let mode = match s.mode.as_deref() {
            None => defaults.mode,
            Some(m) => m.parse::<Mode>().map_err(|e| invalid("solver.mode", e))?,
        };
        let scheme = match s.scheme.as_deref() {
            None => defaults.scheme,
            Some("implicit_euler") => TimeScheme::ImplicitEuler,
            Some("crank_nicolson") => TimeScheme::CrankNicolson,
            Some(other) => {
                return Err(invalid(
                    "solver.scheme",
                    format!("expected \"implicit_euler\" or \"crank_nicolson\", got \"{other}\""),
                ))
            }
        };
        let solver = SolverSettings {
            n_cells: match s.n_cells {
                Some(n) => count(
                    "solver.n_cells",
                    n,
                    nejunction_core::solver::MIN_CELLS as i64,
                )?,
                None => defaults.n_cells,
            },
            dt: positive("solver.dt_s", s.dt_s.unwrap_or(defaults.dt))?,
            t_end: match s.t_end_s {
                Some(t) if t >= 0.0 && t.is_finite() => Some(t),
                Some(t) => {
                    return Err(invalid(
                        "solver.t_end_s",
                        format!("must be non-negative, got {t}"),
                    ))
                }
                None => None,
            },
            mode,
            scheme,
            stride: match s.stride {
                Some(n) => count("solver.stride", n, 1)?,
                None => defaults.stride,
            },
            record_junction: s.record_junction.unwrap_or(defaults.record_junction),
        };

        let sw = raw.sweep;
        let reference_axes = SweepAxes::reference_grid();
        let mode = match sw.mode.as_deref() {
            None | Some("analytic") => SweepMode::Analytic,
            Some("full-pde") | Some("full_pde") => SweepMode::FullPde,
            Some(other) => {
                return Err(invalid(
                    "sweep.mode",
                    format!("expected \"analytic\" or \"full-pde\", got \"{other}\""),
                ))
            }
        };
        let lengths = sw.lengths.unwrap_or(reference_axes.lengths);
        for &l in &lengths {
            positive("sweep.L_um", l)?;
        }
        let angles = sw.alpha_deg.unwrap_or(reference_axes.angles_deg);
        for &a in &angles {
            angle_deg("sweep.alpha_deg", a)?;
        }
        let radii = sw.radii.unwrap_or(reference_axes.radii);
        for &r in &radii {
            positive("sweep.R_um", r)?;
        }
        let mut reporters = Vec::new();
        for n in sw
            .reporters
            .unwrap_or_else(|| vec!["small".into(), "large".into()])
        {
            if n == reporter.name {
                reporters.push(reporter.clone());
            } else {
                reporters.push(Reporter::preset(&n).ok_or_else(|| {
                    invalid("sweep.reporters", format!("unknown reporter \"{n}\""))
                })?);
            }
        }
        let mut data: BTreeMap<String, PathBuf> = sw.data.unwrap_or_default();
        if let Some(extra) = sw.large_r_um {
            let large = Reporter::large();
            for r in extra {
                let (lo, hi) = Reporter::LARGE_RADIUS_RANGE;
                if !(lo..=hi).contains(&r) {
                    return Err(invalid(
                        "sweep.large_r_um",
                        format!("{r} outside [{lo}, {hi}]"),
                    ));
                }
                if r == large.radius {
                    continue;
                }
                let name = format!("large_r{}nm", r * 1e3);
                if let Some(p) = data.get("large").cloned() {
                    data.entry(name.clone()).or_insert(p);
                }
                reporters.push(
                    Reporter::new(name, large.diffusivity, r)
                        .map_err(|e| invalid("sweep.large_r_um", e))?,
                );
            }
        }
        for key in data.keys() {
            if !reporters.iter().any(|r| &r.name == key) {
                return Err(invalid(
                    "sweep.data",
                    format!("no reporter named \"{key}\" in the sweep"),
                ));
            }
        }
        let sweep = SweepConfig {
            mode,
            axes: SweepAxes {
                lengths,
                angles_deg: angles,
                reporters,
                radii,
            },
            data,
            curve_t_end: match sw.curve_t_end_s {
                Some(t) => Some(positive("sweep.curve_t_end_s", t)?),
                None => None,
            },
            curve_points: match sw.curve_points {
                Some(n) => count("sweep.curve_points", n, 2)?,
                None => 201,
            },
        };

        let fit = FitConfig {
            cells_dir: raw.fit.cells_dir,
            background: match raw.fit.background {
                Some(b) if b.is_finite() => b,
                Some(b) => {
                    return Err(invalid(
                        "fit.background",
                        format!("must be finite, got {b}"),
                    ))
                }
                None => 0.0,
            },
            reference_csv: raw.fit.reference_csv,
            grid_points: match raw.fit.grid_points {
                Some(n) => Some(count("fit.grid_points", n, 2)?),
                None => None,
            },
        };

        let walk = WalkConfig::default();
        let f = raw.frap2d;
        let frap2d = Frap2dConfig {
            mask: f.mask,
            bleach: f.bleach,
            observed: f.observed,
            pixel_size: positive("frap2d.pixel_um", f.pixel_um.unwrap_or(0.106))?,
            walk: WalkConfig {
                n_particles: match f.n_particles {
                    Some(n) => count("frap2d.n_particles", n, 1)?,
                    None => walk.n_particles,
                },
                n_steps: match f.n_steps {
                    Some(n) => count("frap2d.n_steps", n, 1)?,
                    None => walk.n_steps,
                },
                seed: match f.seed {
                    Some(s) if s >= 0 => s as u64,
                    Some(s) => {
                        return Err(invalid(
                            "frap2d.seed",
                            format!("must be non-negative, got {s}"),
                        ))
                    }
                    None => walk.seed,
                },
            },
        };

        let cfg = Self {
            cell,
            junction,
            reporter,
            solver,
            sweep,
            fit,
            frap2d,
            output_dir: raw.io.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        };
        // Steric feasibility is checked up front rather than per command.
        cfg.effective_geometry()?;
        Ok(cfg)
    }

    pub fn raw_geometry(&self) -> JunctionGeometry {
        match &self.junction {
            JunctionSpec::Cone(c) => JunctionGeometry::Cone(*c),
            JunctionSpec::Profile { profile, .. } => JunctionGeometry::Tabulated(profile.clone()),
        }
    }

    pub fn effective_geometry(&self) -> Result<EffectiveGeometry> {
        effective_geometry(&self.raw_geometry(), &self.reporter).map_err(|e| {
            let key = match self.junction {
                JunctionSpec::Cone(_) => "reporter.r_um",
                JunctionSpec::Profile { .. } => "junction.profile_csv",
            };
            invalid(key, e)
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::new(self.cell, self.effective_geometry()?, self.reporter.clone());
        cfg.settings = self.solver.clone();
        Ok(cfg)
    }

    /// Sweep over the configured axes with this file's cell, junction and solver.
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let JunctionSpec::Cone(cone) = self.junction else {
            return Err(invalid("junction.kind", "sweeps need a cone junction"));
        };
        let mut spec = SweepSpec::new(self.sweep.axes.clone());
        spec.cell = self.cell;
        spec.junction = cone;
        spec.reporter = self.reporter.clone();
        spec.solver = self.solver.clone();
        spec.mode = self.sweep.mode;
        for (name, path) in &self.sweep.data {
            let series = nejunction_core::TimeSeries::read_csv_path(path)
                .map_err(|e| invalid("sweep.data", e))?;
            spec.data.insert(name.clone(), series);
        }
        Ok(spec)
    }
}

fn rebase_paths(raw: &mut RawConfig, base: Option<&Path>) {
    let fix = |p: &mut Option<PathBuf>| {
        if let Some(x) = p.take() {
            *p = Some(rebase(base, x));
        }
    };
    fix(&mut raw.junction.profile_csv);
    fix(&mut raw.fit.cells_dir);
    fix(&mut raw.fit.reference_csv);
    fix(&mut raw.frap2d.mask);
    fix(&mut raw.frap2d.bleach);
    fix(&mut raw.frap2d.observed);
    fix(&mut raw.io.output_dir);
    if let Some(d) = raw.sweep.data.as_mut() {
        for p in d.values_mut() {
            *p = rebase(base, std::mem::take(p));
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
