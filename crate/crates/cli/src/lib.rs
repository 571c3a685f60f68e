//! Command-line driver for `nejunction-core`.
//!
//! Every subcommand reads the same TOML config; flags override file keys.
//! Files go to the output directory with a `manifest.json` listing their
//! hashes, the config hash and the seed.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod synth;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "nejunction",
    version,
    about = "ER to nuclear-envelope junction diffusion model"
)]
pub struct Cli {
    /// TOML config file; omitted keys take reference values.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set junction.L_um=0.02`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, short, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print κ, A*, the half-time and the small parameters δ₁, δ₂.
    Kappa(ModelFlags),
    /// Run the junction solver and write the reservoir densities.
    Simulate(SimulateFlags),
    /// Evaluate the parameter grid from `[sweep]`.
    Sweep(SweepFlags),
    /// Normalize and fit a directory of FRAP traces.
    Fit(FitFlags),
    /// Estimate in-compartment diffusivity with the lattice walk.
    Frap2d(Frap2dFlags),
    /// Run the built-in verification suite.
    Check(ModelFlags),
    /// Write synthetic fixtures for `fit` or `frap2d`.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// Reporter preset (`small` or `large`).
    #[arg(long)]
    pub reporter: Option<String>,
    #[arg(long = "L-um")]
    pub length_um: Option<f64>,
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    #[arg(long = "R-um")]
    pub radius_um: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateFlags {
    #[command(flatten)]
    pub model: ModelFlags,
    /// `full`, `quasistationary` or `frozen_er`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub dt_s: Option<f64>,
    #[arg(long)]
    pub t_end_s: Option<f64>,
    #[arg(long)]
    pub n_cells: Option<i64>,
    /// Also write the junction profile at every recorded time.
    #[arg(long)]
    pub junction_csv: bool,
}

#[derive(Debug, Args, Default)]
pub struct SweepFlags {
    /// `analytic` or `full-pde`.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct FitFlags {
    /// Directory of `t_s,intensity` CSVs, one per cell.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub background: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct Frap2dFlags {
    /// Compartment mask (PGM or 0/1 CSV).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Bleach-region mask, same format and size.
    #[arg(long)]
    pub bleach: Option<PathBuf>,
    #[arg(long)]
    pub pixel_um: Option<f64>,
    /// Normalized recovery `t_s,intensity`; without it only the lattice
    /// curve is written.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<i64>,
    #[arg(long)]
    pub n_particles: Option<i64>,
    #[arg(long)]
    pub n_steps: Option<i64>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Raw traces for `fit` with a shared reference trace.
    Fit {
        #[arg(long, default_value_t = 40)]
        cells: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Planted rate; defaults to κ of the configured reporter.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 81)]
        points: usize,
    },
    /// Masks and an observed recovery for `frap2d`.
    Frap2d {
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        /// Planted diffusivity, µm²/s; defaults to the configured reporter's.
        #[arg(long)]
        diffusivity: Option<f64>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
}

fn push<T: Into<toml::Value>>(ov: &mut Vec<(String, toml::Value)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        ov.push((key.to_string(), v.into()));
    }
}

fn path_value(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

impl ModelFlags {
    fn overrides(&self, ov: &mut Vec<(String, toml::Value)>) {
        push(ov, "reporter.name", self.reporter.clone());
        push(ov, "junction.L_um", self.length_um);
        push(ov, "junction.alpha_deg", self.alpha_deg);
        push(ov, "junction.R_um", self.radius_um);
    }
}

impl Cli {
    /// `--set` pairs first, then typed flags, so typed flags win.
    pub fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut ov = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        push(&mut ov, "io.output_dir", path_value(&self.output_dir));
        match &self.command {
            Command::Kappa(m) | Command::Check(m) => m.overrides(&mut ov),
            Command::Simulate(s) => {
                s.model.overrides(&mut ov);
                push(&mut ov, "solver.mode", s.mode.clone());
                push(&mut ov, "solver.dt_s", s.dt_s);
                push(&mut ov, "solver.t_end_s", s.t_end_s);
                push(&mut ov, "solver.n_cells", s.n_cells);
                if s.junction_csv {
                    push(&mut ov, "solver.record_junction", Some(true));
                }
            }
            Command::Sweep(s) => push(&mut ov, "sweep.mode", s.mode.clone()),
            Command::Fit(f) => {
                push(&mut ov, "fit.cells_dir", path_value(&f.cells));
                push(&mut ov, "fit.reference_csv", path_value(&f.reference));
                push(&mut ov, "fit.background", f.background);
            }
            Command::Frap2d(f) => {
                push(&mut ov, "frap2d.mask", path_value(&f.mask));
                push(&mut ov, "frap2d.bleach", path_value(&f.bleach));
                push(&mut ov, "frap2d.observed", path_value(&f.observed));
                push(&mut ov, "frap2d.pixel_um", f.pixel_um);
                push(&mut ov, "frap2d.seed", f.seed);
                push(&mut ov, "frap2d.n_particles", f.n_particles);
                push(&mut ov, "frap2d.n_steps", f.n_steps);
            }
            Command::Synth(_) => {}
        }
        Ok(ov)
    }
}

/// Loads the config, then runs the command on a pool of `--jobs` workers.
/// Returns the process exit status.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides()?)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf = Vec::new();
    let status = pool.install(|| commands::dispatch(&cli.command, &cfg, &mut buf));
    stdout.write_all(&buf)?;
    status
}
