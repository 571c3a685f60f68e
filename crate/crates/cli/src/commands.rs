use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use nejunction_core::analytic::rate_constant;
use nejunction_core::frap2d::{estimate_diffusivity, simulate_recovery, LatticeMask};
use nejunction_core::frapfit::{average_curves, fit_one_phase, normalize_recovery, FitResult};
use nejunction_core::series::linspace;
use nejunction_core::solver::{dimensionless_numbers, simulate};
use nejunction_core::sweep::{emit_figure_data, run_sweep, write_summary_csv};
use nejunction_core::TimeSeries;

use crate::checks::run_checks;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutputDir;
use crate::synth::{write_fit_fixture, write_frap2d_fixture, FitFixture, Frap2dFixture};
use crate::{Command, SynthCommand};

pub const FIT_HEADER: &str = "file,kappa_per_s,plateau,y0,rss,converged";

pub fn dispatch(cmd: &Command, cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    match cmd {
        Command::Kappa(_) => kappa(cfg, out),
        Command::Simulate(_) => simulate_cmd(cfg, out),
        Command::Sweep(_) => sweep(cfg, out),
        Command::Fit(_) => fit(cfg, out),
        Command::Frap2d(_) => frap2d(cfg, out),
        Command::Check(_) => check(cfg, out),
        Command::Synth(s) => synth(s, cfg, out),
    }?;
    Ok(0)
}

fn kappa(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let sim = cfg.sim_config()?;
    let rate = rate_constant(&cfg.cell, &sim.geom, &cfg.reporter);
    let dims = dimensionless_numbers(&sim);
    let r = &cfg.reporter;
    writeln!(
        out,
        "reporter      {} (D = {} um^2/s, r = {} um)",
        r.name, r.diffusivity, r.radius
    )?;
    writeln!(out, "A_star_um2    {:.6e}", rate.a_star)?;
    writeln!(out, "kappa_per_s   {:.6}", rate.kappa)?;
    writeln!(out, "half_time_s   {:.4}", rate.half_time)?;
    writeln!(out, "three_tau_s   {:.4}", 3.0 / rate.kappa)?;
    writeln!(out, "delta1        {:.4e}", dims.delta1)?;
    writeln!(out, "delta2        {:.4}", dims.delta2)?;
    if dims.delta1 >= nejunction_core::solver::Dimensionless::WARN_THRESHOLD {
        writeln!(
            out,
            "note: δ₁ = {:.3} not ≪ 1; junction storage is not negligible",
            dims.delta1
        )?;
    }
    if dims.delta2 >= nejunction_core::solver::Dimensionless::WARN_THRESHOLD {
        writeln!(
            out,
            "note: δ₂ = {:.3} not ≪ 1; the NE levels off near {:.3} of the initial ER density instead of 1",
            dims.delta2,
            1.0 / (1.0 + dims.delta2)
        )?;
    }
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let sim = cfg.sim_config()?;
    let res = simulate(&sim)?;
    let mut dir = OutputDir::create(&cfg.output_dir)?;
    dir.write_with("simulate.csv", |w| res.write_csv(w))?;
    if res.junction.is_some() {
        dir.write_with("junction.csv", |w| res.write_junction_csv(w))?;
    }
    dir.finish("simulate", cfg, None)?;
    let m0 = res.mass[0];
    let drift = res
        .mass
        .iter()
        .map(|m| ((m - m0) / m0).abs())
        .fold(0.0, f64::max);
    writeln!(
        out,
        "t_end_s {} rho_NE {:.6} rho_ER {:.6} mass_drift {:.2e} -> {}",
        res.times.last().unwrap(),
        res.rho_ne.last().unwrap(),
        res.rho_er.last().unwrap(),
        drift,
        dir.path().display()
    )?;
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let spec = cfg.sweep_spec()?;
    let rows = run_sweep(&spec)?;
    let t_end = match cfg.sweep.curve_t_end {
        Some(t) => t,
        None => {
            3.0 / rows
                .iter()
                .filter_map(|r| r.kappa)
                .fold(f64::INFINITY, f64::min)
        }
    };
    let times = if t_end.is_finite() {
        linspace(0.0, t_end, cfg.sweep.curve_points)
    } else {
        Vec::new()
    };
    let curves = emit_figure_data(&rows, &times, &spec.data)?;
    let mut dir = OutputDir::create(&cfg.output_dir)?;
    dir.write_with("summary.csv", |w| write_summary_csv(&rows, w))?;
    for c in &curves {
        dir.write_with(&format!("curves/{}", c.file_name), |w| c.write_csv(w))?;
    }
    dir.finish("sweep", cfg, None)?;
    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    writeln!(
        out,
        "rows {} infeasible {} curves {} -> {}",
        rows.len(),
        infeasible,
        curves.len(),
        dir.path().display()
    )?;
    Ok(())
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fit(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = cfg.fit.cells_dir.as_ref().ok_or_else(|| CliError::Config {
        key: "fit.cells_dir".into(),
        msg: "no cell directory given (set it or pass --cells)".into(),
    })?;
    let files = csv_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Config {
            key: "fit.cells_dir".into(),
            msg: format!("no .csv files in {}", dir.display()),
        });
    }
    let reference = match &cfg.fit.reference_csv {
        Some(p) => Some(TimeSeries::read_csv_path(p)?),
        None => None,
    };
    let background = cfg.fit.background;

    let fitted: Vec<(String, Option<(TimeSeries, FitResult)>)> = files
        .par_iter()
        .map(|path| -> Result<_> {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let raw = TimeSeries::read_csv_path(path)?;
            // Without a reference trace no bleach correction is applied.
            let reference = match &reference {
                Some(r) => r.clone(),
                None => {
                    let (a, b) = raw.span().unwrap_or((0.0, 0.0));
                    TimeSeries::new(vec![a, b.max(a + 1.0)], vec![background + 1.0; 2])?
                }
            };
            let normalized = match normalize_recovery(&raw, background, &reference) {
                Ok(n) => n,
                Err(nejunction_core::Error::Fit(_)) => return Ok((name, None)),
                Err(e) => return Err(CliError::Core(e).context(&name)),
            };
            let fit = fit_one_phase(&normalized, None)?;
            Ok((name, Some((normalized, fit))))
        })
        .collect::<Result<_>>()?;

    let mut table = format!("{FIT_HEADER}\n");
    let mut kappas = Vec::new();
    for (name, r) in &fitted {
        match r {
            Some((_, f)) => {
                table.push_str(&format!(
                    "{name},{},{},{},{},{}\n",
                    f.kappa, f.plateau, f.y0, f.rss, f.converged
                ));
                if f.converged {
                    kappas.push(f.kappa);
                }
            }
            None => table.push_str(&format!("{name},,,,,false\n")),
        }
    }
    let mut outdir = OutputDir::create(&cfg.output_dir)?;
    outdir.write("fit_results.csv", table.as_bytes())?;

    let curves: Vec<TimeSeries> = fitted
        .iter()
        .filter_map(|(_, r)| r.as_ref().map(|(n, _)| n.clone()))
        .collect();
    if !curves.is_empty() {
        let starts: Vec<f64> = curves.iter().map(|c| c.span().unwrap().0).collect();
        let common = curves
            .iter()
            .map(|c| c.span().unwrap())
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        let n = cfg
            .fit
            .grid_points
            .unwrap_or_else(|| curves.iter().map(|c| c.len()).min().unwrap());
        let mean = average_curves(&curves, &starts, &linspace(0.0, common, n))?;
        let mut text = String::from("t_s,mean,sd\n");
        for ((t, m), s) in mean.t.iter().zip(&mean.mean).zip(&mean.sd) {
            text.push_str(&format!("{t},{m},{s}\n"));
        }
        outdir.write("mean_curve.csv", text.as_bytes())?;
    }
    outdir.finish("fit", cfg, None)?;

    let n = kappas.len() as f64;
    let mean = kappas.iter().sum::<f64>() / n;
    let sd = if kappas.len() > 1 {
        (kappas.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    writeln!(
        out,
        "cells {} converged {} mean_kappa_per_s {} sd {} -> {}",
        fitted.len(),
        kappas.len(),
        fmt_opt((n > 0.0).then_some(mean)),
        fmt_opt((n > 0.0).then_some(sd)),
        outdir.path().display()
    )?;
    Ok(())
}

fn load_mask(mask: &Path, bleach: &Path, pixel: f64) -> Result<LatticeMask> {
    let is_pgm = |p: &Path| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm"));
    let m = if is_pgm(mask) && is_pgm(bleach) {
        LatticeMask::from_pgm_files(mask, bleach, pixel)
    } else {
        LatticeMask::from_csv_files(mask, bleach, pixel)
    };
    m.map_err(|e| CliError::Core(e).context(&mask.display().to_string()))
}

fn frap2d(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let f = &cfg.frap2d;
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone().ok_or_else(|| CliError::Config {
            key: key.into(),
            msg: "required for frap2d".into(),
        })
    };
    let mask = load_mask(
        &need(&f.mask, "frap2d.mask")?,
        &need(&f.bleach, "frap2d.bleach")?,
        f.pixel_size,
    )?;
    let mut dir = OutputDir::create(&cfg.output_dir)?;
    match &f.observed {
        Some(p) => {
            let observed = TimeSeries::read_csv_path(p)?;
            let est = estimate_diffusivity(&observed, &mask, &f.walk)?;
            let mut text = String::from("t_s,observed,model\n");
            for ((t, o), m) in observed
                .times()
                .iter()
                .zip(observed.values())
                .zip(est.model.values())
            {
                text.push_str(&format!("{t},{o},{m}\n"));
            }
            dir.write("frap2d_curve.csv", text.as_bytes())?;
            let summary = format!(
                "D_um2_s,rmse,ok\n{},{},{}\n",
                est.diffusivity, est.rmse, est.ok
            );
            dir.write("frap2d_estimate.csv", summary.as_bytes())?;
            writeln!(
                out,
                "D_um2_s {:.4} rmse {:.4} ok {} -> {}",
                est.diffusivity,
                est.rmse,
                est.ok,
                dir.path().display()
            )?;
        }
        None => {
            let curve = simulate_recovery(&mask, &f.walk)?;
            let mut text = String::from("step,recovery\n");
            for (s, y) in curve.times().iter().zip(curve.values()) {
                text.push_str(&format!("{s},{y}\n"));
            }
            dir.write("lattice_recovery.csv", text.as_bytes())?;
            writeln!(
                out,
                "steps {} final {:.4} -> {}",
                f.walk.n_steps,
                curve.values().last().unwrap(),
                dir.path().display()
            )?;
        }
    }
    dir.finish("frap2d", cfg, Some(f.walk.seed))?;
    Ok(())
}

fn check(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let results = run_checks(cfg)?;
    for r in &results {
        writeln!(out, "{}", r.line())?;
    }
    let failed: Vec<_> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{} of {} checks failed: {}",
            failed.len(),
            results.len(),
            failed.join(", ")
        )))
    }
}

fn synth(cmd: &SynthCommand, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut dir = OutputDir::create(&cfg.output_dir)?;
    let seed = match *cmd {
        SynthCommand::Fit {
            cells,
            sigma,
            seed,
            kappa,
            points,
        } => {
            let kappa = match kappa {
                Some(k) => k,
                None => rate_constant(&cfg.cell, &cfg.effective_geometry()?, &cfg.reporter).kappa,
            };
            if kappa.is_nan() || kappa <= 0.0 || points < 5 || cells == 0 {
                return Err(CliError::Usage(
                    "synth fit needs kappa > 0, cells >= 1 and points >= 5".into(),
                ));
            }
            write_fit_fixture(
                &mut dir,
                &FitFixture {
                    cells,
                    kappa,
                    sigma,
                    seed,
                    points,
                },
            )?;
            writeln!(
                out,
                "fit fixture: {cells} cells, kappa {kappa} -> {}",
                dir.path().display()
            )?;
            seed
        }
        SynthCommand::Frap2d {
            sigma,
            seed,
            diffusivity,
            points,
        } => {
            let diffusivity = diffusivity.unwrap_or(cfg.reporter.diffusivity);
            if diffusivity.is_nan() || diffusivity <= 0.0 || points < 3 {
                return Err(CliError::Usage(
                    "synth frap2d needs diffusivity > 0 and points >= 3".into(),
                ));
            }
            let fixture = Frap2dFixture {
                diffusivity,
                pixel_size: cfg.frap2d.pixel_size,
                sigma,
                seed,
                estimator_steps: cfg.frap2d.walk.n_steps,
                points,
            };
            write_frap2d_fixture(&mut dir, &fixture)?;
            writeln!(
                out,
                "frap2d fixture: D {diffusivity} -> {}",
                dir.path().display()
            )?;
            seed
        }
    };
    dir.finish("synth", cfg, Some(seed))?;
    Ok(())
}
