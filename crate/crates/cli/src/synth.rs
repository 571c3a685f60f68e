//! Synthetic fixtures so `fit` and `frap2d` can run without external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nejunction_core::frap2d::{
    lattice_to_physical, simulate_recovery, LatticeMask, MaskLayer, WalkConfig,
};
use nejunction_core::series::linspace;
use nejunction_core::TimeSeries;

use crate::error::Result;
use crate::output::OutputDir;

pub const BACKGROUND: f64 = 100.0;
const REFERENCE_AMPLITUDE: f64 = 1000.0;

#[derive(Debug, Clone, Copy)]
pub struct FitFixture {
    pub cells: usize,
    pub kappa: f64,
    /// Noise sd relative to the recovery amplitude.
    pub sigma: f64,
    pub seed: u64,
    pub points: usize,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-cell raw traces sampled over `[0, 6/κ]`, a shared reference trace
/// with slow acquisition bleaching, and a config stub pointing at them.
pub fn write_fit_fixture(out: &mut OutputDir, f: &FitFixture) -> Result<()> {
    let t = linspace(0.0, 6.0 / f.kappa, f.points);
    let tau = 20.0 / f.kappa;
    let reference = TimeSeries::from_fn(t.clone(), |s| {
        BACKGROUND + REFERENCE_AMPLITUDE * (-s / tau).exp()
    })?;
    out.write_with("reference.csv", |w| reference.write_csv(w, "intensity"))?;

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for i in 0..f.cells {
        let mut rng = rng_for(f.seed, i as u64);
        let brightness = rng.gen_range(0.8..1.2);
        let y0 = rng.gen_range(0.15..0.25);
        let plateau = rng.gen_range(0.8..0.9);
        let y: Vec<f64> = t
            .iter()
            .map(|&s| {
                let clean = y0 + (plateau - y0) * -(-f.kappa * s).exp_m1();
                let noisy = clean + f.sigma * (plateau - y0) * unit.sample(&mut rng);
                BACKGROUND + brightness * REFERENCE_AMPLITUDE * (-s / tau).exp() * noisy
            })
            .collect();
        let cell = TimeSeries::new(t.clone(), y)?;
        out.write_with(&format!("cells/cell_{i:03}.csv"), |w| {
            cell.write_csv(w, "intensity")
        })?;
    }
    let stub = format!(
        "[fit]\ncells_dir = \"cells\"\nreference_csv = \"reference.csv\"\nbackground = {BACKGROUND:?}\n\n[io]\noutput_dir = \"fit_results\"\n"
    );
    out.write("fit.toml", stub.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct Frap2dFixture {
    pub diffusivity: f64,
    pub pixel_size: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Lattice steps the estimator will use; the observation window is
    /// chosen so the estimator can reach three times the planted value.
    pub estimator_steps: usize,
    pub points: usize,
}

/// 12.7 µm square compartment with a centred 3.6 µm bleach square at the
/// usual 0.106 µm pixel size.
pub fn fixture_mask(pixel_size: f64) -> Result<LatticeMask> {
    let side = (12.72 / pixel_size).round() as usize;
    let bleach = (3.6 / pixel_size).round() as usize;
    let x0 = (side - bleach) / 2;
    Ok(LatticeMask::open_rect(
        side,
        side,
        pixel_size,
        (x0, x0),
        (bleach, bleach),
    )?)
}

pub fn write_frap2d_fixture(out: &mut OutputDir, f: &Frap2dFixture) -> Result<()> {
    let mask = fixture_mask(f.pixel_size)?;
    out.write_with("mask.pgm", |w| mask.write_pgm(w, MaskLayer::Inside))?;
    out.write_with("bleach.pgm", |w| mask.write_pgm(w, MaskLayer::Bleach))?;

    let px2 = f.pixel_size * f.pixel_size;
    let t_max = f.estimator_steps as f64 * px2 / (12.0 * f.diffusivity);
    let truth_steps = (4.0 * f.diffusivity * t_max / px2).ceil() as usize + 1;
    let walk = WalkConfig {
        n_particles: 200_000,
        n_steps: truth_steps,
        seed: f.seed,
    };
    let physical = lattice_to_physical(
        &simulate_recovery(&mask, &walk)?,
        f.pixel_size,
        f.diffusivity,
    )?;
    let mut rng = rng_for(f.seed, u64::MAX);
    let noise = Normal::new(0.0, f.sigma.max(0.0)).expect("finite sd");
    let t = linspace(0.0, t_max, f.points);
    let y: Vec<f64> = t
        .iter()
        .map(|&s| {
            physical.interpolate(s).expect("inside simulated span")
                + if f.sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                }
        })
        .collect();
    let observed = TimeSeries::new(t, y)?;
    out.write_with("observed.csv", |w| observed.write_csv(w, "intensity"))?;
    let stub = format!(
        "[frap2d]\nmask = \"mask.pgm\"\nbleach = \"bleach.pgm\"\nobserved = \"observed.csv\"\npixel_um = {:?}\nn_steps = {}\n\n[io]\noutput_dir = \"frap2d_results\"\n",
        f.pixel_size, f.estimator_steps
    );
    out.write("frap2d.toml", stub.as_bytes())?;
    Ok(())
}
