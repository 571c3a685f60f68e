//! Lattice random-walk model of FRAP recovery inside a 2-D compartment mask,
//! used to estimate the in-compartment diffusion coefficient by matching the
//! simulated recovery to an observed one through a time rescaling.
//!
//! Walkers take blind nearest-neighbour steps; a move that would leave the
//! compartment is rejected and the walker stays put. On the lattice this
//! gives `D = 1/4` pixel² per step, so a step lasts `pixel² / (4 D)` seconds.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Particles per independent RNG stream. Fixed, so results do not depend on
/// how many workers process the chunks.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMask {
    width: usize,
    height: usize,
    pixel_size: f64,
    inside: Vec<bool>,
    bleach: Vec<bool>,
}

impl LatticeMask {
    pub fn new(
        width: usize,
        height: usize,
        pixel_size: f64,
        inside: Vec<bool>,
        bleach: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || inside.len() != n || bleach.len() != n {
            return Err(Error::Data(format!(
                "mask size mismatch: {width}x{height} with {} inside / {} bleach pixels",
                inside.len(),
                bleach.len()
            )));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::Data(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if let Some(i) = (0..n).find(|&i| bleach[i] && !inside[i]) {
            return Err(Error::Data(format!(
                "bleach pixel ({}, {}) lies outside the compartment",
                i % width,
                i / width
            )));
        }
        let mask = Self {
            width,
            height,
            pixel_size,
            inside,
            bleach,
        };
        if mask.inside_count() == 0 {
            return Err(Error::Data("compartment mask is empty".into()));
        }
        if mask.bleach_count() == 0 {
            return Err(Error::Data("bleach region is empty".into()));
        }
        let seed = (0..n).find(|&i| mask.inside[i]).unwrap();
        if mask.component(seed).iter().filter(|&&c| c).count() != mask.inside_count() {
            return Err(Error::Data(
                "compartment is not 4-connected; use restrict_to_bleach_component".into(),
            ));
        }
        Ok(mask)
    }

    /// Builds a mask from pixel predicates evaluated at pixel indices.
    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_size: f64,
        inside: impl Fn(usize, usize) -> bool,
        bleach: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut ins = Vec::with_capacity(width * height);
        let mut ble = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let i = inside(x, y);
                ins.push(i);
                ble.push(i && bleach(x, y));
            }
        }
        Self::new(width, height, pixel_size, ins, ble)
    }

    /// Open rectangle with a rectangular bleach ROI `[x0, x0+bw) × [y0, y0+bh)`.
    pub fn open_rect(
        width: usize,
        height: usize,
        pixel_size: f64,
        (x0, y0): (usize, usize),
        (bw, bh): (usize, usize),
    ) -> Result<Self> {
        Self::from_fn(
            width,
            height,
            pixel_size,
            |_, _| true,
            |x, y| (x0..x0 + bw).contains(&x) && (y0..y0 + bh).contains(&y),
        )
    }

    /// Keeps only the compartment pixels 4-connected to the bleach region.
    pub fn restrict_to_bleach_component(
        width: usize,
        height: usize,
        pixel_size: f64,
        inside: Vec<bool>,
        bleach: Vec<bool>,
    ) -> Result<Self> {
        let tmp = Self {
            width,
            height,
            pixel_size,
            inside,
            bleach,
        };
        let seed = (0..tmp.bleach.len())
            .find(|&i| {
                tmp.bleach.get(i).copied().unwrap_or(false)
                    && tmp.inside.get(i).copied().unwrap_or(false)
            })
            .ok_or_else(|| {
                Error::Data("bleach region does not intersect the compartment".into())
            })?;
        let comp = tmp.component(seed);
        let bleach = tmp
            .bleach
            .iter()
            .zip(&comp)
            .map(|(&b, &c)| b && c)
            .collect();
        Self::new(width, height, pixel_size, comp, bleach)
    }

    fn component(&self, seed: usize) -> Vec<bool> {
        let mut seen = vec![false; self.inside.len()];
        let mut queue = VecDeque::from([seed]);
        seen[seed] = true;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbours(i).into_iter().flatten() {
                if self.inside[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Neighbour indices in the order +x, −x, +y, −y.
    fn neighbours(&self, i: usize) -> [Option<usize>; 4] {
        let (x, y) = (i % self.width, i / self.width);
        [
            (x + 1 < self.width).then(|| i + 1),
            (x > 0).then(|| i - 1),
            (y + 1 < self.height).then(|| i + self.width),
            (y > 0).then(|| i - self.width),
        ]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel edge length, µm.
    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn bleach_count(&self) -> usize {
        self.bleach.iter().filter(|&&b| b).count()
    }

    pub fn is_inside(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    pub fn is_bleached(&self, x: usize, y: usize) -> bool {
        self.bleach[y * self.width + x]
    }

    /// Fraction of compartment pixels in the bleach ROI (equilibrium
    /// occupancy of the ROI).
    pub fn equilibrium_fraction(&self) -> f64 {
        self.bleach_count() as f64 / self.inside_count() as f64
    }

    /// Loads compartment and bleach masks from two PGM (P5 or P2) images;
    /// nonzero pixels are set.
    pub fn from_pgm_files(inside: &Path, bleach: &Path, pixel_size: f64) -> Result<Self> {
        let (w, h, ins) = read_pgm(&std::fs::read(inside)?)?;
        let (w2, h2, ble) = read_pgm(&std::fs::read(bleach)?)?;
        if (w, h) != (w2, h2) {
            return Err(Error::Data(format!(
                "mask sizes differ: {w}x{h} vs {w2}x{h2}"
            )));
        }
        Self::new(w, h, pixel_size, ins, ble)
    }

    /// Loads masks from two 0/1 CSV grids (one row per image row, no header).
    pub fn from_csv_files(inside: &Path, bleach: &Path, pixel_size: f64) -> Result<Self> {
        let (w, h, ins) = read_binary_csv(&std::fs::read_to_string(inside)?)?;
        let (w2, h2, ble) = read_binary_csv(&std::fs::read_to_string(bleach)?)?;
        if (w, h) != (w2, h2) {
            return Err(Error::Data(format!(
                "mask sizes differ: {w}x{h} vs {w2}x{h2}"
            )));
        }
        Self::new(w, h, pixel_size, ins, ble)
    }

    pub fn write_pgm<W: Write>(&self, mut out: W, which: MaskLayer) -> Result<()> {
        let layer = match which {
            MaskLayer::Inside => &self.inside,
            MaskLayer::Bleach => &self.bleach,
        };
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = layer.iter().map(|&b| if b { 255 } else { 0 }).collect();
        out.write_all(&bytes)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLayer {
    Inside,
    Bleach,
}

/// Parses a binary (P5) or ASCII (P2) greymap into a boolean image.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Data("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|e| Error::Data(format!("bad PGM header field `{s}`: {e}")))
    };
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    match magic.as_str() {
        "P5" => {
            if maxval > 255 {
                return Err(Error::Data("16-bit PGM is not supported".into()));
            }
            let data = &bytes[pos + 1..];
            if data.len() < w * h {
                return Err(Error::Data(format!(
                    "PGM has {} pixels, expected {}",
                    data.len(),
                    w * h
                )));
            }
            Ok((w, h, data[..w * h].iter().map(|&b| b != 0).collect()))
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let vals = text
                .split_whitespace()
                .map(|s| s.parse::<u32>().map(|v| v != 0))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("bad PGM pixel: {e}")))?;
            if vals.len() != w * h {
                return Err(Error::Data(format!(
                    "PGM has {} pixels, expected {}",
                    vals.len(),
                    w * h
                )));
            }
            Ok((w, h, vals))
        }
        other => Err(Error::Data(format!(
            "unsupported image format `{other}` (expected P5 or P2)"
        ))),
    }
}

fn read_binary_csv(text: &str) -> Result<(usize, usize, Vec<bool>)> {
    let mut width = None;
    let mut cells = Vec::new();
    let mut height = 0;
    for (row, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let vals = line
            .split(',')
            .map(|s| match s.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Data(format!(
                    "mask row {}: expected 0 or 1, got `{other}`",
                    row + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(Error::Data(format!(
                    "mask row {} has {} columns, expected {w}",
                    row + 1,
                    vals.len()
                )))
            }
            _ => {}
        }
        cells.extend(vals);
        height += 1;
    }
    Ok((width.unwrap_or(0), height, cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            n_particles: 200_000,
            n_steps: 4096,
            seed: 7,
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Two random bits at a time from a buffered 64-bit draw.
struct Directions<'a> {
    rng: &'a mut ChaCha8Rng,
    bits: u64,
    left: u32,
}

impl<'a> Directions<'a> {
    fn new(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            rng,
            bits: 0,
            left: 0,
        }
    }

    #[inline]
    fn next(&mut self) -> usize {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 32;
        }
        let d = (self.bits & 3) as usize;
        self.bits >>= 2;
        self.left -= 1;
        d
    }
}

fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    // Lemire-style multiply-shift; bias is below 2^-32 for realistic masks.
    (((rng.next_u64() >> 32) * n as u64) >> 32) as usize
}

/// Simulated recovery of the bleach ROI in lattice units.
///
/// Walkers start uniformly on the unbleached part of the compartment. The
/// returned series has `t` = step number (0..=n_steps) and `y` = fraction
/// of walkers inside the ROI divided by its equilibrium value, so it starts
/// at 0 and tends to 1.
pub fn simulate_recovery(mask: &LatticeMask, cfg: &WalkConfig) -> Result<TimeSeries> {
    let pool: Vec<u32> = (0..mask.inside.len())
        .filter(|&i| mask.inside[i] && !mask.bleach[i])
        .map(|i| i as u32)
        .collect();
    if pool.is_empty() {
        return Err(Error::Data(
            "no unbleached compartment pixels to start walkers from".into(),
        ));
    }
    if cfg.n_particles == 0 {
        return Err(Error::Argument("n_particles must be positive".into()));
    }
    let allowed: Vec<u8> = (0..mask.inside.len())
        .map(|i| {
            mask.neighbours(i)
                .iter()
                .enumerate()
                .fold(0u8, |acc, (d, n)| match n {
                    Some(j) if mask.inside[*j] => acc | (1 << d),
                    _ => acc,
                })
        })
        .collect();
    let w = mask.width as isize;
    let offsets: [isize; 4] = [1, -1, w, -w];
    let n_steps = cfg.n_steps;

    let n_chunks = cfg.n_particles.div_ceil(CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(cfg.n_particles - c * CHUNK);
            let mut rng = chunk_rng(cfg.seed, c);
            let mut pos: Vec<u32> = (0..size)
                .map(|_| pool[uniform_index(&mut rng, pool.len())])
                .collect();
            let mut counts = vec![0u64; n_steps + 1];
            let mut dirs = Directions::new(&mut rng);
            for slot in counts.iter_mut().skip(1) {
                let mut in_roi = 0u64;
                for p in pos.iter_mut() {
                    let d = dirs.next();
                    let i = *p as usize;
                    if allowed[i] & (1 << d) != 0 {
                        *p = (i as isize + offsets[d]) as u32;
                    }
                    in_roi += u64::from(mask.bleach[*p as usize]);
                }
                *slot = in_roi;
            }
            counts
        })
        .reduce(
            || vec![0u64; n_steps + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let norm = cfg.n_particles as f64 * mask.equilibrium_fraction();
    TimeSeries::new(
        (0..=n_steps).map(|s| s as f64).collect(),
        counts.iter().map(|&c| c as f64 / norm).collect(),
    )
}

/// Maps a lattice-unit recovery to physical time for diffusivity `d`
/// (µm²/s): one step lasts `pixel² / (4 d)` seconds.
pub fn lattice_to_physical(
    lattice: &TimeSeries,
    pixel_size: f64,
    diffusivity: f64,
) -> Result<TimeSeries> {
    let step = pixel_size * pixel_size / (4.0 * diffusivity);
    lattice.map_times(|s| s * step)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusivityEstimate {
    /// Estimated diffusivity, µm²/s.
    pub diffusivity: f64,
    pub rmse: f64,
    /// False when the observed curve cannot be matched by any time scaling.
    pub ok: bool,
    /// Simulated recovery evaluated at the observed times.
    pub model: TimeSeries,
}

const GOLDEN_TOL: f64 = 1e-7;
const SCAN_POINTS: usize = 81;
/// Searched span of `log10(D)` below the largest admissible value.
const LOG_SPAN: f64 = 4.0;

/// Fits `D` such that the simulated recovery, stretched to physical time,
/// best matches `observed` (normalized recovery, time since bleach in s).
pub fn estimate_diffusivity(
    observed: &TimeSeries,
    mask: &LatticeMask,
    cfg: &WalkConfig,
) -> Result<DiffusivityEstimate> {
    let lattice = simulate_recovery(mask, cfg)?;
    estimate_from_lattice(observed, &lattice, mask.pixel_size)
}

/// Same as [`estimate_diffusivity`] with a precomputed lattice recovery.
pub fn estimate_from_lattice(
    observed: &TimeSeries,
    lattice: &TimeSeries,
    pixel_size: f64,
) -> Result<DiffusivityEstimate> {
    observed.require_len(3)?;
    let t_max = observed.span().unwrap().1;
    if t_max.is_nan() || t_max <= 0.0 {
        return Err(Error::Argument(
            "observed curve must extend past t = 0".into(),
        ));
    }
    let s_max = lattice.span().unwrap().1;
    let px2 = pixel_size * pixel_size;
    let cost = |log_d: f64| -> f64 {
        let d = 10f64.powf(log_d);
        let mut sq = 0.0;
        for (&t, &y) in observed.times().iter().zip(observed.values()) {
            let s = (4.0 * d * t / px2).min(s_max);
            let m = lattice.interpolate(s.max(0.0)).unwrap();
            sq += (m - y).powi(2);
        }
        (sq / observed.len() as f64).sqrt()
    };

    let hi = (s_max * px2 / (4.0 * t_max)).log10();
    let lo = hi - LOG_SPAN;
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let costs: Vec<f64> = grid.iter().map(|&g| cost(g)).collect();
    let best = (0..SCAN_POINTS)
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .unwrap();
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(SCAN_POINTS - 1)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while (b - a).abs() > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let log_d = 0.5 * (a + b);
    let diffusivity = 10f64.powf(log_d);
    let rmse = cost(log_d);

    let obs_range = observed
        .values()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        - observed
            .values()
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
    let interior = best > 0 && best < SCAN_POINTS - 1;
    let ok = interior && obs_range >= 0.1 && rmse < 0.25 * obs_range.max(1e-12);

    let model = TimeSeries::new(
        observed.times().to_vec(),
        observed
            .times()
            .iter()
            .map(|&t| {
                lattice
                    .interpolate((4.0 * diffusivity * t / px2).clamp(0.0, s_max))
                    .unwrap()
            })
            .collect(),
    )?;
    Ok(DiffusivityEstimate {
        diffusivity,
        rmse,
        ok,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsdBoundary {
    /// No walls.
    Unbounded,
    /// Walkers start on a wall at x = 0; moves to x < 0 are rejected.
    ReflectingWall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsdResult {
    /// Mean squared displacement (pixel²) after 0..=n_steps steps.
    pub msd: Vec<f64>,
    /// Least-squares slope of MSD vs steps over steps 1..=n_steps.
    pub slope: f64,
    pub intercept: f64,
}

impl MsdResult {
    /// Lattice diffusivity in pixel²/step (`MSD = 4 D s` in 2-D).
    pub fn lattice_diffusivity(&self) -> f64 {
        self.slope / 4.0
    }
}

/// Mean squared displacement of free (or wall-bounded) blind walkers.
pub fn msd_check(cfg: &WalkConfig, boundary: MsdBoundary) -> Result<MsdResult> {
    if cfg.n_particles == 0 || cfg.n_steps == 0 {
        return Err(Error::Argument("msd check needs walkers and steps".into()));
    }
    const DX: [i64; 4] = [1, -1, 0, 0];
    const DY: [i64; 4] = [0, 0, 1, -1];
    let n_steps = cfg.n_steps;
    let n_chunks = cfg.n_particles.div_ceil(CHUNK);
    let sums = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(cfg.n_particles - c * CHUNK);
            let mut rng = chunk_rng(cfg.seed, c);
            let mut dirs = Directions::new(&mut rng);
            let mut xy = vec![(0i64, 0i64); size];
            let mut sums = vec![0u64; n_steps + 1];
            for slot in sums.iter_mut().skip(1) {
                let mut acc = 0u64;
                for (x, y) in xy.iter_mut() {
                    let d = dirs.next();
                    let nx = *x + DX[d];
                    if !(boundary == MsdBoundary::ReflectingWall && nx < 0) {
                        *x = nx;
                        *y += DY[d];
                    }
                    acc += (*x * *x + *y * *y) as u64;
                }
                *slot = acc;
            }
            sums
        })
        .reduce(
            || vec![0u64; n_steps + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let msd: Vec<f64> = sums
        .iter()
        .map(|&s| s as f64 / cfg.n_particles as f64)
        .collect();
    let xs: Vec<f64> = (1..=n_steps).map(|s| s as f64).collect();
    let ys = &msd[1..];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { ys[0] };
    Ok(MsdResult {
        intercept: my - slope * mx,
        slope,
        msd,
    })
}
