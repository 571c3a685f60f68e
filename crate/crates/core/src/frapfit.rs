//! Recovery-curve pipeline: background subtraction, reference (bleach)
//! correction, normalization and one-phase association fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Outcome of a one-phase association fit
/// `y(t) = y0 + (plateau − y0)(1 − e^{−κ(t − t0)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kappa: f64,
    pub plateau: f64,
    pub y0: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn evaluate(&self, t0: f64, t: f64) -> f64 {
        self.plateau + (self.y0 - self.plateau) * (-self.kappa * (t - t0)).exp()
    }
}

/// Optional starting values; missing entries use the data-driven defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitGuess {
    pub kappa: Option<f64>,
    pub plateau: Option<f64>,
    pub y0: Option<f64>,
}

pub const MIN_FIT_POINTS: usize = 5;
pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Fits explaining less of the variance than this are reported as failed.
pub const MIN_R_SQUARED: f64 = 0.5;

fn initial_guess(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len();
    let tail = (n / 10).max(1);
    let plateau = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let y0 = y[0];
    let amp = plateau - y0;
    let target = 1.0 - (-1.0f64).exp();
    let t63 = t
        .iter()
        .zip(y)
        .skip(1)
        .find(|(_, &v)| amp != 0.0 && (v - y0) / amp >= target)
        .map(|(&s, _)| s)
        .unwrap_or(t[n - 1]);
    let kappa = 1.0 / (t63 - t[0]).max(f64::MIN_POSITIVE);
    (y0, plateau, kappa)
}

fn rss_of(p: &[f64; 3], tau: &[f64], y: &[f64]) -> f64 {
    tau.iter()
        .zip(y)
        .map(|(&s, &v)| {
            let r = v - (p[1] + (p[0] - p[1]) * (-p[2] * s).exp());
            r * r
        })
        .sum()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xc = det(&m) / d;
    }
    Some(x)
}

/// Least-squares one-phase association fit by Levenberg–Marquardt with
/// Marquardt diagonal scaling and uniform weights.
///
/// Returns `Err` only for too-short input. Flat, non-identifiable or
/// poorly explained data yield `converged == false` with the best parameters
/// found.
pub fn fit_one_phase(series: &TimeSeries, guess: Option<FitGuess>) -> Result<FitResult> {
    series.require_len(MIN_FIT_POINTS)?;
    let t = series.times();
    let y = series.values();
    let t0 = t[0];
    let tau: Vec<f64> = t.iter().map(|s| s - t0).collect();

    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = ymax - ymin;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if range <= 1e-12 * ymax.abs().max(ymin.abs()).max(f64::MIN_POSITIVE) {
        return Ok(FitResult {
            kappa: 0.0,
            plateau: mean,
            y0: mean,
            rss: tss,
            converged: false,
            iterations: 0,
        });
    }

    let (gy0, gp, gk) = initial_guess(t, y);
    let g = guess.unwrap_or_default();
    let mut p = [
        g.y0.unwrap_or(gy0),
        g.plateau.unwrap_or(gp),
        g.kappa.unwrap_or(gk),
    ];
    if p[2].is_nan() || p[2] <= 0.0 {
        p[2] = gk;
    }
    let mut rss = rss_of(&p, &tau, y);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&s, &v) in tau.iter().zip(y) {
            let e = (-p[2] * s).exp();
            let model = p[1] + (p[0] - p[1]) * e;
            let jac = [e, 1.0 - e, -(p[0] - p[1]) * s * e];
            let r = v - model;
            for a in 0..3 {
                jtr[a] += jac[a] * r;
                for b in 0..3 {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        if rss == 0.0 {
            converged = true;
            break;
        }
        let scale = [range, range, p[2].abs()];
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(delta) = solve3(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            let small =
                (0..3).all(|i| delta[i].abs() <= STEP_TOLERANCE * (cand[i].abs() + scale[i]));
            let cand_rss = if cand[2] > 0.0 {
                rss_of(&cand, &tau, y)
            } else {
                f64::INFINITY
            };
            if cand_rss.is_finite() && cand_rss <= rss {
                p = cand;
                rss = cand_rss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            if small {
                // No representable improvement remains.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            converged |= accepted;
            break;
        }
    }

    let r_squared = 1.0 - rss / tss;
    let dt_min = t
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let identifiable = p[2] > 0.0 && p[2].is_finite() && p[2] * dt_min < 30.0;
    Ok(FitResult {
        y0: p[0],
        plateau: p[1],
        kappa: p[2],
        rss,
        converged: converged && identifiable && r_squared >= MIN_R_SQUARED,
        iterations,
    })
}

/// Normalizes a raw recovery curve.
///
/// Background is subtracted from both curves, the raw curve is divided by
/// the reference (bleach correction), shifted so its first sample is 0 and
/// scaled so the fitted plateau is 1. The raw series must start at the first
/// post-bleach time point.
pub fn normalize_recovery(
    raw: &TimeSeries,
    background: f64,
    reference: &TimeSeries,
) -> Result<TimeSeries> {
    raw.require_len(3)?;
    let (t0, t1) = raw.span().unwrap();
    let (r0, r1) = reference
        .span()
        .ok_or_else(|| Error::Data("reference series is empty".into()))?;
    if r0 > t0 || r1 < t1 {
        return Err(Error::Data(format!(
            "reference covers [{r0}, {r1}] but raw data spans [{t0}, {t1}]"
        )));
    }
    let mut ratio = Vec::with_capacity(raw.len());
    for (&t, &v) in raw.times().iter().zip(raw.values()) {
        let r = reference.interpolate(t).unwrap() - background;
        if r.is_nan() || r <= 0.0 {
            return Err(Error::Data(format!(
                "reference intensity at t = {t} does not exceed background {background}"
            )));
        }
        ratio.push((v - background) / r);
    }
    let first = ratio[0];
    let shifted = TimeSeries::new(
        raw.times().to_vec(),
        ratio.iter().map(|v| v - first).collect(),
    )?;
    let fit = fit_one_phase(&shifted, None)?;
    if !fit.converged || fit.plateau.abs() <= f64::EPSILON {
        return Err(Error::Fit(
            "degenerate recovery: no plateau could be fitted".into(),
        ));
    }
    Ok(shifted.map_values(|v| v / fit.plateau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rmse: f64,
    pub max_abs_error: f64,
    /// Number of data points inside the model's time span.
    pub n: usize,
}

/// Pointwise model/data metrics on the data times covered by the model
/// (model linearly interpolated).
pub fn compare_model_data(data: &TimeSeries, model: &TimeSeries) -> Result<Comparison> {
    let mut sq = 0.0;
    let mut max = 0.0f64;
    let mut n = 0;
    for (&t, &v) in data.times().iter().zip(data.values()) {
        if let Some(m) = model.interpolate(t) {
            let e = (m - v).abs();
            sq += e * e;
            max = max.max(e);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Argument(
            "model and data time ranges do not overlap".into(),
        ));
    }
    Ok(Comparison {
        rmse: (sq / n as f64).sqrt(),
        max_abs_error: max,
        n,
    })
}

/// Mean and sample standard deviation of several curves on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Aligns each curve to its bleach time (`t_bleach[i]` becomes 0),
/// interpolates onto `grid` and averages. Grid points not covered by every
/// curve are dropped.
pub fn average_curves(curves: &[TimeSeries], t_bleach: &[f64], grid: &[f64]) -> Result<MeanCurve> {
    if curves.is_empty() || curves.len() != t_bleach.len() {
        return Err(Error::Argument(
            "need one bleach time per curve and at least one curve".into(),
        ));
    }
    let aligned = curves
        .iter()
        .zip(t_bleach)
        .map(|(c, tb)| c.map_times(|t| t - tb))
        .collect::<Result<Vec<_>>>()?;
    let mut out = MeanCurve {
        t: Vec::new(),
        mean: Vec::new(),
        sd: Vec::new(),
    };
    for &g in grid {
        let vals: Option<Vec<f64>> = aligned.iter().map(|c| c.interpolate(g)).collect();
        let Some(vals) = vals else { continue };
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        out.t.push(g);
        out.mean.push(mean);
        out.sd.push(var.sqrt());
    }
    Ok(out)
}
