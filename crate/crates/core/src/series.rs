//! Sampled curves shared by the analytic model, the solver and the fitting pipeline.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A sampled curve `y(t)` with strictly increasing, finite times.
///
/// Consumers that need a minimum number of points (fitting, normalization)
/// check it themselves, so short series such as a single evaluation time
/// are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Argument(format!(
                "time and value lengths differ ({} vs {})",
                t.len(),
                y.len()
            )));
        }
        if let Some(i) = t.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite sample at position {i}"
            )));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Argument(format!(
                "times must be strictly increasing (t[{}]={} >= t[{}]={})",
                i,
                t[i],
                i + 1,
                t[i + 1]
            )));
        }
        Ok(Self { t, y })
    }

    pub fn from_fn(t: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let y = t.iter().map(|&s| f(s)).collect();
        Self::new(t, y)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn require_len(&self, min: usize) -> Result<()> {
        if self.len() < min {
            return Err(Error::Argument(format!(
                "series has {} points, at least {min} required",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.t.first()?, *self.t.last()?))
    }

    /// Linear interpolation; `None` outside the sampled span.
    pub fn interpolate(&self, at: f64) -> Option<f64> {
        let (t0, t1) = self.span()?;
        if at < t0 || at > t1 || at.is_nan() {
            return None;
        }
        let j = self.t.partition_point(|&s| s <= at);
        if j == 0 {
            return Some(self.y[0]);
        }
        if j >= self.t.len() {
            return Some(*self.y.last().unwrap());
        }
        let (ta, tb) = (self.t[j - 1], self.t[j]);
        let (ya, yb) = (self.y[j - 1], self.y[j]);
        Some(ya + (yb - ya) * (at - ta) / (tb - ta))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            t: self.t.clone(),
            y: self.y.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_times(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.t.iter().map(|&v| f(v)).collect(), self.y.clone())
    }

    /// Drops samples before `t_start`.
    pub fn trim_before(&self, t_start: f64) -> Result<Self> {
        let i = self.t.partition_point(|&s| s < t_start);
        Self::new(self.t[i..].to_vec(), self.y[i..].to_vec())
    }

    /// Reads a two-column CSV with a header row (e.g. `t_s,intensity`).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::Data(format!(
                "expected at least two columns, header is {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut t = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |col: usize| -> Result<f64> {
                rec.get(col)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: column {col}: {e}", line + 2)))
            };
            t.push(parse(0)?);
            y.push(parse(1)?);
        }
        Self::new(t, y)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, value_header: &str) -> Result<()> {
        writeln!(out, "t_s,{value_header}")?;
        for (t, y) in self.t.iter().zip(&self.y) {
            writeln!(out, "{t},{y}")?;
        }
        Ok(())
    }
}

/// Evenly spaced grid of `n` points covering `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let h = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        end
                    } else {
                        start + h * i as f64
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_mismatched() {
        assert!(TimeSeries::new(vec![0.0, 2.0, 1.0], vec![0.0; 3]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, f64::NAN], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn interpolation_inside_and_outside() {
        let s = TimeSeries::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 6.0]).unwrap();
        assert_eq!(s.interpolate(0.5), Some(1.0));
        assert_eq!(s.interpolate(2.0), Some(4.0));
        assert_eq!(s.interpolate(3.0), Some(6.0));
        assert_eq!(s.interpolate(3.5), None);
        assert_eq!(s.interpolate(-0.1), None);
    }

    #[test]
    fn csv_round_trip() {
        let s = TimeSeries::new(vec![0.0, 0.5, 1.25], vec![1.0, -2.5, 3e-9]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, "intensity").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,intensity\n"));
        assert_eq!(TimeSeries::read_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn csv_reports_bad_row() {
        let err = TimeSeries::read_csv("t_s,intensity\n0,1\n1,abc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
