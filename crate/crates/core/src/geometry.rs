//! Junction shapes, cross-section areas and the harmonic-mean area that sets
//! the diffusive conductance of a junction.
//!
//! All lengths are in µm, areas in µm², volumes in µm³.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A diffusing species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reporter {
    pub name: String,
    /// Diffusivity, µm²/s.
    pub diffusivity: f64,
    /// Molecular radius, µm.
    pub radius: f64,
}

impl Reporter {
    pub fn new(name: impl Into<String>, diffusivity: f64, radius: f64) -> Result<Self> {
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(Error::Domain(format!(
                "reporter diffusivity must be positive, got {diffusivity}"
            )));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!(
                "reporter radius must be non-negative, got {radius}"
            )));
        }
        Ok(Self {
            name: name.into(),
            diffusivity,
            radius,
        })
    }

    /// ~30 kDa GFP-KDEL reporter.
    pub fn small() -> Self {
        Self {
            name: "small".into(),
            diffusivity: 3.3,
            radius: 1.75e-3,
        }
    }

    /// ~120 kDa NusA fusion reporter.
    pub fn large() -> Self {
        Self {
            name: "large".into(),
            diffusivity: 0.52,
            radius: 2.5e-3,
        }
    }

    /// Plausible range of the large reporter's radius, µm.
    pub const LARGE_RADIUS_RANGE: (f64, f64) = (2.5e-3, 6e-3);

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "small" => Some(Self::small()),
            "large" => Some(Self::large()),
            _ => None,
        }
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.name.clone(), self.diffusivity, radius)
    }
}

/// Truncated cone with radius `radius` at the NE end (z = 0) that widens
/// with opening angle `angle` toward the ER end (z = L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub radius: f64,
    /// Opening angle, radians.
    pub angle: f64,
    pub length: f64,
}

impl Cone {
    pub fn new(radius: f64, angle: f64, length: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!(
                "cone radius must be positive, got {radius}"
            )));
        }
        if !(0.0..FRAC_PI_2).contains(&angle) {
            return Err(Error::Domain(format!(
                "cone angle must lie in [0, pi/2), got {angle} rad"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!(
                "junction length must be positive, got {length}"
            )));
        }
        Ok(Self {
            radius,
            angle,
            length,
        })
    }

    pub fn from_degrees(radius: f64, angle_deg: f64, length: f64) -> Result<Self> {
        Self::new(radius, angle_deg.to_radians(), length)
    }

    fn slope(&self) -> f64 {
        self.angle.tan()
    }

    fn radius_at(&self, z: f64) -> f64 {
        self.radius + z * self.slope()
    }
}

/// Radius-vs-position table; radius is linear between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    z: Vec<f64>,
    radius: Vec<f64>,
}

impl Profile {
    pub fn new(z: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if z.len() != radius.len() {
            return Err(Error::Domain("profile columns differ in length".into()));
        }
        if z.len() < 2 {
            return Err(Error::Domain("profile needs at least two samples".into()));
        }
        if z[0] != 0.0 {
            return Err(Error::Domain(format!(
                "profile must start at z = 0 (NE end), got {}",
                z[0]
            )));
        }
        if let Some(i) = z
            .windows(2)
            .position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Domain(format!(
                "profile positions must be strictly increasing (row {})",
                i + 1
            )));
        }
        if let Some(i) = radius.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Domain(format!(
                "profile radius must be positive (row {i}, value {})",
                radius[i]
            )));
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("profile positions must be finite".into()));
        }
        Ok(Self { z, radius })
    }

    /// Reads a `z_um,radius_um` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["z_um", "radius_um"] {
            return Err(Error::Data(format!(
                "profile header must be `z_um,radius_um`, got `{}`",
                cols.join(",")
            )));
        }
        let mut z = Vec::new();
        let mut radius = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .parse()
                    .map_err(|e| Error::Data(format!("profile row {}: {e}", i + 2)))
            };
            z.push(num(0)?);
            radius.push(num(1)?);
        }
        Self::new(z, radius)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    /// Samples a cone at `n` evenly spaced positions.
    pub fn sample_cone(cone: &Cone, n: usize) -> Result<Self> {
        let z = crate::series::linspace(0.0, cone.length, n.max(2));
        let radius = z.iter().map(|&s| cone.radius_at(s)).collect();
        Self::new(z, radius)
    }

    pub fn positions(&self) -> &[f64] {
        &self.z
    }

    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    fn length(&self) -> f64 {
        *self.z.last().unwrap()
    }

    fn radius_at(&self, z: f64) -> f64 {
        let j = self
            .z
            .partition_point(|&s| s <= z)
            .clamp(1, self.z.len() - 1);
        let (za, zb) = (self.z[j - 1], self.z[j]);
        let (ra, rb) = (self.radius[j - 1], self.radius[j]);
        ra + (rb - ra) * (z - za) / (zb - za)
    }

    /// Breakpoints of the piecewise-linear radius strictly inside `(a, b)`.
    fn breakpoints(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.z.iter().copied().filter(move |&s| s > a && s < b)
    }
}

/// Cross-section profile of one junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JunctionGeometry {
    Cone(Cone),
    Tabulated(Profile),
}

impl JunctionGeometry {
    pub fn cone(radius: f64, angle: f64, length: f64) -> Result<Self> {
        Cone::new(radius, angle, length).map(Self::Cone)
    }

    /// Average junction: R = 11 nm, L = 10 nm, 25° opening.
    pub fn reference_cone() -> Self {
        Self::Cone(Cone {
            radius: 11e-3,
            angle: 25f64.to_radians(),
            length: 10e-3,
        })
    }

    pub fn length(&self) -> f64 {
        match self {
            Self::Cone(c) => c.length,
            Self::Tabulated(p) => p.length(),
        }
    }

    pub fn min_radius(&self) -> f64 {
        match self {
            Self::Cone(c) => c.radius,
            Self::Tabulated(p) => p.radius.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn radius_unchecked(&self, z: f64) -> f64 {
        match self {
            Self::Cone(c) => c.radius_at(z),
            Self::Tabulated(p) => p.radius_at(z),
        }
    }

    pub fn radius_at(&self, z: f64) -> Result<f64> {
        let len = self.length();
        if !(0.0..=len).contains(&z) {
            return Err(Error::Domain(format!(
                "position {z} outside junction [0, {len}]"
            )));
        }
        Ok(self.radius_unchecked(z))
    }

    /// Cross-section area A(z).
    pub fn area_at(&self, z: f64) -> Result<f64> {
        self.radius_at(z).map(|r| PI * r * r)
    }

    /// Segment endpoints on which the radius is linear, covering `[a, b]`.
    fn linear_pieces(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        if let Self::Tabulated(p) = self {
            pts.extend(p.breakpoints(a, b));
        }
        pts.push(b);
        pts
    }

    /// Exact ∫ₐᵇ dz / A(z) for a piecewise-linear radius: each linear piece
    /// contributes `h / (π r₀ r₁)`.
    pub fn inverse_area_integral(&self, a: f64, b: f64) -> f64 {
        self.linear_pieces(a, b)
            .windows(2)
            .map(|w| {
                let (r0, r1) = (self.radius_unchecked(w[0]), self.radius_unchecked(w[1]));
                (w[1] - w[0]) / (PI * r0 * r1)
            })
            .sum()
    }

    /// Exact ∫ₐᵇ A(z) dz (frustum volumes of each linear piece).
    pub fn volume_between(&self, a: f64, b: f64) -> f64 {
        self.linear_pieces(a, b)
            .windows(2)
            .map(|w| {
                let (r0, r1) = (self.radius_unchecked(w[0]), self.radius_unchecked(w[1]));
                PI * (w[1] - w[0]) * (r0 * r0 + r0 * r1 + r1 * r1) / 3.0
            })
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.volume_between(0.0, self.length())
    }

    /// Harmonic-mean cross-section `A* = L / ∫₀ᴸ dz/A(z)`.
    ///
    /// The cone uses its closed form `A* = Rπ(R + L tanα)`.
    pub fn harmonic_mean_area(&self) -> f64 {
        match self {
            Self::Cone(c) => PI * c.radius * (c.radius + c.length * c.slope()),
            Self::Tabulated(p) => p.length() / self.inverse_area_integral(0.0, p.length()),
        }
    }

    /// Arithmetic mean cross-section `(1/L) ∫₀ᴸ A(z) dz`.
    pub fn mean_area(&self) -> f64 {
        self.volume() / self.length()
    }

    /// `A*` by adaptive Simpson quadrature of `1/A(z)` (independent of the
    /// closed forms above).
    pub fn harmonic_mean_area_quadrature(&self, rel_tol: f64) -> f64 {
        let inv_area = |z: f64| {
            let r = self.radius_unchecked(z);
            1.0 / (PI * r * r)
        };
        let pts = self.linear_pieces(0.0, self.length());
        let integral: f64 = pts
            .windows(2)
            .map(|w| adaptive_simpson(&inv_area, w[0], w[1], rel_tol))
            .sum();
        self.length() / integral
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h * (fa + 4.0 * fm + fb) / 6.0
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, rel_tol * whole.abs(), 48)
}

/// A junction geometry whose radii already account for the reporter size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveGeometry(JunctionGeometry);

impl EffectiveGeometry {
    /// Treats `geom` as already effective (zero-size reporter).
    pub fn from_geometry(geom: JunctionGeometry) -> Self {
        Self(geom)
    }

    pub fn geometry(&self) -> &JunctionGeometry {
        &self.0
    }

    pub fn length(&self) -> f64 {
        self.0.length()
    }

    pub fn area_at(&self, z: f64) -> Result<f64> {
        self.0.area_at(z)
    }

    pub fn harmonic_mean_area(&self) -> f64 {
        self.0.harmonic_mean_area()
    }
}

impl std::ops::Deref for EffectiveGeometry {
    type Target = JunctionGeometry;

    fn deref(&self) -> &JunctionGeometry {
        &self.0
    }
}

/// Shrinks every radius by the reporter radius (steric exclusion).
pub fn effective_geometry(
    geom: &JunctionGeometry,
    reporter: &Reporter,
) -> Result<EffectiveGeometry> {
    let r = reporter.radius;
    let min = geom.min_radius();
    if r >= min {
        return Err(Error::InfeasibleGeometry(format!(
            "reporter `{}` radius {r} µm does not fit through junction of minimum radius {min} µm",
            reporter.name
        )));
    }
    let shrunk = match geom {
        JunctionGeometry::Cone(c) => JunctionGeometry::Cone(Cone {
            radius: c.radius - r,
            ..*c
        }),
        JunctionGeometry::Tabulated(p) => JunctionGeometry::Tabulated(Profile {
            z: p.z.clone(),
            radius: p.radius.iter().map(|v| v - r).collect(),
        }),
    };
    Ok(EffectiveGeometry(shrunk))
}

/// Large-L limit of `A*/L` for a cone: `Rπ tanα`.
pub fn asymptotic_conductance_limit(radius: f64, angle: f64) -> Result<f64> {
    if !(0.0..FRAC_PI_2).contains(&angle) {
        return Err(Error::Domain(format!(
            "angle must lie in [0, pi/2), got {angle}"
        )));
    }
    Ok(radius * PI * angle.tan())
}
