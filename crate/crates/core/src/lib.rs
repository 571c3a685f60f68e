//! Diffusion-limited transport between a large reservoir (ER) and a small
//! reservoir (NE) connected by narrow junctions.
//!
//! * [`geometry`] junction shapes and the harmonic-mean area `A*`
//! * [`analytic`] rate constant `κ` and the exponential NE recovery
//! * [`solver`] finite-volume junction PDE coupled to both reservoirs
//! * [`frapfit`] recovery-curve normalization and one-phase fitting
//! * [`frap2d`] lattice random-walk estimator of in-compartment diffusivity
//! * [`sweep`] parameter grids over junction length, angle, reporter, radius

pub mod analytic;
pub mod error;
pub mod frap2d;
pub mod frapfit;
pub mod geometry;
pub mod series;
pub mod solver;
pub mod sweep;

pub use analytic::{rate_constant, recovery_curve, CellParams, RateResult};
pub use error::{Error, Result};
pub use geometry::{effective_geometry, EffectiveGeometry, JunctionGeometry, Reporter};
pub use series::TimeSeries;
pub use solver::{simulate, Mode, SimConfig, SimOutput, SolverSettings};
