//! Pseudo-spectral simulator and harmonic-analysis toolkit for the
//! compressible Navier-Stokes-Korteweg system with zero sound speed.
//!
//! The crate has three layers:
//!
//! * spectral plumbing: [`grid`], [`field`] (transforms, symbols, Leray
//!   projection, Lebesgue norms);
//! * harmonic analysis: [`littlewood_paley`] (dyadic blocks, Besov / hybrid /
//!   time-integrated norms, Bernstein checks) and [`gevrey`] (analytic-weight
//!   multipliers and the inequality verification battery);
//! * dynamics: [`closure`], [`model`] (the perturbation system around a
//!   constant state), [`integrator`] (exact linear propagation with
//!   exponential time stepping), and [`decay`] (seeded decay experiments,
//!   the mesh-free linear oracle, and algebraic/exponential rate fits).

pub mod closure;
pub mod decay;
pub mod error;
pub mod field;
mod fft;
pub mod gevrey;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod littlewood_paley;
pub mod model;

pub use error::{Error, Result};
pub use field::{apply_symbol, lebesgue_norm, leray_project, transform_forward, SpectralField, Symbol};
pub use grid::GridSpec;
