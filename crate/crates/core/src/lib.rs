//! Effective operators, dressed potentials, spectra and time propagation for a
//! charged quantum particle confined to a two-dimensional surface embedded in
//! three-dimensional space and driven by a time-periodic vector potential.
//!
//! The library works in the frame that oscillates with the classical quiver
//! motion of the driven particle (the Kramers-Henneberger frame). In that frame
//! the drive is absorbed into a dressed potential and a dressed kinetic
//! operator, both expanded in harmonics of the drive frequency. The main
//! pipeline is
//!
//! 1. [`geometry`]: parametrized surface -> tangent frame, metric, curvatures,
//!    attractive geometric potential,
//! 2. [`drive`]: hyperspace vector potential -> tangential displacement shape
//!    and its covariant divergence,
//! 3. [`shift`]: Abel maps and coordinate flows that realize the oscillating
//!    translation operator on a curved chart,
//! 4. [`dressing`]: harmonic decomposition of the dressed potential and the
//!    dressed Laplace-Beltrami operator,
//! 5. [`spectra`]: sparse assembly and shift-invert eigensolves,
//! 6. [`propagate`]: Crank-Nicolson time stepping and a lab-frame crosscheck.
//!
//! All internal quantities are in Hartree atomic units (`hbar = m_e = |e| = 1`).
//! Unit conversions for command-line use live in [`units`].

pub mod band;
pub mod checks;
pub mod dressing;
pub mod drive;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod operators;
pub mod propagate;
pub mod shift;
pub mod spectra;
pub mod units;

pub use error::{Error, Result};
pub use grid::{Grid2, ScalarField, Unit};
