//! Simulation and analysis toolkit for nonlocal (ghost) polarimetric
//! discrimination of polarization objects with polarization-entangled
//! photon pairs.
//!
//! The signal photon of an entangled pair passes a sample and a fixed
//! polarization transformation before hitting a polarization-blind detector.
//! The idler photon never touches the sample; it is analyzed with a few
//! polarization projectors. Coincidence counts for each idler projector form
//! the coordinates of the sample in a low-dimensional "response space", and
//! samples are told apart by checking whether their 95% confidence regions in
//! that space overlap.
//!
//! Modules, bottom-up:
//!
//! - [`polcalc`]: Jones/Mueller calculus for polarizers, partial polarizers
//!   and retarders, plus Mueller → Choi/Kraus conversion.
//! - [`qstate`]: two-qubit density matrices, partial traces, concurrence,
//!   linear entropy and fidelity.
//! - [`ghost`]: heralded idler states, coincidence probabilities and sample
//!   family sweeps into the response space.
//! - [`countsim`]: seeded Poisson counting with efficiencies, accidentals
//!   and per-run intensity drift, and the matching corrections.
//! - [`tomo`]: 16-setting two-qubit tomography with maximum-likelihood
//!   reconstruction.
//! - [`discern`]: per-sample statistics, confidence ellipsoids, greedy
//!   distinguishable subsets and angular step statistics.
//! - [`optproj`]: Nelder–Mead search for projector settings and the nearest
//!   QWP + polarizer realization of a target Mueller matrix.

pub mod countsim;
pub mod discern;
mod error;
pub mod ghost;
pub mod optproj;
pub mod polcalc;
pub mod qstate;
pub mod tomo;

pub use error::{Error, Result};

/// Double precision complex number used throughout the crate.
pub type C64 = num_complex::Complex64;
