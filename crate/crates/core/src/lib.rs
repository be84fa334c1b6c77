//! Cocycle simulation of SDEs driven by stored noise paths, with
//! synchronization-by-noise diagnostics: Lyapunov spectra, two-point
//! motion, pullback diameters, certified ball images and long-run measures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod ensemble;
pub mod error;
pub mod integrate;
pub mod measures;
pub mod noise;
pub mod rds;
pub mod stats;
pub mod streams;
pub mod systems;

pub use error::{RdsError, Result};
pub use noise::{ChannelKind, NoisePath, OUPath, TimeGrid};
pub use stats::EnsembleStat;
pub use systems::{build_system, SystemSpec};
