//! Simulation and analysis toolkit for pulsed time-bin entangled photon pairs.
//!
//! The crate is organised along the measurement chain:
//!
//! - [`quantum`]: two-qubit states, projectors and entanglement metrics.
//! - [`sim`]: Monte-Carlo time-tag generator for a pulsed pair source with
//!   unbalanced interferometers.
//! - [`coinc`]: single-pass time-tag analysis (gating, coincidences, CAR,
//!   Klyshko efficiency, power-series and fringe fits).
//! - [`tomo`]: maximum-likelihood two-qubit tomography with Monte-Carlo
//!   error bars.
//! - [`io`]: binary/CSV time-tag files.

pub mod quantum;
pub mod sim;
pub mod coinc;
pub mod tomo;
pub mod io;
