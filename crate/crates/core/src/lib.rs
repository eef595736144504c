//! Simulation and verification of two-way and chain teleportation built
//! from crossed space-time modular pointer measurements.
//!
//! Spins are qubits; each measuring device is an exact 4-level (Z4) pointer.
//! Couplings are impulsive controlled shifts, pointer pairs start in the
//! maximally entangled state Σ_q |q>|q>/2, and the classical record of a run
//! is one mod-4 difference per link.

pub mod cli;
pub mod corrections;
pub mod devices;
pub mod error;
pub mod hilbert;
pub mod inputs;
pub mod protocol;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
