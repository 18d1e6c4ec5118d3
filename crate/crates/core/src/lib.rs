//! Simulation, evaluation and optimization of single-pulse Rydberg-blockade
//! controlled-PHASE gates.
//!
//! Units: time in μs; Hamiltonian entries, Rabi frequencies and detunings in
//! rad/μs. Linear frequencies (MHz) only appear at the configuration
//! boundary.

pub mod config;
pub mod error;
pub mod linalg;
pub mod mcwf;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod propagator;
pub mod sweep;
pub mod waveform;

pub use error::{Error, Result};

/// Shortest round-trip text of a float for CSV output; exponent form when the
/// magnitude is below 1e-4 or at least 1e15.
#[derive(Clone, Copy, Debug)]
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
