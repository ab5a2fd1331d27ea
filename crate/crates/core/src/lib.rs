//! Adiabatic geometric phases in strongly driven, weakly anharmonic qubits.
//!
//! The crate is organised the way an experiment is:
//!
//! - [`model`]: rotating-frame Hamiltonian of a driven multi-level transmon,
//!   its two-level effective-field picture and the charge-basis spectrum.
//! - [`adiabatic`]: Berry phases from the dressed eigenvectors (exact), from the
//!   two-level closed form and from second-order perturbation theory.
//! - [`sequence`]: the Ramsey / spin-echo pulse program with adiabatic loops.
//! - [`propagate`]: Schrödinger and Lindblad integration through a sequence.
//! - [`estimate`]: simulated tomography, phase extraction, maximum-likelihood
//!   reconstruction and Uhlmann fidelity.
//! - [`experiment`]: glue that runs one interferometer contour end to end.
//! - [`cli`]: configuration, parameter sweeps and CSV output.

pub mod adiabatic;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod propagate;
pub mod sequence;
pub mod units;

pub use error::{Error, Result};
