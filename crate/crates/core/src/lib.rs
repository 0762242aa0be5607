//! Numerical lab for chordal Loewner evolutions driven by SLE, boundary
//! crossing events and Monte Carlo estimation of boundary arm exponents.
//!
//! The crate is organised bottom-up:
//!
//! * [`loewner`] integrates the chordal Loewner equation for marked boundary
//!   points and reconstructs traces from discretised chains.
//! * [`driver`] samples SLE and SLE(ρ) driving functions and evaluates the
//!   associated local martingales.
//! * [`maps`] holds the explicit conformal maps (half-disc removal, half-strip
//!   removal) and a Brownian harmonic-measure estimator.
//! * [`crossing`] detects alternating boundary crossing events, either through
//!   conformal threshold criteria or geometrically on reconstructed traces.
//! * [`lab`] runs experiments, fits exponents and compares them to the closed
//!   form predictions.

pub mod crossing;
pub mod driver;
pub mod error;
pub mod lab;
pub mod loewner;
pub mod maps;
pub mod rng;

pub use error::{ArmlabError, Result};
pub use num_complex::Complex64;

pub use crossing::{CrossingRecord, DetectConfig, EventSpec, Terminal, Variant};
pub use driver::DriverConfig;
pub use lab::{EstimateConfig, ExponentFit, ExponentTable, GridAxis};
pub use loewner::{DtPolicy, FlowState, Integrator, MarkedPoint};
