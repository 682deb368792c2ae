//! Spectral Monte-Carlo simulation of the stochastic heat equation on the
//! circle, constrained to symmetric non-increasing fields by rearrangement,
//! with drift, coloured noise, and experiment harnesses on top.

pub mod cli;
pub mod config;
pub mod drift;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod io;
pub mod measure;
pub mod noise;
pub mod rearrange;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use spectral::{GridField, GridSpec, SpectralField};
