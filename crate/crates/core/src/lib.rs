//! Simulation of time-correlated photon pairs from four-wave mixing in a hot
//! atomic vapor: source amplitude, atomic filter response, cross-correlation
//! traces, and the fits used to read them.

pub mod analysis;
pub mod biphoton;
pub mod cli;
pub mod error;
pub mod fft;
pub mod filter;
pub mod io;
pub mod pipeline;
pub mod response;
pub mod scheme;

pub use error::{Error, Result};
