//! Transfer operators of open partially expanding interval maps: pressure,
//! Bowen dimension, spectral-gap bounds, Ruelle–Pollicott resonances and
//! numerical checks of the phase-space normal form.

pub mod error;
pub mod cli;
pub mod gap_bounds;
pub mod ifs_core;
pub mod normal_form;
pub mod par;
pub mod phase_space;
pub mod pressure;
pub mod resonances;

pub use error::{Error, Result};
