//! Monte Carlo simulator and time-tag analysis for multi-wire SNSPD arrays.

pub mod analysis;
pub mod cli;
pub mod detector;
pub mod error;
pub mod io;
pub mod optics;
pub mod sim;
pub mod special;
pub mod walk;

pub use error::{Error, Result};
