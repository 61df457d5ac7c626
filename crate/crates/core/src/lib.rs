//! Random telegraph noise in ReRAM devices as an entropy source: device
//! simulation, readout circuits, bit extraction, signal analysis and a
//! statistical test battery.

pub mod analysis;
pub mod bitgen;
pub mod error;
pub mod exec;
pub mod harvester;
pub mod rtn;
pub mod seed;
pub mod stat_tests;

pub use error::{Error, Result};
pub use exec::Execution;
