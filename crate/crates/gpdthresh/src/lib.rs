//! Files, orchestration and the command-line front end for the spliced
//! gamma-mixture / GPD threshold model in `gpdthresh-core`.

pub mod cli;
pub mod config;
mod error;
pub mod experiments;
pub mod fit;
pub mod io;
pub mod report;

pub use error::{Category, Error, Result};
