//! File formats, benchmark harness and command-line front end for
//! `refcolor-core`.

pub mod bench;
pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod report;

pub use error::{Error, Result};
