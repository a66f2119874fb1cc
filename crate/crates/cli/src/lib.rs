//! Library side of the `pairdesign` binary, split out so integration tests
//! can drive commands in-process.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{run, Cli};
