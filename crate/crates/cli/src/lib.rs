//! Library side of the `ghq` command: configuration, the check registry,
//! report assembly and file formats.

pub mod checks;
pub mod commands;
pub mod config;
pub mod io;
pub mod report;
