//! Pipeline subcommands and the annotation HTTP server behind the `vlogvis`
//! binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod server;

pub use cli::run;
pub use error::CliError;
