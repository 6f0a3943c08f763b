//! Command line front end for `resolab-core`: TOML configs, a rayon
//! executor, and versioned result files.

pub mod checks;
pub mod cli;
pub mod config;
pub mod exec;
pub mod output;
pub mod run;

pub use cli::{Cli, Command};
pub use config::Config;
pub use exec::Rayon;
pub use run::{execute, run, Failure, Outcome};
