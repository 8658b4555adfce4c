//! Command-line plumbing for texfit: run configurations, the five
//! subcommands, and exit-code mapping. The binary is a thin clap front end
//! over these functions.

pub mod commands;
pub mod config;
