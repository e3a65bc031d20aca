//! Command-line entry points and the live session service.

pub mod cli;
pub mod server;
