//! Command-line pipeline and annotation-session service.

pub mod cli;
pub mod server;
pub mod session;
