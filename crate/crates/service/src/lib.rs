//! HTTP service and command-line front end for `polestar-core`.

pub mod cli;
pub mod config;
pub mod http;
pub mod table;
