//! Command-line and HTTP front ends over `netsig-core`.

pub mod cli;
pub mod service;
pub mod state;
