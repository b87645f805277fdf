//! Command-line pipeline and `/v1` chat service over the `linkground` core.

pub mod commands;
pub mod config;
pub mod engine;
pub mod server;
pub mod session;
