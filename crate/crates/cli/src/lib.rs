//! Experiment runner behind the `bcwi` command-line tool.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod report;
