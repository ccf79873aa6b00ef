//! Experiments, configuration files and output formats around
//! [`rfggd_core`].
//!
//! * [`config`] - the JSON run configuration and its validation.
//! * [`experiments`] - the car feasibility grid, the car parameter-iterate
//!   study and the adaptive-vs-fixed leader-follower comparison.
//! * [`output`] - CSV and SVG writers with atomic replacement.
//! * [`commands`] - the `rfggd` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use error::{Result, RunError};
pub use rfggd_core;
