//! Command-line front end: problem files in, JSON and CSV reports out.
//!
//! Exit codes: 0 when every check passes, 1 for unusable input, 2 when a
//! computed result fails its constraint or convexity check.

pub mod commands;
pub mod output;
pub mod problem;

pub use commands::{run, Cli};
