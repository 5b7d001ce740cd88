//! Library side of the `conic-sv` command-line tool.

pub mod commands;
pub mod record;
