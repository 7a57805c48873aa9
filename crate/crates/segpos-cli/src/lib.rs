//! Library side of the `segpos` command-line tool: the synthetic
//! corpus generator and the file-level configuration the `pipeline`
//! subcommand consumes. The statistical machinery itself lives in the
//! `segpos` crate; this crate only wires files to it.

pub mod config;
pub mod synth;
