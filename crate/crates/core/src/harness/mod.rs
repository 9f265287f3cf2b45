//! Monte-Carlo harness: configuration, sweep execution, and artifact output.
//!
//! [`config`] defines the scenario file format and defaults, [`sweep`] runs
//! seeded trials over one configuration axis, and [`output`] serializes the
//! results (CSV tables, per-trial logs, run metadata, plotting script). The
//! `fasloc` binary is a thin command-line front end over these three
//! modules; everything it does is available programmatically.

pub mod config;
pub mod output;
pub mod sweep;
