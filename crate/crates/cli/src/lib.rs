//! Experiment harness for the `lfbleak` simulator: configuration,
//! end-to-end scenarios, sweeps, run directories and the command line.

pub mod cli;
pub mod config;
pub mod jobs;
pub mod report;
pub mod scenarios;
pub mod seeds;
pub mod sweep;
