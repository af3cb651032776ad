//! Configuration, experiment orchestration and file formats for the
//! `fractal-fkpp` library, plus the `fkpp` command-line driver.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod output;
