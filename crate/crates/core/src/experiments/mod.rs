//! Instance generators, dataset loading, configuration and the experiment
//! runner behind the command-line tool.

pub mod config;
pub mod generators;
pub mod libsvm;
pub mod rng;
pub mod runner;
