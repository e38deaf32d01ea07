//! Experiment drivers behind the `hemap` command line tool. Every experiment returns
//! plain records and renders them as [`table::Table`]s; nothing here prints.

pub mod chains;
pub mod config;
pub mod gridworld;
pub mod inspection;
pub mod stats;
pub mod table;
