//! Batch front-end for the moving-horizon estimation toolkit: scenario
//! configs, estimation runs with bound monitors, certification reports,
//! stopping-rule benchmarks, and CSV/JSON/SVG artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod run;
pub mod svg;
