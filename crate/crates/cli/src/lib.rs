//! Scenario runner for the `dissipath` binary: JSON configurations, static
//! validation, integration on charts and trees, and the counterexample
//! harness.

pub mod build;
pub mod commands;
pub mod config;
