//! Gateway, run store, file formats, HTTP API and CLI around `riskscope-core`.

pub mod csv_io;
pub mod embedders;
pub mod gateway;
pub mod inputs;
pub mod pipeline;
pub mod runner;
pub mod store;
pub mod report;
pub mod config;
pub mod api;
pub mod cli;
