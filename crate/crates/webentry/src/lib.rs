//! Command-line front end for web entry analysis: configuration files,
//! log ingestion, the aggregate store, report rendering and a synthetic log
//! generator.

pub mod config;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod report;
pub mod store;
