//! Std companion to `fedspace-core`: JSON/CSV file formats, config
//! loading with CLI overrides, MNIST file ingestion, and a scoped-thread
//! executor whose results are identical to the serial one.

pub mod config;
pub mod io;
pub mod threads;
