//! Command-line and HTTP front ends for interactive FWER sessions.

pub mod dataset;
pub mod error;

pub mod cli;
pub mod service;
