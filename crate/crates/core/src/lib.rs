pub mod analysis;
pub mod cli;
pub mod detection;
pub mod errata;
pub mod error;
pub mod interferometer;
pub mod oracle;
pub mod states;
