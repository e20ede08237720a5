//! File formats, configuration and commands behind the `squeezeprof` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::CampaignConfig;
pub use error::{CliError, Result, Stage};
