//! Granger causality between channel pairs of a high-dimensional panel,
//! after removing the common influence of the remaining channels.

pub mod benchmark;
pub mod confound;
pub mod dpca;
pub mod error;
pub mod granger;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod series;
pub mod simgen;

pub use error::{Error, Result};
pub use series::MultiChannelSeries;
