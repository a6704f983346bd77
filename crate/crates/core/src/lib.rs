//! Community genealogy from early-member overlap, and the prediction tasks
//! built on it.

pub mod dataset;
pub mod early;
pub mod error;
pub mod genealogy;
pub mod growth;
pub mod ingest;
pub mod lang;
pub mod ml;
pub mod report;
pub mod stats;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
