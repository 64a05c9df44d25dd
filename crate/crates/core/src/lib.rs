//! Text-similarity cyber scores for firms and the empirical asset-pricing
//! tests built on top of them.

pub mod cluster;
pub mod embed;
pub mod error;
pub mod events;
pub mod ingest;
pub mod pipeline;
pub mod portfolio;
pub mod pricing;
pub mod report;
pub mod score;
pub mod stats;
pub mod synth;
pub mod tactic;
pub mod textprep;
pub mod time;

pub use error::{Error, Result};
pub use tactic::{SuperTacticMap, Tactic};
pub use time::Month;
