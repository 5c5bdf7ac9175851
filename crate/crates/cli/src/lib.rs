//! Benchmark harness around `scalemask-core`: synthetic scenes, predictors,
//! recall/ratio evaluation, the FLOP cost model, and all on-disk formats.

pub mod config;
pub mod cost;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod predict;
pub mod scene;

pub use error::{CliError, Result};
