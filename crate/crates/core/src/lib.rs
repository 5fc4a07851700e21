pub mod config;
pub mod error;
pub mod evaluation;
pub mod labeling;
pub mod pipeline;
pub mod primitives;
pub mod ranker;
pub mod seeding;
pub mod simulator;

pub use error::{Error, Result};
