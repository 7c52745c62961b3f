pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod eval;
pub mod experiments;
pub mod models;
pub mod optim;
pub mod sampling;
pub mod seeding;
pub mod shift;
pub mod synth;
pub mod tkgan;
pub mod training;
pub mod ttt;

pub use error::{Error, Result};
