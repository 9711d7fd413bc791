pub mod autodiff;
pub mod error;

pub use error::{Error, Result};
pub mod models;
pub mod rng;
pub mod datasets;
pub mod game;
pub mod metrics;
pub mod training;
pub mod baselines;
