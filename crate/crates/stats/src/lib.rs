//! Regression models and evaluation statistics for held-out likelihood
//! comparisons.

pub mod design;
pub mod error;
pub mod evaluation;
pub mod regression;

pub use design::{standardize, DesignMatrix, GroupFactor, Scaling, INTERCEPT};
pub use error::{Result, StatsError};
