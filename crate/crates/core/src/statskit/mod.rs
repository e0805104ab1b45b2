//! Numerical statistics shared by the simulation studies and the bias tests.
//!
//! Only what the audit needs: order-statistic quantiles, binomial
//! probabilities, the Shapiro-Wilk normality test and a normal upper tail
//! that stays accurate far out in the tail.

mod binomial;
mod normal;
mod quantile;
mod shapiro;

pub use binomial::{binomial_pmf, binomial_tail_ge};
pub use normal::{erfc, erfcx, normal_upper_tail};
pub use quantile::{
    empirical_quantile, quantile_index, quantile_sorted, quantile_standard_error_sorted,
    QuantileConvention,
};
pub use shapiro::{shapiro_wilk, ShapiroWilk, SHAPIRO_WILK_MAX_N};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("probability {0} outside its valid range")]
    InvalidProbability(f64),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("Shapiro-Wilk needs at least 3 values, got {0}")]
    TooFewValues(usize),
    #[error("Shapiro-Wilk supports at most {max} values, got {got}")]
    TooManyValues { got: usize, max: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}
