//! Day-ahead supply and demand curve forecasting: curve construction,
//! smoothing, functional representations, regularized autoregressions,
//! probabilistic clearing-price forecasts, evaluation and backtesting.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod curves;
pub mod error;
pub mod evaluation;
pub mod market_data;
pub mod models;
pub mod probabilistic;
pub mod regression;
pub mod representation;
pub mod seeding;
pub mod smoothing;

pub use backtest::{BacktestSummary, ExperimentConfig, ModelSpec, Representation};
pub use curves::{clear_market, ClearingPoint, StepCurve};
pub use error::{Error, Result};
pub use market_data::{ExogenousRecord, MarketSnapshot, OrderRecord, Side};
pub use models::ModelVariant;
pub use probabilistic::EmpiricalPriceDistribution;
pub use representation::{BasisPair, CurveBasis, FpcaBasis, ZstBasis};
pub use smoothing::{EvaluationGrid, SmoothCurve};
