//! The daily-recalibration experiment: configuration, data preparation,
//! forecast store, runner and reports.

pub mod config;
pub mod dataset;
pub mod reports;
pub mod runner;
pub mod store;

pub use config::{
    ComponentMode, DataSource, ExperimentConfig, FailurePolicy, ModelSpec, Representation,
    DEFAULT_CALIBRATION_WINDOWS, DEFAULT_WINDOW,
};
pub use dataset::Dataset;
pub use reports::{write_plot_data, write_reports, PLOT_FILES, REPORT_FILES};
pub use runner::{
    basis_fingerprint, fit_fpca_pair, fit_zst_pair, forecast_single_day, load_dataset,
    recalibrate_and_forecast_day, run_backtest, run_on_dataset, test_period, BacktestSummary,
    DayForecast, ModelForecast,
};
pub use store::ForecastStore;
