//! Error type shared by every module of the crate.

use std::path::PathBuf;

use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("missing hours in input: {}", format_timestamps(.missing))]
    Gap { missing: Vec<DateTime<Utc>> },

    #[error("data gap inside the training window: missing days {}", format_days(.days))]
    WindowGap { days: Vec<NaiveDate> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cannot build a quantity curve from an empty order list")]
    EmptyCurve,

    #[error("supply and demand curves do not intersect on [{p_min}, {p_max}]")]
    NoIntersection { p_min: f64, p_max: f64 },

    #[error("every bandwidth candidate yields a degenerate smoother (tr(L) >= G)")]
    DegenerateSmoother,

    #[error("rank error: {0}")]
    Rank(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("degenerate mean curve: {0}")]
    DegenerateGrid(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (max coefficient change {max_change:e})")]
    Convergence { sweeps: usize, max_change: f64 },

    #[error("scale must be strictly positive, got {0}")]
    Scale(f64),

    #[error("insufficient history: {0}")]
    Horizon(String),

    #[error("missing input: {0}")]
    Input(String),

    #[error("regression failed for hour {hour}, component {component}: {source}")]
    Fit {
        hour: usize,
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate error dimension: hour {hour}, component {component} has zero variance")]
    DegenerateDimension { hour: usize, component: usize },

    #[error("calibration window of {0} observations is too short (need at least 28)")]
    Window(usize),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("day {day}: {source}")]
    Day {
        day: NaiveDate,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Gap { .. }
            | Error::WindowGap { .. }
            | Error::EmptyCurve
            | Error::NoIntersection { .. }
            | Error::Input(_)
            | Error::Csv(_) => true,
            Error::Day { source, .. } | Error::Fit { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    /// True for invalid invocations: bad configuration, parameters or paths.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Io { .. } => true,
            Error::Day { source, .. } => source.is_user_error(),
            _ => false,
        }
    }
}

fn format_timestamps(ts: &[DateTime<Utc>]) -> String {
    let shown: Vec<String> = ts.iter().take(20).map(|t| t.to_rfc3339()).collect();
    if ts.len() > shown.len() {
        format!("{} (+{} more)", shown.join(", "), ts.len() - shown.len())
    } else {
        shown.join(", ")
    }
}

fn format_days(days: &[NaiveDate]) -> String {
    days.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
