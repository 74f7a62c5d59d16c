//! Experiment configuration read from a flat `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the configuration file.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `orders`, `exogenous`, `coupling` | input CSV files (`coupling` optional) | |
//! | `holidays` | one ISO date per line; replaces the built-in Italian calendar | |
//! | `synthetic_seed`, `synthetic_days`, `synthetic_start` | generate the data instead of reading files | |
//! | `output` | output directory (store and reports) | `backtest-output` |
//! | `test_start`, `test_end` | first and last forecast day (inclusive) | earliest admissible, last data day |
//! | `window` | training window in days | 364 |
//! | `shortened_window` | must be `true` for any other window length | `false` |
//! | `models` | comma-separated model names | all models |
//! | `components` | `auto` or a fixed count per side | `auto` |
//! | `simulations` | bootstrap draws per hour | 5000 |
//! | `calibration_windows` | comma-separated window lengths in days | `28,56,91,182` |
//! | `probabilistic` | run the probabilistic pipeline | `true` |
//! | `probabilistic_models` | curve models to bootstrap | every configured curve model |
//! | `postprocess_model` | price model whose forecasts are postprocessed, or `none` | `fARX` when configured |
//! | `seed` | master seed | 0 |
//! | `on_failure` | `fail` or `naive` | `fail` |
//! | `grid_min`, `grid_max`, `grid_points` | evaluation grid | 0, 300, 301 |
//! | `bandwidth` | fixed smoothing bandwidth for both sides | GCV |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::models::ModelVariant;
use crate::probabilistic::{DEFAULT_SIMULATIONS, MIN_SIMULATIONS, MIN_WINDOW};

pub const DEFAULT_WINDOW: usize = 364;
pub const DEFAULT_CALIBRATION_WINDOWS: [usize; 4] = [28, 56, 91, 182];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        orders: PathBuf,
        exogenous: PathBuf,
        coupling: Option<PathBuf>,
    },
    Synthetic {
        seed: u64,
        days: usize,
        start: NaiveDate,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    Fpca,
    Zst,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Fpca => "FPCA",
            Representation::Zst => "ZST",
        }
    }
}

/// A forecasting model of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSpec {
    /// Repeats the curves and price of the naive source day.
    Naive,
    /// Regression on curve scores of a representation.
    Curve(Representation, ModelVariant),
    /// Regression on hourly prices.
    Price(ModelVariant),
}

impl ModelSpec {
    /// Every model of the experiment, naive first.
    pub fn all() -> Vec<ModelSpec> {
        let mut v = vec![ModelSpec::Naive];
        for r in [Representation::Fpca, Representation::Zst] {
            for m in CURVE_VARIANTS {
                v.push(ModelSpec::Curve(r, m));
            }
        }
        v.extend(PRICE_VARIANTS.iter().map(|m| ModelSpec::Price(*m)));
        v
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Naive => "Naive".into(),
            ModelSpec::Curve(r, m) => format!("{}-{}", r.name(), m.name()),
            ModelSpec::Price(m) => m.name().into(),
        }
    }

    pub fn parse(s: &str) -> Result<ModelSpec> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("naive") {
            return Ok(ModelSpec::Naive);
        }
        let bad = || Error::Config(format!("unknown model '{s}'"));
        if let Some((repr, variant)) = s.split_once('-') {
            let r = if repr.eq_ignore_ascii_case("fpca") {
                Representation::Fpca
            } else if repr.eq_ignore_ascii_case("zst") {
                Representation::Zst
            } else {
                return Err(bad());
            };
            let m = ModelVariant::parse(variant).ok_or_else(bad)?;
            if !CURVE_VARIANTS.contains(&m) {
                return Err(Error::Config(format!(
                    "{} is not a curve model; use one of ARX, fARX, VARX, fVARX",
                    m.name()
                )));
            }
            return Ok(ModelSpec::Curve(r, m));
        }
        let m = ModelVariant::parse(s).ok_or_else(bad)?;
        if !PRICE_VARIANTS.contains(&m) {
            return Err(Error::Config(format!(
                "{} is not a price model; use one of ARX, fARX, LEAR",
                m.name()
            )));
        }
        Ok(ModelSpec::Price(m))
    }

    pub fn representation(&self) -> Option<Representation> {
        match self {
            ModelSpec::Curve(r, _) => Some(*r),
            _ => None,
        }
    }

    pub fn is_curve(&self) -> bool {
        matches!(self, ModelSpec::Curve(..))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

const CURVE_VARIANTS: [ModelVariant; 4] = [
    ModelVariant::Arx,
    ModelVariant::Farx,
    ModelVariant::Varx,
    ModelVariant::Fvarx,
];
// vector variants coincide with their univariate versions for a scalar price
const PRICE_VARIANTS: [ModelVariant; 3] =
    [ModelVariant::Arx, ModelVariant::Farx, ModelVariant::Lear];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentMode {
    /// Knee / explained-variance rule, refreshed every day.
    Auto,
    /// The same count on both sides every day.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailurePolicy {
    FailFast,
    /// Replace a failed forecast by the naive one and log it.
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub holidays: Option<PathBuf>,
    pub output: PathBuf,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub window: usize,
    pub shortened_window: bool,
    pub models: Vec<ModelSpec>,
    pub components: ComponentMode,
    pub simulations: usize,
    pub calibration_windows: Vec<usize>,
    pub probabilistic: bool,
    pub probabilistic_models: Option<Vec<ModelSpec>>,
    pub postprocess_model: Option<ModelVariant>,
    pub seed: u64,
    pub on_failure: FailurePolicy,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub bandwidth: Option<f64>,
}

impl ExperimentConfig {
    /// Defaults around a data source.
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            holidays: None,
            output: PathBuf::from("backtest-output"),
            test_start: None,
            test_end: None,
            window: DEFAULT_WINDOW,
            shortened_window: false,
            models: ModelSpec::all(),
            components: ComponentMode::Auto,
            simulations: DEFAULT_SIMULATIONS,
            calibration_windows: DEFAULT_CALIBRATION_WINDOWS.to_vec(),
            probabilistic: true,
            probabilistic_models: None,
            postprocess_model: Some(ModelVariant::Farx),
            seed: 0,
            on_failure: FailurePolicy::FailFast,
            grid_min: 0.0,
            grid_max: 300.0,
            grid_points: 301,
            bandwidth: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses configuration text; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    i + 1
                ))
            })?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{k}'",
                    i + 1
                )));
            }
        }
        let mut keys = Keys { kv, base };
        let data = if let Some(orders) = keys.path("orders") {
            let exogenous = keys
                .path("exogenous")
                .ok_or_else(|| Error::Config("'orders' requires 'exogenous'".into()))?;
            DataSource::Files {
                orders,
                exogenous,
                coupling: keys.path("coupling"),
            }
        } else if let Some(days) = keys.parsed::<usize>("synthetic_days")? {
            DataSource::Synthetic {
                seed: keys.parsed("synthetic_seed")?.unwrap_or(0),
                days,
                start: keys
                    .date("synthetic_start")?
                    .unwrap_or(NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date")),
            }
        } else {
            return Err(Error::Config(
                "no data source: set 'orders' and 'exogenous', or 'synthetic_days'".into(),
            ));
        };
        let mut c = Self::new(data);
        c.holidays = keys.path("holidays");
        if let Some(p) = keys.path("output") {
            c.output = p;
        }
        c.test_start = keys.date("test_start")?;
        c.test_end = keys.date("test_end")?;
        if let Some(w) = keys.parsed("window")? {
            c.window = w;
        }
        if let Some(b) = keys.parsed("shortened_window")? {
            c.shortened_window = b;
        }
        if let Some(m) = keys.take("models") {
            c.models = parse_models(&m)?;
        }
        if let Some(m) = keys.take("components") {
            c.components = if m.eq_ignore_ascii_case("auto") {
                ComponentMode::Auto
            } else {
                ComponentMode::Fixed(m.parse().map_err(|_| {
                    Error::Config(format!("components: expected 'auto' or a count, got '{m}'"))
                })?)
            };
        }
        if let Some(n) = keys.parsed("simulations")? {
            c.simulations = n;
        }
        if let Some(w) = keys.take("calibration_windows") {
            c.calibration_windows = w
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        Error::Config(format!(
                            "calibration_windows: invalid length '{}'",
                            s.trim()
                        ))
                    })
                })
                .collect::<Result<_>>()?;
        }
        if let Some(b) = keys.parsed("probabilistic")? {
            c.probabilistic = b;
        }
        if let Some(m) = keys.take("probabilistic_models") {
            c.probabilistic_models = Some(parse_models(&m)?);
        }
        if !c.models.contains(&ModelSpec::Price(ModelVariant::Farx)) {
            c.postprocess_model = None;
        }
        if let Some(m) = keys.take("postprocess_model") {
            c.postprocess_model = if m.eq_ignore_ascii_case("none") {
                None
            } else {
                match ModelSpec::parse(&m)? {
                    ModelSpec::Price(v) => Some(v),
                    other => {
                        return Err(Error::Config(format!(
                            "postprocess_model must be a price model, got {other}"
                        )))
                    }
                }
            };
        }
        if let Some(s) = keys.parsed("seed")? {
            c.seed = s;
        }
        if let Some(p) = keys.take("on_failure") {
            c.on_failure = match p.as_str() {
                "fail" => FailurePolicy::FailFast,
                "naive" => FailurePolicy::Naive,
                _ => {
                    return Err(Error::Config(format!(
                        "on_failure: expected 'fail' or 'naive', got '{p}'"
                    )))
                }
            };
        }
        if let Some(v) = keys.parsed("grid_min")? {
            c.grid_min = v;
        }
        if let Some(v) = keys.parsed("grid_max")? {
            c.grid_max = v;
        }
        if let Some(v) = keys.parsed("grid_points")? {
            c.grid_points = v;
        }
        c.bandwidth = keys.parsed("bandwidth")?;
        if let Some(k) = keys.kv.keys().next() {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks the invariants that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.window != DEFAULT_WINDOW && !self.shortened_window {
            return Err(Error::Config(format!(
                "window = {} differs from {DEFAULT_WINDOW} days; set 'shortened_window = true' to run this non-standard setup",
                self.window
            )));
        }
        if self.window < 14 {
            return Err(Error::Config(format!(
                "window must be at least 14 days, got {}",
                self.window
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        if !self.models.contains(&ModelSpec::Naive) {
            return Err(Error::Config(
                "the Naive model is required as the relative-error benchmark".into(),
            ));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("duplicate model in 'models'".into()));
        }
        if let ComponentMode::Fixed(k) = self.components {
            if k == 0 || k >= self.grid_points {
                return Err(Error::Config(format!(
                    "components must lie in [1, grid_points), got {k}"
                )));
            }
        }
        if self.probabilistic {
            if self.simulations < MIN_SIMULATIONS {
                return Err(Error::Config(format!(
                    "simulations must be at least {MIN_SIMULATIONS}, got {}",
                    self.simulations
                )));
            }
            if self.calibration_windows.is_empty() {
                return Err(Error::Config("calibration_windows is empty".into()));
            }
            if let Some(w) = self.calibration_windows.iter().find(|w| **w < MIN_WINDOW) {
                return Err(Error::Config(format!(
                    "calibration windows must be at least {MIN_WINDOW} days, got {w}"
                )));
            }
            for m in self.bootstrap_models() {
                if !m.is_curve() || !self.models.contains(&m) {
                    return Err(Error::Config(format!(
                        "probabilistic model {m} must be a configured curve model"
                    )));
                }
            }
            if let Some(v) = self.postprocess_model {
                if !self.models.contains(&ModelSpec::Price(v)) {
                    return Err(Error::Config(format!(
                        "postprocess_model {} is not among the configured models",
                        v.name()
                    )));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.test_start, self.test_end) {
            if b < a {
                return Err(Error::Config(format!(
                    "test_end {b} precedes test_start {a}"
                )));
            }
        }
        if !(self.grid_min < self.grid_max) || self.grid_points < 50 {
            return Err(Error::Config(format!(
                "invalid grid [{}, {}] with {} points",
                self.grid_min, self.grid_max, self.grid_points
            )));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Config(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    /// Curve models that feed the bootstrap.
    pub fn bootstrap_models(&self) -> Vec<ModelSpec> {
        match &self.probabilistic_models {
            Some(m) => m.clone(),
            None => self
                .models
                .iter()
                .copied()
                .filter(ModelSpec::is_curve)
                .collect(),
        }
    }

    /// Stored days needed before the probabilistic pipeline starts.
    pub fn probabilistic_warmup(&self) -> usize {
        self.calibration_windows.iter().copied().max().unwrap_or(0)
    }
}

fn parse_models(list: &str) -> Result<Vec<ModelSpec>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ModelSpec::parse)
        .collect()
}

struct Keys<'a> {
    kv: BTreeMap<String, String>,
    base: &'a Path,
}

impl Keys<'_> {
    fn take(&mut self, key: &str) -> Option<String> {
        self.kv.remove(key)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|v| self.base.join(v))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    fn date(&mut self, key: &str) -> Result<Option<NaiveDate>> {
        self.take(key)
            .map(|v| {
                NaiveDate::parse_from_str(&v, "%Y-%m-%d")
                    .map_err(|_| Error::Config(format!("{key}: expected YYYY-MM-DD, got '{v}'")))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for m in ModelSpec::all() {
            assert_eq!(ModelSpec::parse(&m.name()).unwrap(), m);
        }
        assert_eq!(ModelSpec::all().len(), 12);
        assert!(ModelSpec::parse("ZST-LEAR").is_err());
        assert!(ModelSpec::parse("VARX").is_err());
    }

    #[test]
    fn parses_documented_keys() {
        let text = "# smoke\nsynthetic_days = 60\nsynthetic_seed = 3\nwindow = 28\nshortened_window = true\n\
                    models = Naive, FPCA-ARX, fARX\ncomponents = 3\nseed = 9\noutput = out\non_failure = naive\n";
        let c = ExperimentConfig::parse(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.window, 28);
        assert_eq!(c.models.len(), 3);
        assert_eq!(c.components, ComponentMode::Fixed(3));
        assert_eq!(c.output, PathBuf::from("/tmp/x/out"));
        assert_eq!(c.on_failure, FailurePolicy::Naive);
        assert!(matches!(
            c.data,
            DataSource::Synthetic {
                seed: 3,
                days: 60,
                ..
            }
        ));
    }

    #[test]
    fn short_window_needs_flag() {
        let r = ExperimentConfig::parse("synthetic_days = 60\nwindow = 28\n", Path::new("."));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let r = ExperimentConfig::parse("synthetic_days = 60\nwindw = 28\n", Path::new("."));
        assert!(matches!(r, Err(Error::Config(m)) if m.contains("windw")));
    }
}
