//! Feature schemas of the day-ahead regressions and their design matrices.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::calendar::CalendarDummies;
use super::panel::{PanelView, HOURS};
use crate::error::{Error, Result};
use crate::regression::DesignMatrix;

/// Lags of the target entering every regression.
pub const TARGET_LAGS: [usize; 4] = [1, 2, 3, 7];
/// Lags of the exogenous forecasts (0 is the forecast day itself).
pub const EXOGENOUS_LAGS: [usize; 3] = [0, 1, 7];
/// Days of history needed before the first usable observation.
pub const MAX_LAG: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    Naive,
    Arx,
    Farx,
    Varx,
    Fvarx,
    Lear,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Naive,
        ModelVariant::Arx,
        ModelVariant::Farx,
        ModelVariant::Varx,
        ModelVariant::Fvarx,
        ModelVariant::Lear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Naive => "Naive",
            ModelVariant::Arx => "ARX",
            ModelVariant::Farx => "fARX",
            ModelVariant::Varx => "VARX",
            ModelVariant::Fvarx => "fVARX",
            ModelVariant::Lear => "LEAR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
    }

    /// Whether all components share one design (estimated jointly).
    pub fn shared_design(self) -> bool {
        matches!(self, ModelVariant::Varx)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One regressor, addressed relative to the row's day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Target {
        lag: usize,
        hour: usize,
        component: usize,
    },
    Exogenous {
        lag: usize,
        hour: usize,
        variable: usize,
    },
    Dummy(usize),
}

impl Feature {
    pub fn name(&self) -> String {
        match *self {
            Feature::Target {
                lag,
                hour,
                component,
            } => format!("y[l{lag},h{hour},c{component}]"),
            Feature::Exogenous {
                lag,
                hour,
                variable,
            } => format!("x[l{lag},h{hour},v{variable}]"),
            Feature::Dummy(i) => ["monday", "saturday", "holiday"][i].to_string(),
        }
    }

    fn value(&self, view: &PanelView<'_>, day: usize) -> f64 {
        match *self {
            Feature::Target {
                lag,
                hour,
                component,
            } => view.target(day - lag, hour)[component],
            Feature::Exogenous {
                lag,
                hour,
                variable,
            } => view.exogenous(day - lag, hour)[variable],
            Feature::Dummy(i) => view.dummies(day)[i],
        }
    }
}

/// Ordered regressors of one (hour, response) equation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
}

impl FeatureSchema {
    /// Regressors of `variant` for `hour` and response component `response`
    /// when the target has `k` components and `exogenous` lists the used
    /// exogenous variables.
    pub fn new(
        variant: ModelVariant,
        hour: usize,
        response: usize,
        k: usize,
        exogenous: &[usize],
    ) -> Result<Self> {
        if hour >= HOURS || response >= k.max(1) {
            return Err(Error::Parameter(format!(
                "hour {hour} / component {response} out of range (K = {k})"
            )));
        }
        let mut f = Vec::new();
        let own = |lag, hour| Feature::Target {
            lag,
            hour,
            component: response,
        };
        match variant {
            ModelVariant::Naive => return Ok(Self { features: f }),
            ModelVariant::Arx => f.extend(TARGET_LAGS.iter().map(|&l| own(l, hour))),
            ModelVariant::Farx | ModelVariant::Lear => {
                for &l in &TARGET_LAGS {
                    f.extend((0..HOURS).map(|j| own(l, j)));
                }
            }
            ModelVariant::Varx => {
                for &l in &TARGET_LAGS {
                    f.extend((0..k).map(|c| Feature::Target {
                        lag: l,
                        hour,
                        component: c,
                    }));
                }
            }
            ModelVariant::Fvarx => {
                for &l in &TARGET_LAGS {
                    f.extend((0..HOURS).filter(|&j| j != hour).map(|j| own(l, j)));
                    f.extend((0..k).map(|c| Feature::Target {
                        lag: l,
                        hour,
                        component: c,
                    }));
                }
            }
        }
        let exog_hours: Vec<usize> = if variant == ModelVariant::Lear {
            (0..HOURS).collect()
        } else {
            vec![hour]
        };
        for &l in &EXOGENOUS_LAGS {
            for &v in exogenous {
                f.extend(exog_hours.iter().map(|&j| Feature::Exogenous {
                    lag: l,
                    hour: j,
                    variable: v,
                }));
            }
        }
        f.extend((0..CalendarDummies::COUNT).map(Feature::Dummy));
        Ok(Self { features: f })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(Feature::name).collect()
    }

    /// Regressor values for the observation on `day`.
    pub fn row(&self, view: &PanelView<'_>, day: usize) -> Result<Vec<f64>> {
        if day < MAX_LAG || day >= view.panel().len() {
            return Err(Error::Horizon(format!(
                "day index {day} needs {MAX_LAG} days of history inside a panel of {} days",
                view.panel().len()
            )));
        }
        let row: Vec<f64> = self.features.iter().map(|f| f.value(view, day)).collect();
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "regressor {} is missing on day {}",
                self.features[i].name(),
                view.panel().days()[day]
            )));
        }
        Ok(row)
    }

    /// Design matrix with one row per day of `days`.
    pub fn design(&self, view: &PanelView<'_>, days: Range<usize>) -> Result<DesignMatrix> {
        let n = days.len();
        let mut x = DMatrix::zeros(n, self.len());
        for (i, d) in days.enumerate() {
            for (j, v) in self.row(view, d)?.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        DesignMatrix::new(self.names(), x)
    }
}

/// Design matrix of `variant` for `hour`, response `response`, over `days`.
pub fn build_features(
    variant: ModelVariant,
    hour: usize,
    response: usize,
    exogenous: &[usize],
    view: &PanelView<'_>,
    days: Range<usize>,
) -> Result<DesignMatrix> {
    let k = view.panel().target_dim();
    FeatureSchema::new(variant, hour, response, k, exogenous)?.design(view, days)
}
