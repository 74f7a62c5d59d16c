//! Daily recalibration loop: representations, model zoo, forecast store and
//! the probabilistic pipeline.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{
    ComponentMode, DataSource, ExperimentConfig, FailurePolicy, ModelSpec, Representation,
};
use super::dataset::Dataset;
use super::reports;
use super::store::{ForecastStore, PointRow, QuantileRow, R2Row, ScoreRow};
use crate::curves::clear_on_grid;
use crate::error::{Error, Result};
use crate::evaluation::{crps, pit, R2Accumulator};
use crate::market_data::{
    attach_coupling, generate_synthetic_market, parse_coupling, parse_exogenous, parse_order_book,
    ExogenousRecord, Side, SyntheticConfig,
};
use crate::models::{
    fit_day_ahead, naive_source_day, HolidayCalendar, ModelVariant, Panel, TargetKind, HOURS,
    MAX_LAG,
};
use crate::probabilistic::{
    ensemble_vertical_average, postprocess_point_forecasts, simulate_price_distribution,
    EmpiricalPriceDistribution, ErrorModel, PostprocessMethod, SimulationOptions,
};
use crate::representation::{
    fit_fpca, fit_zst, isotonic_decreasing, isotonic_increasing, BasisPair, ComponentSelection,
    CurveBasis,
};
use crate::seeding::derive_seed;
use crate::smoothing::EvaluationGrid;

const EXOGENOUS: [usize; ExogenousRecord::COUNT] = [0, 1, 2, 3];
/// Load and renewable forecasts, which keep LEAR below 250 columns.
const LEAR_EXOGENOUS: [usize; 2] = [0, 3];

/// Forecast of one model for the 24 hours of a day.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelForecast {
    pub model: ModelSpec,
    pub prices: Vec<f64>,
    /// `scores[h]` in the day's basis (curve models only).
    pub scores: Option<Vec<Vec<f64>>>,
    /// Monotone supply and demand forecasts on the grid, per hour.
    pub curves: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    /// The model failed and the naive forecast took its place.
    pub substituted: bool,
}

#[derive(Debug, Clone)]
pub struct DayForecast {
    pub date: NaiveDate,
    /// Dataset index of the forecast day.
    pub day: usize,
    pub bases: BTreeMap<Representation, Arc<BasisPair>>,
    /// In the order of the configured models.
    pub forecasts: Vec<ModelForecast>,
    /// Feature reads beyond the information set of the forecast day.
    pub violations: usize,
}

impl DayForecast {
    pub fn get(&self, model: ModelSpec) -> Option<&ModelForecast> {
        self.forecasts.iter().find(|f| f.model == model)
    }
}

/// Deterministic fingerprint of a basis pair.
pub fn basis_fingerprint(pair: &BasisPair) -> String {
    let mut bits = Vec::new();
    for b in [&pair.supply, &pair.demand] {
        match b {
            CurveBasis::Fpca(f) => {
                bits.extend(f.mean.iter().map(|v| v.to_bits()));
                bits.extend(f.components.iter().flatten().map(|v| v.to_bits()));
            }
            CurveBasis::Zst(z) => {
                bits.extend(z.mean_curve.iter().map(|v| v.to_bits()));
                bits.extend(z.price_grid.iter().map(|v| v.to_bits()));
            }
        }
    }
    format!("{:016x}", derive_seed(bits.len() as u64, &bits))
}

/// Fits FPCA bases on the `window` days before dataset day `day`.
pub fn fit_fpca_pair(
    ds: &Dataset,
    day: usize,
    window: usize,
    mode: ComponentMode,
) -> Result<BasisPair> {
    let selection = match mode {
        ComponentMode::Auto => ComponentSelection::Auto,
        ComponentMode::Fixed(k) => ComponentSelection::Fixed(k),
    };
    let train = day - window..day;
    let s = fit_fpca(
        Side::Supply,
        ds.grid(),
        ds.curves(Side::Supply, train.clone()),
        selection,
    )?;
    let d = fit_fpca(
        Side::Demand,
        ds.grid(),
        ds.curves(Side::Demand, train),
        selection,
    )?;
    BasisPair::new(CurveBasis::Fpca(s), CurveBasis::Fpca(d))
}

/// Fits ZST bases with the given dimensions on the `window` days before `day`.
pub fn fit_zst_pair(
    ds: &Dataset,
    day: usize,
    window: usize,
    dims: (usize, usize),
) -> Result<BasisPair> {
    let train = day - window..day;
    let s = fit_zst(
        Side::Supply,
        ds.grid(),
        ds.curves(Side::Supply, train.clone()),
        dims.0,
    )?;
    let d = fit_zst(
        Side::Demand,
        ds.grid(),
        ds.curves(Side::Demand, train),
        dims.1,
    )?;
    BasisPair::new(CurveBasis::Zst(s), CurveBasis::Zst(d))
}

fn panel_exogenous(ds: &Dataset, days: &Range<usize>) -> Vec<f64> {
    days.clone()
        .flat_map(|d| (0..HOURS).flat_map(move |h| ds.exogenous(d, h).to_vec()))
        .collect()
}

/// Panel of joint scores of `days`; the last day's targets are unknown.
fn score_panel(ds: &Dataset, days: &Range<usize>, bases: &BasisPair) -> Result<Panel> {
    let k = bases.dim();
    let known = days.start..days.end - 1;
    let rows: Vec<Vec<f64>> = known
        .into_par_iter()
        .map(|d| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(HOURS * k);
            for h in 0..HOURS {
                v.extend(
                    bases.project(ds.curve(Side::Supply, d, h), ds.curve(Side::Demand, d, h))?,
                );
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut targets: Vec<f64> = rows.into_iter().flatten().collect();
    targets.extend(std::iter::repeat_n(f64::NAN, HOURS * k));
    Panel::new(
        ds.days()[days.clone()].to_vec(),
        k,
        EXOGENOUS.len(),
        targets,
        panel_exogenous(ds, days),
        ds.calendar(),
    )
}

fn price_panel(ds: &Dataset, days: &Range<usize>) -> Result<Panel> {
    let mut targets: Vec<f64> = (days.start..days.end - 1)
        .flat_map(|d| (0..HOURS).map(move |h| ds.price(d, h)))
        .collect();
    targets.extend(std::iter::repeat_n(f64::NAN, HOURS));
    Panel::new(
        ds.days()[days.clone()].to_vec(),
        1,
        EXOGENOUS.len(),
        targets,
        panel_exogenous(ds, days),
        ds.calendar(),
    )
}

fn monotone(side: Side, values: &[f64]) -> Vec<f64> {
    match side {
        Side::Supply => isotonic_increasing(values),
        Side::Demand => isotonic_decreasing(values),
    }
}

type CurvePair = (Vec<f64>, Vec<f64>);

/// Clears monotone versions of the reconstructed curves of every hour.
fn curves_and_prices(
    grid: &EvaluationGrid,
    bases: &BasisPair,
    scores: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<CurvePair>)> {
    let mut prices = Vec::with_capacity(HOURS);
    let mut curves = Vec::with_capacity(HOURS);
    for y in scores {
        let (s, d) = bases.reconstruct(y)?;
        let s = monotone(Side::Supply, &s);
        let d = monotone(Side::Demand, &d);
        prices.push(clear_on_grid(grid.prices(), &s, &d)?.price);
        curves.push((s, d));
    }
    Ok((prices, curves))
}

/// Fits every configured model on the window ending the day before dataset
/// day `day` and forecasts that day.
///
/// `fpca` is the day's FPCA basis pair when already fitted; ZST bases use
/// `zst_dims`. Representations are refitted from the window's curves.
pub fn recalibrate_and_forecast_day(
    ds: &Dataset,
    day: usize,
    config: &ExperimentConfig,
    fpca: Option<Arc<BasisPair>>,
    zst_dims: (usize, usize),
) -> Result<DayForecast> {
    let date = ds.days()[day];
    let w = config.window;
    let days = ds.window(date, w + MAX_LAG)?;
    debug_assert_eq!(days.end, day + 1);
    let cutoff = w + MAX_LAG;
    let train = MAX_LAG..cutoff;
    debug_assert_eq!(train.len(), w);

    let mut bases = BTreeMap::new();
    let reprs: Vec<Representation> = {
        let mut r: Vec<_> = config
            .models
            .iter()
            .filter_map(ModelSpec::representation)
            .collect();
        r.sort();
        r.dedup();
        r
    };
    for r in &reprs {
        let pair = match r {
            Representation::Fpca => match &fpca {
                Some(p) => p.clone(),
                None => Arc::new(fit_fpca_pair(ds, day, w, config.components)?),
            },
            Representation::Zst => Arc::new(fit_zst_pair(ds, day, w, zst_dims)?),
        };
        bases.insert(*r, pair);
    }
    let panels: BTreeMap<Representation, Panel> = bases
        .iter()
        .map(|(r, b)| Ok((*r, score_panel(ds, &days, b)?)))
        .collect::<Result<_>>()?;
    let prices = price_panel(ds, &days)?;
    let price_view = prices.view(cutoff);
    let score_views: BTreeMap<Representation, _> =
        panels.iter().map(|(r, p)| (*r, p.view(cutoff))).collect();

    let src = days.start + naive_source_day(&price_view, cutoff);
    let naive = ModelForecast {
        model: ModelSpec::Naive,
        prices: (0..HOURS).map(|h| ds.price(src, h)).collect(),
        scores: None,
        curves: Some(
            (0..HOURS)
                .map(|h| {
                    (
                        monotone(Side::Supply, ds.curve(Side::Supply, src, h)),
                        monotone(Side::Demand, ds.curve(Side::Demand, src, h)),
                    )
                })
                .collect(),
        ),
        substituted: false,
    };

    let outcomes: Vec<Result<ModelForecast>> = config
        .models
        .par_iter()
        .map(|m| match *m {
            ModelSpec::Naive => Ok(naive.clone()),
            ModelSpec::Curve(r, variant) => {
                let view = &score_views[&r];
                let b = &bases[&r];
                let fitted =
                    fit_day_ahead(variant, TargetKind::Scores, view, train.clone(), &EXOGENOUS)?;
                let scores = fitted.predict_day(view, cutoff)?;
                let (p, curves) = curves_and_prices(ds.grid(), b, &scores)?;
                Ok(ModelForecast {
                    model: *m,
                    prices: p,
                    scores: Some(scores),
                    curves: Some(curves),
                    substituted: false,
                })
            }
            ModelSpec::Price(variant) => {
                let exogenous: &[usize] = if variant == ModelVariant::Lear {
                    &LEAR_EXOGENOUS
                } else {
                    &EXOGENOUS
                };
                let fitted = fit_day_ahead(
                    variant,
                    TargetKind::Price,
                    &price_view,
                    train.clone(),
                    exogenous,
                )?;
                let p = fitted.predict_day(&price_view, cutoff)?;
                Ok(ModelForecast {
                    model: *m,
                    prices: p.into_iter().map(|v| v[0]).collect(),
                    scores: None,
                    curves: None,
                    substituted: false,
                })
            }
        })
        .collect();

    let mut forecasts = Vec::with_capacity(outcomes.len());
    for (m, outcome) in config.models.iter().zip(outcomes) {
        match outcome {
            Ok(f) => forecasts.push(f),
            Err(e) if config.on_failure == FailurePolicy::Naive => {
                log::warn!("{date}: {m} failed ({e}); substituting the naive forecast");
                forecasts.push(substitute(ds, &naive, *m, &bases, src)?);
            }
            Err(e) => {
                log::error!("{date}: {m} failed");
                return Err(Error::Day {
                    day: date,
                    source: Box::new(e),
                });
            }
        }
    }
    let violations =
        price_view.violations() + score_views.values().map(|v| v.violations()).sum::<usize>();
    Ok(DayForecast {
        date,
        day,
        bases,
        forecasts,
        violations,
    })
}

fn substitute(
    ds: &Dataset,
    naive: &ModelForecast,
    model: ModelSpec,
    bases: &BTreeMap<Representation, Arc<BasisPair>>,
    src: usize,
) -> Result<ModelForecast> {
    let scores = match model.representation() {
        Some(r) => Some(
            (0..HOURS)
                .map(|h| {
                    bases[&r].project(
                        ds.curve(Side::Supply, src, h),
                        ds.curve(Side::Demand, src, h),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(ModelForecast {
        model,
        scores,
        curves: if model.is_curve() {
            naive.curves.clone()
        } else {
            None
        },
        substituted: true,
        prices: naive.prices.clone(),
    })
}

/// Run-level facts written next to the reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub first_day: Option<NaiveDate>,
    pub last_day: Option<NaiveDate>,
    pub forecast_days: usize,
    pub skipped_days: Vec<NaiveDate>,
    pub window: usize,
    pub shortened_window: bool,
    pub models: Vec<String>,
    pub bandwidth_supply: f64,
    pub bandwidth_demand: f64,
    pub k_supply_max: usize,
    pub k_demand_max: usize,
    pub leakage_violations: usize,
    pub substitutions: usize,
    pub probabilistic_days: usize,
    pub redrawn_simulations: usize,
}

/// Loads the configured data source (curves not yet smoothed).
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let grid = EvaluationGrid::uniform(config.grid_min, config.grid_max, config.grid_points)?;
    let (snapshots, exogenous) = match &config.data {
        DataSource::Files {
            orders,
            exogenous,
            coupling,
        } => {
            let mut snaps = parse_order_book(orders)?;
            if let Some(c) = coupling {
                attach_coupling(&mut snaps, &parse_coupling(c)?)?;
            }
            (snaps, parse_exogenous(exogenous)?)
        }
        DataSource::Synthetic { seed, days, start } => {
            let m = generate_synthetic_market(
                *seed,
                *days,
                &SyntheticConfig {
                    start: *start,
                    ..SyntheticConfig::default()
                },
            )?;
            log::debug!("generated {days} synthetic days");
            (m.snapshots, m.exogenous)
        }
    };
    let calendar = match &config.holidays {
        Some(p) => HolidayCalendar::from_file(p)?,
        None => {
            let first = snapshots
                .iter()
                .map(|s| s.timestamp.year())
                .min()
                .unwrap_or(2023);
            let last = snapshots
                .iter()
                .map(|s| s.timestamp.year())
                .max()
                .unwrap_or(2024);
            HolidayCalendar::italian(first, last)
        }
    };
    let ds = Dataset::from_market(&snapshots, &exogenous, grid, calendar)?;
    log::info!("loaded {} days", ds.len());
    Ok(ds)
}

/// Test days implied by the configuration and the data.
pub fn test_period(config: &ExperimentConfig, ds: &Dataset) -> Result<(NaiveDate, NaiveDate)> {
    let first = *ds
        .days()
        .first()
        .ok_or_else(|| Error::Input("empty dataset".into()))?;
    let last = *ds.days().last().expect("non-empty");
    let earliest = first + Duration::days((config.window + MAX_LAG) as i64);
    let start = config.test_start.unwrap_or(earliest);
    let end = config.test_end.unwrap_or(last);
    if start < earliest {
        return Err(Error::Config(format!(
            "test_start {start} leaves less than window + {MAX_LAG} = {} days of history (earliest {earliest})",
            config.window + MAX_LAG
        )));
    }
    if end > last || start > end {
        return Err(Error::Config(format!(
            "test period {start}..{end} is outside the data ({first}..{last})"
        )));
    }
    Ok((start, end))
}

struct Stored {
    day: usize,
    scores: Vec<Vec<f64>>,
    bases: Arc<BasisPair>,
}

struct PriceHistory {
    forecasts: Vec<f64>,
    actuals: Vec<f64>,
}

fn model_code(m: &ModelSpec) -> u64 {
    ModelSpec::all()
        .iter()
        .position(|x| x == m)
        .unwrap_or(usize::MAX) as u64
}

/// Runs the whole experiment and writes `store/`, `reports/` and
/// `summary.json` under the output directory.
pub fn run_backtest(config: &ExperimentConfig) -> Result<BacktestSummary> {
    config.validate()?;
    let ds = load_dataset(config)?;
    run_on_dataset(config, ds)
}

/// [`run_backtest`] on an already loaded (unsmoothed) dataset.
pub fn run_on_dataset(config: &ExperimentConfig, mut ds: Dataset) -> Result<BacktestSummary> {
    config.validate()?;
    let (start, end) = test_period(config, &ds)?;
    let w = config.window;
    let bandwidths = match config.bandwidth {
        Some(h) => (h, h),
        None => {
            let before = ds.days().partition_point(|d| *d < start);
            ds.select_bandwidths(before - 1)?
        }
    };
    log::info!(
        "smoothing bandwidths: supply {:.3}, demand {:.3}",
        bandwidths.0,
        bandwidths.1
    );
    ds.smooth(bandwidths)?;

    let mut test_days = Vec::new();
    let mut d = start;
    while d <= end {
        test_days.push(d);
        d += Duration::days(1);
    }

    let wants_fpca = config
        .models
        .iter()
        .any(|m| m.representation() == Some(Representation::Fpca));
    let wants_zst = config
        .models
        .iter()
        .any(|m| m.representation() == Some(Representation::Zst));
    // first pass: daily FPCA to fix the ZST dimensions
    let fpca: Vec<Option<Arc<BasisPair>>> =
        if wants_fpca || (wants_zst && config.components == ComponentMode::Auto) {
            log::info!("first pass: FPCA on {} days", test_days.len());
            test_days
                .par_iter()
                .map(|date| match ds.window(*date, w) {
                    Ok(r) => fit_fpca_pair(&ds, r.end - 1, w, config.components)
                        .map(|p| Some(Arc::new(p))),
                    Err(_) => Ok(None),
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; test_days.len()]
        };
    let zst_dims = match config.components {
        ComponentMode::Fixed(k) => (k, k),
        ComponentMode::Auto => fpca.iter().flatten().fold((1, 1), |acc, p| {
            let (s, d) = p.dims();
            (acc.0.max(s), acc.1.max(d))
        }),
    };
    log::info!(
        "ZST dimensions: supply {}, demand {}",
        zst_dims.0,
        zst_dims.1
    );

    let mut store = ForecastStore::create(config.output.join("store"))?;
    let grid_len = ds.grid().len();
    let mut r2: BTreeMap<ModelSpec, [R2Accumulator; 2]> = config
        .models
        .iter()
        .filter(|m| m.is_curve() || **m == ModelSpec::Naive)
        .map(|m| {
            (
                *m,
                [R2Accumulator::new(grid_len), R2Accumulator::new(grid_len)],
            )
        })
        .collect();
    let bootstrap = if config.probabilistic {
        config.bootstrap_models()
    } else {
        Vec::new()
    };
    let post_model = config.postprocess_model.filter(|_| config.probabilistic);
    let warmup = config.probabilistic_warmup();
    let mut history: HashMap<ModelSpec, VecDeque<Stored>> = HashMap::new();
    let mut price_history: VecDeque<PriceHistory> = VecDeque::new();
    let mut stored_days = 0usize;

    let mut summary = BacktestSummary {
        first_day: None,
        last_day: None,
        forecast_days: 0,
        skipped_days: Vec::new(),
        window: w,
        shortened_window: config.shortened_window,
        models: config.models.iter().map(ModelSpec::name).collect(),
        bandwidth_supply: bandwidths.0,
        bandwidth_demand: bandwidths.1,
        k_supply_max: 0,
        k_demand_max: 0,
        leakage_violations: 0,
        substitutions: 0,
        probabilistic_days: 0,
        redrawn_simulations: 0,
    };

    for (i, date) in test_days.iter().enumerate() {
        let outcome = match ds.window(*date, w + MAX_LAG) {
            Ok(r) => {
                recalibrate_and_forecast_day(&ds, r.end - 1, config, fpca[i].clone(), zst_dims)
            }
            Err(e) => Err(e),
        };
        let day = match outcome {
            Ok(f) => f,
            Err(e) if config.on_failure == FailurePolicy::Naive => {
                log::warn!("{date}: skipped ({e})");
                summary.skipped_days.push(*date);
                continue;
            }
            Err(e) => {
                return Err(match e {
                    Error::Day { .. } => e,
                    other => Error::Day {
                        day: *date,
                        source: Box::new(other),
                    },
                })
            }
        };
        log::info!("{date}: forecasts for {} models", day.forecasts.len());
        summary.leakage_violations += day.violations;
        summary.substitutions += day.forecasts.iter().filter(|f| f.substituted).count();
        summary.first_day.get_or_insert(*date);
        summary.last_day = Some(*date);
        summary.forecast_days += 1;
        if let Some(b) = day.bases.get(&Representation::Fpca) {
            let (s, d) = b.dims();
            summary.k_supply_max = summary.k_supply_max.max(s);
            summary.k_demand_max = summary.k_demand_max.max(d);
            store.append_components(*date, s, d)?;
        }

        let ts = |h: usize| {
            date.and_hms_opt(h as u32, 0, 0)
                .expect("valid hour")
                .and_utc()
        };
        let mut rows = Vec::new();
        for f in &day.forecasts {
            let basis = f
                .model
                .representation()
                .map(|r| basis_fingerprint(&day.bases[&r]));
            for h in 0..HOURS {
                rows.push(PointRow {
                    timestamp: ts(h),
                    model: f.model.name(),
                    forecast: f.prices[h],
                    actual: ds.price(day.day, h),
                    substituted: f.substituted,
                    basis: basis.clone(),
                    scores: f.scores.as_ref().map(|s| s[h].clone()),
                });
            }
            if let (Some(curves), Some(acc)) = (&f.curves, r2.get_mut(&f.model)) {
                for (h, (s, d)) in curves.iter().enumerate() {
                    acc[0].push(s, ds.curve(Side::Supply, day.day, h))?;
                    acc[1].push(d, ds.curve(Side::Demand, day.day, h))?;
                }
            }
        }
        store.append_points(&rows)?;

        if config.probabilistic && stored_days >= warmup {
            let mut quantiles = Vec::new();
            let mut scores = Vec::new();
            let mut record =
                |model: String, dists: Vec<(String, Vec<EmpiricalPriceDistribution>)>| {
                    for (window, per_hour) in dists {
                        for (h, dist) in per_hour.into_iter().enumerate() {
                            let y = ds.price(day.day, h);
                            scores.push(ScoreRow {
                                timestamp: ts(h),
                                model: model.clone(),
                                window: window.clone(),
                                crps: crps(&dist, y),
                                pit: pit(&dist, y),
                            });
                            if window == "ensemble" {
                                quantiles.push(QuantileRow {
                                    timestamp: ts(h),
                                    model: model.clone(),
                                    distribution: dist,
                                });
                            }
                        }
                    }
                };
            for m in &bootstrap {
                let result = bootstrap_day(&ds, config, &day, *m, history.get(m));
                match result {
                    Ok((dists, redrawn)) => {
                        summary.redrawn_simulations += redrawn;
                        record(m.name(), dists);
                    }
                    Err(e) if config.on_failure == FailurePolicy::Naive => {
                        log::warn!("{date}: no bootstrap distribution for {m} ({e})");
                    }
                    Err(e) => {
                        return Err(Error::Day {
                            day: *date,
                            source: Box::new(e),
                        })
                    }
                }
            }
            if let Some(v) = post_model {
                let f = day.get(ModelSpec::Price(v)).expect("validated model");
                for method in PostprocessMethod::ALL {
                    match postprocess_day(config, &price_history, &f.prices, method) {
                        Ok(dists) => record(format!("{}-{}", v.name(), method.name()), dists),
                        Err(e) if config.on_failure == FailurePolicy::Naive => {
                            log::warn!("{date}: no {} distribution ({e})", method.name());
                        }
                        Err(e) => {
                            return Err(Error::Day {
                                day: *date,
                                source: Box::new(e),
                            })
                        }
                    }
                }
            }
            store.append_quantiles(&quantiles)?;
            store.append_scores(&scores)?;
            summary.probabilistic_days += 1;
        }

        // only now does today's forecast become history
        for m in &bootstrap {
            let f = day.get(*m).expect("validated model");
            let r = m.representation().expect("curve model");
            let h = history.entry(*m).or_default();
            h.push_back(Stored {
                day: day.day,
                scores: f.scores.clone().expect("curve model scores"),
                bases: day.bases[&r].clone(),
            });
            if h.len() > warmup {
                h.pop_front();
            }
        }
        if let Some(v) = post_model {
            let f = day.get(ModelSpec::Price(v)).expect("validated model");
            price_history.push_back(PriceHistory {
                forecasts: f.prices.clone(),
                actuals: (0..HOURS).map(|h| ds.price(day.day, h)).collect(),
            });
            if price_history.len() > warmup {
                price_history.pop_front();
            }
        }
        stored_days += 1;
    }

    let weights = ds.grid().trapezoid_weights();
    let mut r2_rows = Vec::new();
    for (m, acc) in &r2 {
        for (side, a) in [("supply", &acc[0]), ("demand", &acc[1])] {
            if a.count() < 2 {
                continue;
            }
            let s = a.finish(&weights)?;
            for (p, v) in ds.grid().prices().iter().zip(&s.r2) {
                r2_rows.push(R2Row {
                    model: m.name(),
                    side: side.into(),
                    price: *p,
                    r2: *v,
                });
            }
        }
    }
    store.write_r2(&r2_rows)?;

    let reports_dir = config.output.join("reports");
    reports::write_reports(store.root(), &reports_dir)?;
    write_summary(&config.output.join("summary.json"), &summary)?;
    if summary.leakage_violations > 0 {
        log::error!(
            "{} feature reads beyond the information set",
            summary.leakage_violations
        );
    }
    Ok(summary)
}

fn write_summary(path: &Path, summary: &BacktestSummary) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), summary)?;
    Ok(())
}

type WindowDistributions = Vec<(String, Vec<EmpiricalPriceDistribution>)>;

/// Bootstrap distributions of `model` for the forecast day, one set per
/// calibration window plus their ensemble.
fn bootstrap_day(
    ds: &Dataset,
    config: &ExperimentConfig,
    day: &DayForecast,
    model: ModelSpec,
    history: Option<&VecDeque<Stored>>,
) -> Result<(WindowDistributions, usize)> {
    let history = history.ok_or(Error::Window(0))?;
    let r = model.representation().expect("curve model");
    let today = &day.bases[&r];
    let forecast = day.get(model).expect("configured model");
    let scores = forecast.scores.as_ref().expect("curve model scores");
    // residuals of stored out-of-sample forecasts, re-expressed in today's basis
    let residuals: Vec<Vec<Vec<f64>>> = history
        .par_iter()
        .map(|s| {
            debug_assert!(s.day < day.day);
            (0..HOURS)
                .map(|h| {
                    let actual = today.project(
                        ds.curve(Side::Supply, s.day, h),
                        ds.curve(Side::Demand, s.day, h),
                    )?;
                    let (ps, pd) = s.bases.reconstruct(&s.scores[h])?;
                    let predicted = today.project(&ps, &pd)?;
                    Ok(actual.iter().zip(&predicted).map(|(a, p)| a - p).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut members: Vec<Vec<EmpiricalPriceDistribution>> = vec![Vec::new(); HOURS];
    let mut redrawn = 0;
    for &wc in &config.calibration_windows {
        if residuals.len() < wc {
            return Err(Error::Window(residuals.len()));
        }
        let em = ErrorModel::estimate(&residuals[residuals.len() - wc..])?;
        let mut per_hour = Vec::with_capacity(HOURS);
        for (h, y) in scores.iter().enumerate() {
            let seed = derive_seed(
                config.seed,
                &[
                    day.date.num_days_from_ce() as u64,
                    h as u64,
                    model_code(&model),
                    wc as u64,
                ],
            );
            let o = simulate_price_distribution(
                y,
                h,
                &em,
                today,
                SimulationOptions {
                    simulations: config.simulations,
                    seed,
                },
            )?;
            redrawn += o.discarded;
            members[h].push(o.distribution.clone());
            per_hour.push(o.distribution);
        }
        out.push((wc.to_string(), per_hour));
    }
    let ensemble = members
        .iter()
        .map(|m| ensemble_vertical_average(m))
        .collect::<Result<_>>()?;
    out.push(("ensemble".into(), ensemble));
    Ok((out, redrawn))
}

/// Postprocessed distributions of the point forecasts `prices`, one set per
/// calibration window plus their ensemble.
fn postprocess_day(
    config: &ExperimentConfig,
    history: &VecDeque<PriceHistory>,
    prices: &[f64],
    method: PostprocessMethod,
) -> Result<WindowDistributions> {
    let mut out = Vec::new();
    let mut members: Vec<Vec<EmpiricalPriceDistribution>> = vec![Vec::new(); HOURS];
    for &wc in &config.calibration_windows {
        if history.len() < wc {
            return Err(Error::Window(history.len()));
        }
        let recent: Vec<&PriceHistory> = history.iter().skip(history.len() - wc).collect();
        let per_hour: Vec<EmpiricalPriceDistribution> = (0..HOURS)
            .into_par_iter()
            .map(|h| {
                let f: Vec<f64> = recent.iter().map(|p| p.forecasts[h]).collect();
                let a: Vec<f64> = recent.iter().map(|p| p.actuals[h]).collect();
                postprocess_point_forecasts(method, &f, &a, prices[h])
            })
            .collect::<Result<_>>()?;
        for (h, d) in per_hour.iter().enumerate() {
            members[h].push(d.clone());
        }
        out.push((wc.to_string(), per_hour));
    }
    let ensemble = members
        .iter()
        .map(|m| ensemble_vertical_average(m))
        .collect::<Result<_>>()?;
    out.push(("ensemble".into(), ensemble));
    Ok(out)
}

/// Single-day forecast for `date` with the configuration's models: FPCA
/// dimensions are selected on the day's own window and reused for ZST.
pub fn forecast_single_day(config: &ExperimentConfig, date: NaiveDate) -> Result<DayForecast> {
    config.validate()?;
    let mut ds = load_dataset(config)?;
    let w = config.window;
    let day = ds
        .index_of(date)
        .ok_or_else(|| Error::Config(format!("{date} is not in the data")))?;
    if day < w + MAX_LAG {
        return Err(Error::Config(format!(
            "{date} has {day} days of history; forecasting needs window + {MAX_LAG} = {}",
            w + MAX_LAG
        )));
    }
    let bandwidths = match config.bandwidth {
        Some(h) => (h, h),
        None => {
            let r = ds.window(date, 1)?;
            ds.select_bandwidths(r.start)?
        }
    };
    ds.smooth(bandwidths)?;
    ds.window(date, w + MAX_LAG)?;
    let fpca = Arc::new(fit_fpca_pair(&ds, day, w, config.components)?);
    let dims = fpca.dims();
    recalibrate_and_forecast_day(&ds, day, config, Some(fpca), dims)
}

/// Per-variant name used for the postprocessed distributions.
pub fn postprocess_names(variant: ModelVariant) -> Vec<String> {
    PostprocessMethod::ALL
        .iter()
        .map(|m| format!("{}-{}", variant.name(), m.name()))
        .collect()
}
