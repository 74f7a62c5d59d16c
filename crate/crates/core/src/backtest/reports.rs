//! Report tables and plot series computed from a forecast store.
//!
//! `write_reports` produces:
//!
//! - `metrics.csv`: point accuracy per model (MAE, RMSE, rMAE against Naive)
//! - `metrics_hourly.csv`: MAE and RMSE per model and hour
//! - `r2.csv`: average squared correlation of curve forecasts per side
//! - `crps.csv`: mean CRPS per model and calibration window
//! - `pit.csv`: chi-square uniformity test of the PIT values (20 bins)
//! - `dm_mae.csv`, `dm_crps.csv`: Diebold-Mariano p-values on daily losses;
//!   the entry in row `a`, column `b` tests whether `a` is more accurate

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};

use super::config::ModelSpec;
use super::store::{read_points, read_r2, read_scores, PointRow, R2Row, ScoreRow};
use crate::error::{Error, Result};
use crate::evaluation::{chi_square_uniform, dm_test, histogram, point_metrics};
use crate::models::HOURS;

pub const PIT_BINS: usize = 20;

/// Report files written by [`write_reports`].
pub const REPORT_FILES: [&str; 7] = [
    "metrics.csv",
    "metrics_hourly.csv",
    "r2.csv",
    "crps.csv",
    "pit.csv",
    "dm_mae.csv",
    "dm_crps.csv",
];

/// Plot series written by [`write_plot_data`].
pub const PLOT_FILES: [&str; 5] = [
    "daily_mae.csv",
    "hourly_mae.csv",
    "hourly_crps.csv",
    "r2_function.csv",
    "pit_histogram.csv",
];

type Series = BTreeMap<DateTime<Utc>, (f64, f64)>;

/// Display order: the canonical model list first, anything else by name.
fn order_key(name: &str) -> (usize, String) {
    let all: Vec<String> = ModelSpec::all().iter().map(ModelSpec::name).collect();
    match all.iter().position(|m| m == name) {
        Some(i) => (i, String::new()),
        None => (all.len(), name.to_string()),
    }
}

fn sorted_models<'a>(names: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut v: Vec<String> = names
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    v.sort_by_key(|n| order_key(n));
    v
}

fn group_points(rows: Vec<PointRow>) -> BTreeMap<String, Series> {
    let mut out: BTreeMap<String, Series> = BTreeMap::new();
    for r in rows {
        out.entry(r.model)
            .or_default()
            .insert(r.timestamp, (r.forecast, r.actual));
    }
    out
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Mean of `loss(forecast, actual)` per day, restricted to complete days.
fn daily_losses(series: &Series, loss: impl Fn(f64, f64) -> f64) -> BTreeMap<NaiveDate, f64> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for (ts, (f, a)) in series {
        let e = acc.entry(ts.date_naive()).or_default();
        e.0 += loss(*f, *a);
        e.1 += 1;
    }
    acc.into_iter()
        .filter(|(_, (_, n))| *n == HOURS)
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect()
}

/// DM p-value matrix on the days shared by each pair.
fn dm_matrix(
    models: &[String],
    losses: &BTreeMap<String, BTreeMap<NaiveDate, f64>>,
) -> Vec<Vec<String>> {
    models
        .iter()
        .map(|a| {
            let mut row = vec![a.clone()];
            for b in models {
                let cell = if a == b {
                    String::new()
                } else {
                    let (la, lb) = (&losses[a], &losses[b]);
                    let days: Vec<&NaiveDate> = la.keys().filter(|d| lb.contains_key(*d)).collect();
                    let x: Vec<f64> = days.iter().map(|d| la[*d]).collect();
                    let y: Vec<f64> = days.iter().map(|d| lb[*d]).collect();
                    dm_test(&x, &y).map_or(String::new(), |r| fmt(r.p_first_better))
                };
                row.push(cell);
            }
            row
        })
        .collect()
}

fn dm_header(models: &[String]) -> Vec<&str> {
    let mut h = vec!["model"];
    h.extend(models.iter().map(String::as_str));
    h
}

/// Trapezoidal weights of an increasing abscissa.
fn trapezoid(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Average `R^2` per (model, side) over the grid points where it is defined.
pub fn r2_averages(rows: &[R2Row]) -> BTreeMap<(String, String), f64> {
    let mut grouped: BTreeMap<(String, String), Vec<&R2Row>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.model.clone(), r.side.clone()))
            .or_default()
            .push(r);
    }
    grouped
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(|a, b| a.price.total_cmp(&b.price));
            let x: Vec<f64> = v.iter().map(|r| r.price).collect();
            let w = trapezoid(&x);
            let (mut num, mut den) = (0.0, 0.0);
            for (r, w) in v.iter().zip(&w) {
                if let Some(r2) = r.r2 {
                    num += w * r2;
                    den += w;
                }
            }
            (k, if den > 0.0 { num / den } else { f64::NAN })
        })
        .collect()
}

fn score_groups(rows: &[ScoreRow]) -> BTreeMap<(String, String), Vec<&ScoreRow>> {
    let mut out: BTreeMap<(String, String), Vec<&ScoreRow>> = BTreeMap::new();
    for r in rows {
        out.entry((r.model.clone(), r.window.clone()))
            .or_default()
            .push(r);
    }
    out
}

fn window_key(w: &str) -> (usize, usize) {
    w.parse().map_or((1, 0), |n| (0, n))
}

/// Writes the report tables for the store at `store` into `out`.
pub fn write_reports(store: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let points = group_points(read_points(store)?);
    let models = sorted_models(points.keys());

    let mut metrics = Vec::new();
    let mut hourly = Vec::new();
    if let Some(naive) = points.get("Naive") {
        for m in &models {
            let s = &points[m];
            let shared: Vec<&DateTime<Utc>> = s.keys().filter(|t| naive.contains_key(*t)).collect();
            if shared.is_empty() {
                continue;
            }
            let p: Vec<f64> = shared.iter().map(|t| s[*t].0).collect();
            let a: Vec<f64> = shared.iter().map(|t| s[*t].1).collect();
            let n: Vec<f64> = shared.iter().map(|t| naive[*t].0).collect();
            match point_metrics(&p, &a, &n) {
                Ok(r) => {
                    metrics.push(vec![
                        m.clone(),
                        r.n.to_string(),
                        fmt(r.mae),
                        fmt(r.rmse),
                        fmt(r.rmae),
                    ]);
                    for h in &r.per_hour {
                        hourly.push(vec![m.clone(), h.hour.to_string(), fmt(h.mae), fmt(h.rmse)]);
                    }
                }
                Err(e) => log::warn!("no point metrics for {m}: {e}"),
            }
        }
    } else if !points.is_empty() {
        log::warn!("the store has no Naive forecasts; relative metrics are skipped");
    }
    write_csv(
        &out.join("metrics.csv"),
        &["model", "n", "mae", "rmse", "rmae"],
        &metrics,
    )?;
    write_csv(
        &out.join("metrics_hourly.csv"),
        &["model", "hour", "mae", "rmse"],
        &hourly,
    )?;

    let r2 = r2_averages(&read_r2(store)?);
    let r2_models = sorted_models(r2.keys().map(|k| &k.0));
    let r2_rows: Vec<Vec<String>> = r2_models
        .iter()
        .map(|m| {
            let get = |side: &str| {
                r2.get(&(m.clone(), side.to_string()))
                    .map_or(String::new(), |v| fmt(*v))
            };
            vec![m.clone(), get("supply"), get("demand")]
        })
        .collect();
    write_csv(
        &out.join("r2.csv"),
        &["model", "r2_supply", "r2_demand"],
        &r2_rows,
    )?;

    let scores = read_scores(store)?;
    let groups = score_groups(&scores);
    let mut keys: Vec<&(String, String)> = groups.keys().collect();
    keys.sort_by_key(|(m, w)| (order_key(m), window_key(w)));
    let mut crps_rows = Vec::new();
    let mut pit_rows = Vec::new();
    for k in keys {
        let v = &groups[k];
        let mean = v.iter().map(|r| r.crps).sum::<f64>() / v.len() as f64;
        crps_rows.push(vec![
            k.0.clone(),
            k.1.clone(),
            v.len().to_string(),
            fmt(mean),
        ]);
        let pits: Vec<f64> = v.iter().map(|r| r.pit).collect();
        let (stat, p) = chi_square_uniform(&pits, PIT_BINS)?;
        pit_rows.push(vec![
            k.0.clone(),
            k.1.clone(),
            v.len().to_string(),
            fmt(stat),
            fmt(p),
        ]);
    }
    write_csv(
        &out.join("crps.csv"),
        &["model", "window", "n", "crps"],
        &crps_rows,
    )?;
    write_csv(
        &out.join("pit.csv"),
        &["model", "window", "n", "chi2", "p_value"],
        &pit_rows,
    )?;

    let mae_losses: BTreeMap<String, BTreeMap<NaiveDate, f64>> = points
        .iter()
        .map(|(m, s)| (m.clone(), daily_losses(s, |f, a| (f - a).abs())))
        .collect();
    write_csv(
        &out.join("dm_mae.csv"),
        &dm_header(&models),
        &dm_matrix(&models, &mae_losses),
    )?;

    let ensemble: BTreeMap<String, Series> = groups
        .iter()
        .filter(|((_, w), _)| w == "ensemble")
        .map(|((m, _), v)| {
            (
                m.clone(),
                v.iter().map(|r| (r.timestamp, (r.crps, 0.0))).collect(),
            )
        })
        .collect();
    let prob_models = sorted_models(ensemble.keys());
    let crps_losses: BTreeMap<String, BTreeMap<NaiveDate, f64>> = ensemble
        .iter()
        .map(|(m, s)| (m.clone(), daily_losses(s, |c, _| c)))
        .collect();
    write_csv(
        &out.join("dm_crps.csv"),
        &dm_header(&prob_models),
        &dm_matrix(&prob_models, &crps_losses),
    )?;
    Ok(())
}

/// Writes per-day and per-hour series for plotting into `out`.
pub fn write_plot_data(store: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let points = group_points(read_points(store)?);
    let models = sorted_models(points.keys());

    let mut daily = Vec::new();
    let mut hourly = Vec::new();
    for m in &models {
        let s = &points[m];
        for (d, v) in daily_losses(s, |f, a| (f - a).abs()) {
            daily.push(vec![d.to_string(), m.clone(), fmt(v)]);
        }
        let mut acc = [(0.0, 0usize); HOURS];
        for (ts, (f, a)) in s {
            let h = ts
                .format("%H")
                .to_string()
                .parse::<usize>()
                .expect("two-digit hour");
            acc[h].0 += (f - a).abs();
            acc[h].1 += 1;
        }
        for (h, (sum, n)) in acc.iter().enumerate().filter(|(_, (_, n))| *n > 0) {
            hourly.push(vec![m.clone(), h.to_string(), fmt(sum / *n as f64)]);
        }
    }
    daily.sort_by(|a, b| {
        a[0].cmp(&b[0])
            .then(order_key(&a[1]).cmp(&order_key(&b[1])))
    });
    write_csv(
        &out.join("daily_mae.csv"),
        &["date", "model", "mae"],
        &daily,
    )?;
    write_csv(
        &out.join("hourly_mae.csv"),
        &["model", "hour", "mae"],
        &hourly,
    )?;

    let scores = read_scores(store)?;
    let groups = score_groups(&scores);
    let prob_models = sorted_models(groups.keys().map(|k| &k.0));
    let mut crps_hourly = Vec::new();
    let mut pit_hist = Vec::new();
    for m in &prob_models {
        let Some(v) = groups.get(&(m.clone(), "ensemble".to_string())) else {
            continue;
        };
        let mut acc = [(0.0, 0usize); HOURS];
        for r in v {
            let h = r
                .timestamp
                .format("%H")
                .to_string()
                .parse::<usize>()
                .expect("two-digit hour");
            acc[h].0 += r.crps;
            acc[h].1 += 1;
        }
        for (h, (sum, n)) in acc.iter().enumerate().filter(|(_, (_, n))| *n > 0) {
            crps_hourly.push(vec![m.clone(), h.to_string(), fmt(sum / *n as f64)]);
        }
        let pits: Vec<f64> = v.iter().map(|r| r.pit).collect();
        for (b, c) in histogram(&pits, PIT_BINS).iter().enumerate() {
            pit_hist.push(vec![m.clone(), b.to_string(), c.to_string()]);
        }
    }
    write_csv(
        &out.join("hourly_crps.csv"),
        &["model", "hour", "crps"],
        &crps_hourly,
    )?;
    write_csv(
        &out.join("pit_histogram.csv"),
        &["model", "bin", "count"],
        &pit_hist,
    )?;

    let r2 = read_r2(store)?;
    let rows: Vec<Vec<String>> = r2
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.side.clone(),
                fmt(r.price),
                r.r2.map_or(String::new(), fmt),
            ]
        })
        .collect();
    write_csv(
        &out.join("r2_function.csv"),
        &["model", "side", "price", "r2"],
        &rows,
    )?;
    Ok(())
}

/// Parsed `metrics.csv` rows: model to (MAE, RMSE, rMAE).
pub fn read_metrics(reports: &Path) -> Result<BTreeMap<String, (f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(reports.join("metrics.csv"))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Input(format!("metrics.csv: invalid number '{}'", &rec[i])))
        };
        out.insert(rec[0].to_string(), (num(2)?, num(3)?, num(4)?));
    }
    Ok(out)
}

/// Parsed `r2.csv` rows: model to (supply, demand) averages.
pub fn read_r2_table(reports: &Path) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut r = csv::Reader::from_path(reports.join("r2.csv"))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse().unwrap_or(f64::NAN);
        out.insert(rec[0].to_string(), (num(1), num(2)));
    }
    Ok(out)
}
