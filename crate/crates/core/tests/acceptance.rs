//! Acceptance checks. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero when any criterion fails.
//!
//! `CURVECAST_FULL_SCALE=1` adds the full one-year ordering run and
//! `CURVECAST_REAL_DATA=<dir>` (with `orders.csv`, `exogenous.csv` and
//! optionally `coupling.csv`) runs the real-data harness.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use curvecast_core::backtest::reports::{read_metrics, read_r2_table};
use curvecast_core::backtest::store::read_scores;
use curvecast_core::backtest::{
    run_backtest, DataSource, ExperimentConfig, ModelSpec, Representation,
};
use curvecast_core::curves::build_quantity_curve;
use curvecast_core::evaluation::{chi_square_uniform, crps, pit};
use curvecast_core::market_data::{OrderRecord, Side};
use curvecast_core::models::{HolidayCalendar, Panel, HOURS};
use curvecast_core::probabilistic::{
    point_price, simulate_price_distribution, ErrorModel, SimulationOptions,
};
use curvecast_core::regression::fit_lasso_cd;
use curvecast_core::representation::{fit_fpca, isotonic_increasing, ComponentSelection};
use curvecast_core::{
    clear_market, BasisPair, CurveBasis, EmpiricalPriceDistribution, EvaluationGrid, ModelVariant,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const OLS_TOL: f64 = 1e-6;
const SOFT_THRESHOLD_TOL: f64 = 1e-10;
const REGRESSION_BUDGET_S: f64 = 10.0;
const PAVA_BUDGET_S: f64 = 60.0;
const FPCA_ROUND_TRIP_TOL: f64 = 1e-6;
const EIGEN_TOL: f64 = 1e-8;
const CLEARING_TOL: f64 = 0.01;
const CRPS_TOL: f64 = 1e-3;
const PIT_MIN_P: f64 = 0.01;
const PIT_SAMPLES: usize = 4000;
const VARX_MAE_SLACK: f64 = 0.02;
const REDUCED_BUDGET_S: f64 = 600.0;
const FULL_BUDGET_S: f64 = 7200.0;
const REAL_DATA_TOL: f64 = 0.10;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

impl Outcome {
    fn detail(&self) -> &str {
        match self {
            Outcome::Pass(d) | Outcome::Fail(d) | Outcome::Skip(d) => d,
        }
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// ---------------------------------------------------------------- regression

/// OLS with intercept via Householder QR of the centred design.
fn ols(x: &DMatrix<f64>, y: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let yc = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let qr = xc.qr();
    let qty = qr.q().transpose() * yc;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .expect("full column rank");
    let b: Vec<f64> = beta.iter().copied().collect();
    let b0 = ybar - b.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    (b0, b)
}

fn regression_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_ols = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(30..=100);
        let p = rng.random_range(1..=10);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (0..p).map(|j| (j as f64 - 2.0) * x[(i, j)]).sum::<f64>()
                    + 5.0
                    + rng.random_range(-1.0..1.0)
            })
            .collect();
        let fit = fit_lasso_cd(&x, &y, 0.0).unwrap();
        let (b0, b) = ols(&x, &y);
        worst_ols = worst_ols.max((fit.intercept - b0).abs());
        for (a, e) in fit.coefficients.iter().zip(&b) {
            worst_ols = worst_ols.max((a - e).abs());
        }
    }

    // centred columns with Z^T Z = n I and unit population variance
    let mut worst_soft = 0.0f64;
    for _ in 0..20 {
        let n = 64;
        let p = rng.random_range(2..=8);
        let raw = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let centred = DMatrix::from_fn(n, p, |i, j| raw[(i, j)] - raw.column(j).mean());
        let q = centred.qr().q();
        let z = q.columns(0, p) * (n as f64).sqrt();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0) + 1.5).collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let lambda = rng.random_range(0.0..0.3);
        let fit = fit_lasso_cd(&z.clone_owned(), &y, lambda).unwrap();
        for j in 0..p {
            let c: f64 = (0..n).map(|i| z[(i, j)] * (y[i] - ybar)).sum::<f64>() / n as f64;
            let expected = c.signum() * (c.abs() - lambda).max(0.0);
            worst_soft = worst_soft.max((fit.coefficients[j] - expected).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst_ols <= OLS_TOL && worst_soft <= SOFT_THRESHOLD_TOL && secs < REGRESSION_BUDGET_S,
        format!("max |OLS diff| {worst_ols:.1e}, max |soft-threshold diff| {worst_soft:.1e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------------- PAVA

/// Best non-decreasing fit among all contiguous block partitions with
/// block means.
fn exhaustive_isotonic(y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut last = f64::NEG_INFINITY;
        let mut ok = true;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let m = y[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                if m < last - 1e-12 {
                    ok = false;
                    break;
                }
                last = m;
                fit.extend(std::iter::repeat_n(m, i + 1 - start));
                start = i + 1;
            }
        }
        if ok {
            let sse: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
            if sse < best.0 {
                best = (sse, fit);
            }
        }
    }
    best
}

fn pava_oracle() -> Outcome {
    let t = Instant::now();
    let alphabet = [-2.0, -0.5, 0.0, 1.0, 3.5];
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut mean_err = 0.0f64;
    for n in 1..=8u32 {
        for code in 0..5usize.pow(n) {
            let mut c = code;
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    let v = alphabet[c % 5];
                    c /= 5;
                    v
                })
                .collect();
            let fit = isotonic_increasing(&y);
            let sse: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
            let (best, _) = exhaustive_isotonic(&y);
            if fit.windows(2).any(|w| w[1] < w[0]) {
                worst = f64::INFINITY;
            }
            worst = worst.max(sse - best);
            mean_err = mean_err.max((fit.iter().sum::<f64>() - y.iter().sum::<f64>()).abs());
            checked += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-9 && mean_err <= 1e-9 && secs < PAVA_BUDGET_S,
        format!("{checked} inputs, max excess SSE {worst:.1e}, max sum drift {mean_err:.1e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------------- FPCA

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix:
/// (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn fpca_round_trip() -> Outcome {
    let grid = EvaluationGrid::uniform(0.0, 300.0, 61).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let curves: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let a: Vec<f64> = (1..=6)
                .map(|k| rng.random_range(-1.0..1.0) * 40.0 / k as f64)
                .collect();
            grid.prices()
                .iter()
                .map(|p| {
                    let u = p / 300.0;
                    1000.0
                        + 20.0 * p
                        + a.iter()
                            .enumerate()
                            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * u).sin())
                            .sum::<f64>()
                        + rng.random_range(-0.5..0.5)
                })
                .collect()
        })
        .collect();
    let full = fit_fpca(Side::Supply, &grid, &curves, ComponentSelection::All).unwrap();
    let mut round_trip = 0.0f64;
    for c in &curves {
        let r = full.reconstruct(&full.project(c).unwrap()).unwrap();
        round_trip = round_trip.max(
            c.iter()
                .zip(&r)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }

    let w = grid.trapezoid_weights();
    let residual = |k: usize| -> f64 {
        let b = full.truncated(k).unwrap();
        curves
            .iter()
            .map(|c| {
                let r = b.reconstruct(&b.project(c).unwrap()).unwrap();
                c.iter()
                    .zip(&r)
                    .zip(&w)
                    .map(|((a, b), w)| w * (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    let residuals: Vec<f64> = (1..=full.dim()).map(residual).collect();
    let monotone = residuals
        .windows(2)
        .all(|r| r[1] <= r[0] * (1.0 + 1e-12) + 1e-9);

    // weighted covariance W^1/2 C W^1/2 solved independently
    let g = grid.len();
    let t = curves.len() as f64;
    let mean: Vec<f64> = (0..g)
        .map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / t)
        .collect();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let cov: Vec<Vec<f64>> = (0..g)
        .map(|i| {
            (0..g)
                .map(|j| {
                    curves
                        .iter()
                        .map(|c| (c[i] - mean[i]) * (c[j] - mean[j]))
                        .sum::<f64>()
                        / t
                        * sw[i]
                        * sw[j]
                })
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let top = 5;
    let mut eig_err = 0.0f64;
    for (rank, &i) in order.iter().take(top).enumerate() {
        eig_err = eig_err.max((vals[i] - full.spectrum[rank]).abs() / vals[order[0]]);
        let xi: Vec<f64> = (0..g).map(|j| vecs[j][i] / sw[j]).collect();
        let comp = &full.components[rank];
        let dot: f64 = xi
            .iter()
            .zip(comp)
            .zip(&w)
            .map(|((a, b), w)| a * b * w)
            .sum();
        let sign = dot.signum();
        let d = xi
            .iter()
            .zip(comp)
            .map(|(a, b)| (sign * a - b).abs())
            .fold(0.0, f64::max);
        eig_err = eig_err.max(d);
    }
    verdict(
        round_trip < FPCA_ROUND_TRIP_TOL && monotone && eig_err < EIGEN_TOL,
        format!(
            "round trip {round_trip:.1e}, residual monotone over {} ranks: {monotone}, eigen-pair diff {eig_err:.1e}",
            residuals.len()
        ),
    )
}

// ------------------------------------------------------------------ clearing

fn clearing_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ts = NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc();
    let mut pairs = 0;
    let mut worst = 0.0f64;
    while pairs < 200 {
        let order = |side, price: f64, quantity: f64| OrderRecord {
            timestamp: ts,
            side,
            price,
            quantity,
        };
        let mut supply = vec![order(Side::Supply, -500.0, rng.random_range(500.0..2000.0))];
        for _ in 0..rng.random_range(5..60) {
            supply.push(order(
                Side::Supply,
                rng.random_range(0.0..300.0),
                rng.random_range(10.0..400.0),
            ));
        }
        let mut demand = vec![order(
            Side::Demand,
            3000.0,
            rng.random_range(1000.0..4000.0),
        )];
        for _ in 0..rng.random_range(5..60) {
            demand.push(order(
                Side::Demand,
                rng.random_range(0.0..300.0),
                rng.random_range(10.0..300.0),
            ));
        }
        let s = build_quantity_curve(&supply, Side::Supply).unwrap();
        let d = build_quantity_curve(&demand, Side::Demand).unwrap();
        let Ok(cp) = clear_market(&s, &d) else {
            continue;
        };
        let total = |orders: &[OrderRecord], keep: &dyn Fn(f64) -> bool| -> f64 {
            orders
                .iter()
                .filter(|o| keep(o.price))
                .map(|o| o.quantity)
                .sum()
        };
        let scan = (0..=350_000)
            .map(|i| -500.0 + i as f64 * 0.01)
            .find(|&p| total(&demand, &|q| q >= p) - total(&supply, &|q| q <= p) <= 0.0);
        let Some(p) = scan else { continue };
        worst = worst.max((cp.price - p).abs());
        pairs += 1;
    }
    verdict(
        worst <= CLEARING_TOL + 1e-9,
        format!("{pairs} pairs, max |price diff| {worst:.4} EUR/MWh"),
    )
}

// ---------------------------------------------------------------------- CRPS

fn crps_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let mu = rng.random_range(20.0..200.0);
        let sigma = rng.random_range(0.5..30.0);
        let sample: Vec<f64> = (0..2000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if i % 2 == 0 {
                    mu + sigma * z
                } else {
                    mu + sigma * (0.3 * z).exp()
                }
            })
            .collect();
        let dist = EmpiricalPriceDistribution::from_sample(sample).unwrap();
        let y = mu + sigma * rng.random_range(-3.0..3.0);
        let q = dist.quantiles();
        let lo = q[0].min(y) - 1.0;
        let hi = q[98].max(y) + 1.0;
        let m = 100_000;
        let h = (hi - lo) / m as f64;
        let integral: f64 = (0..m)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * h;
                let ind = if x >= y { 1.0 } else { 0.0 };
                (dist.cdf(x) - ind).powi(2) * h
            })
            .sum();
        worst = worst.max((crps(&dist, y) - integral).abs());
    }
    verdict(
        worst <= CRPS_TOL,
        format!("50 pairs, max |pinball - quadrature| {worst:.1e}"),
    )
}

// ------------------------------------------------------------- probabilistic

/// Supply `1000 + c + 10p` and demand `5000 + e - 10p`, one component each.
fn linear_bases(grid: &EvaluationGrid) -> BasisPair {
    let shifts = [-50.0, -20.0, 0.0, 15.0, 55.0];
    let s: Vec<Vec<f64>> = shifts
        .iter()
        .map(|c| {
            grid.prices()
                .iter()
                .map(|p| 1000.0 + c + 10.0 * p)
                .collect()
        })
        .collect();
    let d: Vec<Vec<f64>> = shifts
        .iter()
        .map(|c| {
            grid.prices()
                .iter()
                .map(|p| 5000.0 - 2.0 * c - 10.0 * p)
                .collect()
        })
        .collect();
    let sb = fit_fpca(Side::Supply, grid, &s, ComponentSelection::Fixed(1)).unwrap();
    let db = fit_fpca(Side::Demand, grid, &d, ComponentSelection::Fixed(1)).unwrap();
    BasisPair::new(CurveBasis::Fpca(sb), CurveBasis::Fpca(db)).unwrap()
}

/// Hour-dependent, correlated and skewed score errors.
fn draw_error(rng: &mut ChaCha8Rng, hour: usize) -> Vec<f64> {
    let exp = Exp::new(1.0).unwrap();
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = exp.sample(rng) - 1.0;
    let scale = 1.0 + hour as f64 / 12.0;
    vec![scale * (20.0 * a + 5.0), scale * (12.0 * a + 25.0 * b)]
}

fn probabilistic_sanity() -> Outcome {
    let grid = EvaluationGrid::default_domain();
    let bases = linear_bases(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let window = 182;
    let mut pits = Vec::with_capacity(PIT_SAMPLES);
    for i in 0..PIT_SAMPLES {
        let residuals: Vec<Vec<Vec<f64>>> = (0..window)
            .map(|_| (0..HOURS).map(|h| draw_error(&mut rng, h)).collect())
            .collect();
        let model = ErrorModel::estimate(&residuals).unwrap();
        let hour = i % HOURS;
        let forecast = vec![rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)];
        let e = draw_error(&mut rng, hour);
        let truth: Vec<f64> = forecast.iter().zip(&e).map(|(a, b)| a + b).collect();
        let realized = point_price(&bases, &truth).unwrap();
        let options = SimulationOptions {
            simulations: 1000,
            seed: i as u64,
        };
        let dist = simulate_price_distribution(&forecast, hour, &model, &bases, options)
            .unwrap()
            .distribution;
        pits.push(pit(&dist, realized));
    }
    let (stat, p) = chi_square_uniform(&pits, 20).unwrap();

    let degenerate = ErrorModel::from_parts(
        vec![vec![0.0; 2]; HOURS],
        vec![vec![0.0; 2]; HOURS],
        vec![vec![0.3, -1.2]],
    )
    .unwrap();
    let forecast = [7.0, -3.0];
    let point = point_price(&bases, &forecast).unwrap();
    let options = SimulationOptions {
        simulations: 1000,
        seed: 1,
    };
    let dist = simulate_price_distribution(&forecast, 5, &degenerate, &bases, options)
        .unwrap()
        .distribution;
    let exact = dist.quantiles().iter().all(|q| *q == point);
    verdict(
        p > PIT_MIN_P && exact,
        format!("PIT chi-square {stat:.1} on {} values (p = {p:.3}); degenerate pool reproduces point forecast: {exact}", pits.len()),
    )
}

// ------------------------------------------------------------------ backtests

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
}

fn synthetic_config(out: &Path, days: usize, window: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(DataSource::Synthetic {
        seed: 1,
        days,
        start: start(),
    });
    c.window = window;
    c.shortened_window = window != 364;
    c.output = out.to_path_buf();
    c
}

fn ordering(label: &str, test_days: usize, budget: f64) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = synthetic_config(dir.path(), 364 + 7 + test_days, 364);
    c.probabilistic = false;
    let t = Instant::now();
    let summary = match run_backtest(&c) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("{label}: backtest failed: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    let reports = dir.path().join("reports");
    let metrics = read_metrics(&reports).unwrap();
    let r2 = read_r2_table(&reports).unwrap();
    let worst = metrics
        .iter()
        .filter(|(m, _)| m.as_str() != "Naive")
        .map(|(m, v)| (m.clone(), v.2))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let a = worst.1 < 1.0;
    let (fpca_r2, zst_r2) = (r2["FPCA-ARX"].0, r2["ZST-ARX"].0);
    let b = fpca_r2 > zst_r2;
    let (varx, arx) = (metrics["FPCA-VARX"].0, metrics["FPCA-ARX"].0);
    let cond_c = varx <= arx * (1.0 + VARX_MAE_SLACK);
    verdict(
        a && b && cond_c && secs <= budget,
        format!(
            "{label}, {} days: (a) worst rMAE {} {:.3}; (b) supply R2 FPCA-ARX {fpca_r2:.3} vs ZST-ARX {zst_r2:.3}; \
             (c) MAE FPCA-VARX {varx:.3} vs FPCA-ARX {arx:.3}; {secs:.0}s",
            summary.forecast_days, worst.0, worst.1
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn smoke_run(jobs: usize) -> (tempfile::TempDir, curvecast_core::BacktestSummary) {
    let dir = tempfile::tempdir().unwrap();
    let c = synthetic_config(dir.path(), 43, 28);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .unwrap();
    let s = pool.install(|| run_backtest(&c)).unwrap();
    (dir, s)
}

fn determinism() -> Outcome {
    let (a, _) = smoke_run(1);
    let (b, _) = smoke_run(4);
    let (ta, tb) = (tree(&a.path().join("store")), tree(&b.path().join("store")));
    let bytes: usize = ta.values().map(Vec::len).sum();
    verdict(
        !ta.is_empty() && ta == tb,
        format!(
            "{} store files ({bytes} bytes) identical with 1 and 4 threads: {}",
            ta.len(),
            ta == tb
        ),
    )
}

fn leakage_audit() -> Outcome {
    let (_dir, s) = smoke_run(2);
    // the audit itself must notice a read at or past the cutoff
    let days: Vec<NaiveDate> = (0..10)
        .map(|i| start() + chrono::Duration::days(i))
        .collect();
    let panel = Panel::new(
        days,
        1,
        0,
        vec![0.0; 10 * HOURS],
        Vec::new(),
        &HolidayCalendar::italian(2023, 2023),
    )
    .unwrap();
    let view = panel.view(8);
    let _ = view.target(8, 0);
    let detected = view.violations() == 1;
    verdict(
        s.leakage_violations == 0 && detected && s.forecast_days == 8,
        format!(
            "{} violations over {} smoke days; planted violation detected: {detected}",
            s.leakage_violations, s.forecast_days
        ),
    )
}

fn real_data() -> Outcome {
    let Ok(dir) = std::env::var("CURVECAST_REAL_DATA") else {
        return Outcome::Skip("set CURVECAST_REAL_DATA to a directory of order-book data".into());
    };
    let dir = PathBuf::from(dir);
    let coupling = dir.join("coupling.csv");
    let out = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(DataSource::Files {
        orders: dir.join("orders.csv"),
        exogenous: dir.join("exogenous.csv"),
        coupling: coupling.is_file().then_some(coupling),
    });
    c.output = out.path().to_path_buf();
    if let Err(e) = run_backtest(&c) {
        return Outcome::Fail(format!("backtest failed: {e}"));
    }
    let reports = out.path().join("reports");
    let metrics = read_metrics(&reports).unwrap();
    let r2 = read_r2_table(&reports).unwrap();
    let scores = read_scores(&out.path().join("store")).unwrap();
    let farx: Vec<f64> = scores
        .iter()
        .filter(|r| {
            r.model == ModelSpec::Curve(Representation::Fpca, ModelVariant::Farx).name()
                && r.window == "ensemble"
        })
        .map(|r| r.crps)
        .collect();
    let farx_crps = farx.iter().sum::<f64>() / farx.len().max(1) as f64;
    let checks = [
        ("Naive MAE", metrics["Naive"].0, 11.34),
        ("FPCA-VARX MAE", metrics["FPCA-VARX"].0, 7.61),
        ("FPCA-VARX rMAE", metrics["FPCA-VARX"].2, 0.671),
        ("FPCA-ARX supply R2", r2["FPCA-ARX"].0, 0.912),
        ("ZST-ARX supply R2", r2["ZST-ARX"].0, 0.853),
        ("FPCA-fARX ensemble CRPS", farx_crps, 5.733),
    ];
    let ok = checks
        .iter()
        .all(|(_, v, e)| ((v - e) / e).abs() <= REAL_DATA_TOL);
    let detail = checks
        .iter()
        .map(|(n, v, e)| format!("{n} {v:.3} (expected {e})"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, detail)
}

type Criterion = Box<dyn Fn() -> Outcome>;

fn main() -> ExitCode {
    let full = std::env::var("CURVECAST_FULL_SCALE").is_ok_and(|v| v == "1");
    let criteria: Vec<(&str, Criterion)> = vec![
        ("regression oracle", Box::new(regression_oracle)),
        ("PAVA oracle", Box::new(pava_oracle)),
        ("FPCA round trip", Box::new(fpca_round_trip)),
        ("clearing oracle", Box::new(clearing_oracle)),
        ("CRPS oracle", Box::new(crps_oracle)),
        ("probabilistic sanity", Box::new(probabilistic_sanity)),
        (
            "synthetic backtest ordering",
            Box::new(move || {
                let reduced = ordering("reduced mode", 60, REDUCED_BUDGET_S);
                if !full {
                    return reduced;
                }
                let scaled = ordering("full scale", 366, FULL_BUDGET_S);
                match (reduced, scaled) {
                    (Outcome::Pass(a), Outcome::Pass(b)) => Outcome::Pass(format!("{a} | {b}")),
                    (a, b) => Outcome::Fail(format!("{} | {}", a.detail(), b.detail())),
                }
            }),
        ),
        ("determinism", Box::new(determinism)),
        ("no-leakage audit", Box::new(leakage_audit)),
        ("real-data harness", Box::new(real_data)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Outcome::Fail("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
