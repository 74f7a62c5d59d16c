//! Price distributions obtained by postprocessing point forecasts with
//! their recent errors.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{percentile_level, quantile_sorted, EmpiricalPriceDistribution, PERCENTILES};
use crate::error::{Error, Result};
use crate::representation::isotonic_increasing_weighted;

/// Shortest calibration window giving meaningful percentile resolution.
pub const MIN_WINDOW: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PostprocessMethod {
    /// Gaussian errors with estimated bias and spread.
    Normal,
    /// Split-conformal: empirical residual quantiles around the forecast.
    Conformal,
    /// Isotonic distributional regression of actuals on forecasts.
    Idr,
    /// Linear quantile regression of actuals on the forecast.
    Qrm,
}

impl PostprocessMethod {
    pub const ALL: [PostprocessMethod; 4] = [
        PostprocessMethod::Normal,
        PostprocessMethod::Conformal,
        PostprocessMethod::Idr,
        PostprocessMethod::Qrm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostprocessMethod::Normal => "N",
            PostprocessMethod::Conformal => "CP",
            PostprocessMethod::Idr => "IDR",
            PostprocessMethod::Qrm => "QRM",
        }
    }
}

fn check(forecasts: &[f64], actuals: &[f64]) -> Result<()> {
    if forecasts.len() != actuals.len() {
        return Err(Error::Shape {
            expected: forecasts.len(),
            actual: actuals.len(),
        });
    }
    if forecasts.len() < MIN_WINDOW {
        return Err(Error::Window(forecasts.len()));
    }
    if forecasts.iter().chain(actuals).any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "non-finite forecast or price in the calibration window".into(),
        ));
    }
    Ok(())
}

fn residuals(forecasts: &[f64], actuals: &[f64]) -> Vec<f64> {
    actuals.iter().zip(forecasts).map(|(a, f)| a - f).collect()
}

/// Gaussian around `point + mean(residual)` with the unbiased residual sd.
pub fn normal(
    forecasts: &[f64],
    actuals: &[f64],
    point: f64,
) -> Result<EmpiricalPriceDistribution> {
    check(forecasts, actuals)?;
    let r = residuals(forecasts, actuals);
    let n = r.len() as f64;
    let m = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Scale(sd));
    }
    let dist = Normal::new(point + m, sd).map_err(|_| Error::Scale(sd))?;
    let q = (0..PERCENTILES)
        .map(|i| dist.inverse_cdf(percentile_level(i)))
        .collect();
    EmpiricalPriceDistribution::from_quantiles(q, r.len())
}

/// `point` plus the empirical percentiles of past residuals.
pub fn conformal(
    forecasts: &[f64],
    actuals: &[f64],
    point: f64,
) -> Result<EmpiricalPriceDistribution> {
    check(forecasts, actuals)?;
    let mut r = residuals(forecasts, actuals);
    r.sort_by(f64::total_cmp);
    let q = (0..PERCENTILES)
        .map(|i| point + quantile_sorted(&r, percentile_level(i)))
        .collect();
    EmpiricalPriceDistribution::from_quantiles(q, r.len())
}

/// Conditional cdfs of the actual price given the forecast, estimated under
/// the constraint that larger forecasts give stochastically larger prices.
#[derive(Debug, Clone, PartialEq)]
pub struct IdrFit {
    /// distinct forecasts, ascending
    xs: Vec<f64>,
    /// distinct actuals, ascending (the cdf thresholds)
    thresholds: Vec<f64>,
    /// `cdf[t][i]`: P(Y <= thresholds[t] | x = xs[i])
    cdf: Vec<Vec<f64>>,
}

impl IdrFit {
    pub fn fit(forecasts: &[f64], actuals: &[f64]) -> Result<Self> {
        check(forecasts, actuals)?;
        let mut order: Vec<usize> = (0..forecasts.len()).collect();
        order.sort_by(|&a, &b| forecasts[a].total_cmp(&forecasts[b]));
        // group observations by distinct forecast
        let mut xs: Vec<f64> = Vec::new();
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for &i in &order {
            if xs.last() == Some(&forecasts[i]) {
                groups.last_mut().expect("group exists").push(actuals[i]);
            } else {
                xs.push(forecasts[i]);
                groups.push(vec![actuals[i]]);
            }
        }
        let weights: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
        let mut thresholds = actuals.to_vec();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let mut cdf = Vec::with_capacity(thresholds.len());
        for &z in &thresholds {
            // non-increasing in x: fit the increasing regression of 1 - indicator
            let upper: Vec<f64> = groups
                .iter()
                .map(|g| g.iter().filter(|y| **y > z).count() as f64 / g.len() as f64)
                .collect();
            let fitted = isotonic_increasing_weighted(&upper, &weights);
            cdf.push(fitted.into_iter().map(|u| 1.0 - u).collect::<Vec<f64>>());
        }
        // monotone in the threshold by construction; guard against rounding
        for i in 0..xs.len() {
            let mut running: f64 = 0.0;
            for row in cdf.iter_mut() {
                running = running.max(row[i]);
                row[i] = running.min(1.0);
            }
        }
        Ok(Self {
            xs,
            thresholds,
            cdf,
        })
    }

    /// Predictive cdf at forecast `x` (linear between fitted forecasts,
    /// constant beyond them), evaluated at every threshold.
    fn cdf_row(&self, x: f64) -> Vec<f64> {
        let n = self.xs.len();
        let j = self.xs.partition_point(|v| *v < x);
        if j == 0 {
            return self.cdf.iter().map(|r| r[0]).collect();
        }
        if j == n {
            return self.cdf.iter().map(|r| r[n - 1]).collect();
        }
        if self.xs[j] == x {
            return self.cdf.iter().map(|r| r[j]).collect();
        }
        let t = (x - self.xs[j - 1]) / (self.xs[j] - self.xs[j - 1]);
        self.cdf
            .iter()
            .map(|r| (1.0 - t) * r[j - 1] + t * r[j])
            .collect()
    }

    /// `P(Y <= y | forecast = x)`.
    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        let t = self.thresholds.partition_point(|v| *v <= y);
        if t == 0 {
            0.0
        } else {
            self.cdf_row(x)[t - 1]
        }
    }

    /// Percentiles of the predictive distribution at forecast `x`.
    pub fn predict(&self, x: f64) -> Result<EmpiricalPriceDistribution> {
        let row = self.cdf_row(x);
        let last = *self.thresholds.last().expect("non-empty window");
        let q = (0..PERCENTILES)
            .map(|i| {
                let p = percentile_level(i);
                let t = row.partition_point(|f| *f < p - 1e-12);
                self.thresholds.get(t).copied().unwrap_or(last)
            })
            .collect();
        EmpiricalPriceDistribution::from_quantiles(q, self.xs.len())
    }
}

pub fn idr(forecasts: &[f64], actuals: &[f64], point: f64) -> Result<EmpiricalPriceDistribution> {
    IdrFit::fit(forecasts, actuals)?.predict(point)
}

fn pinball(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// For slope `b`, the best intercept is a `tau`-quantile of `y - b x`; the
/// returned pair is (loss, intercept).
fn profile(x: &[f64], y: &[f64], tau: f64, b: f64, buf: &mut Vec<f64>) -> (f64, f64) {
    buf.clear();
    buf.extend(y.iter().zip(x).map(|(yi, xi)| yi - b * xi));
    let n = buf.len();
    let k = ((tau * n as f64).ceil() as usize).clamp(1, n) - 1;
    let a = *buf.select_nth_unstable_by(k, f64::total_cmp).1;
    let loss = y
        .iter()
        .zip(x)
        .map(|(yi, xi)| pinball(yi - a - b * xi, tau))
        .sum();
    (loss, a)
}

/// Minimizes the pinball loss of `y ~ a + b x` at level `tau`.
///
/// The loss profiled over the intercept is convex in the slope, and its
/// minimum lies between the smallest and largest pairwise slope, so a
/// ternary search on that bracket finds it to machine precision.
fn quantile_line(x: &[f64], y: &[f64], tau: f64, bracket: (f64, f64)) -> (f64, f64) {
    let mut buf = Vec::with_capacity(x.len());
    let (mut lo, mut hi) = bracket;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if profile(x, y, tau, m1, &mut buf).0 <= profile(x, y, tau, m2, &mut buf).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let b = 0.5 * (lo + hi);
    let (_, a) = profile(x, y, tau, b, &mut buf);
    (a, b)
}

fn slope_bracket(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[i] != x[j] {
                let s = (y[j] - y[i]) / (x[j] - x[i]);
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
    }
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

/// Per-percentile linear quantile regression of actuals on forecasts.
pub fn qrm(forecasts: &[f64], actuals: &[f64], point: f64) -> Result<EmpiricalPriceDistribution> {
    check(forecasts, actuals)?;
    let bracket = slope_bracket(forecasts, actuals);
    let q = (0..PERCENTILES)
        .map(|i| {
            let (a, b) = quantile_line(forecasts, actuals, percentile_level(i), bracket);
            a + b * point
        })
        .collect();
    EmpiricalPriceDistribution::from_unsorted(q, forecasts.len())
}

/// Dispatches to the postprocessing method.
pub fn postprocess_point_forecasts(
    method: PostprocessMethod,
    forecasts: &[f64],
    actuals: &[f64],
    point: f64,
) -> Result<EmpiricalPriceDistribution> {
    match method {
        PostprocessMethod::Normal => normal(forecasts, actuals, point),
        PostprocessMethod::Conformal => conformal(forecasts, actuals, point),
        PostprocessMethod::Idr => idr(forecasts, actuals, point),
        PostprocessMethod::Qrm => qrm(forecasts, actuals, point),
    }
}
