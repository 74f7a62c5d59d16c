//! Forecast accuracy metrics and significance tests.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::HOURS;
use crate::probabilistic::{percentile_level, EmpiricalPriceDistribution, PERCENTILES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourMetrics {
    pub hour: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub rmae: f64,
    /// Filled when the series are hourly (length a multiple of 24, hour
    /// `i % 24`).
    pub per_hour: Vec<HourMetrics>,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn mae_rmse(pred: impl Iterator<Item = (f64, f64)>) -> (f64, f64, usize) {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (p, a) in pred {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
        n += 1;
    }
    (abs / n as f64, (sq / n as f64).sqrt(), n)
}

/// MAE, RMSE and MAE relative to the naive forecasts of the same targets.
pub fn point_metrics(predicted: &[f64], actual: &[f64], naive: &[f64]) -> Result<MetricReport> {
    check_lengths(predicted, actual)?;
    check_lengths(predicted, naive)?;
    if predicted.is_empty() {
        return Err(Error::Parameter("metrics of an empty series".into()));
    }
    let pairs = || predicted.iter().copied().zip(actual.iter().copied());
    let (mae, rmse, n) = mae_rmse(pairs());
    let (naive_mae, _, _) = mae_rmse(naive.iter().copied().zip(actual.iter().copied()));
    if naive_mae == 0.0 {
        return Err(Error::Division("the naive forecast has zero MAE".into()));
    }
    let per_hour = if n % HOURS == 0 {
        (0..HOURS)
            .map(|h| {
                let (mae, rmse, _) = mae_rmse(pairs().skip(h).step_by(HOURS));
                HourMetrics { hour: h, mae, rmse }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(MetricReport {
        n,
        mae,
        rmse,
        rmae: mae / naive_mae,
        per_hour,
    })
}

fn pinball(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Continuous ranked probability score of a percentile forecast.
///
/// The forecast is read as the distribution with mass 1/99 on each
/// percentile (the cdf of [`EmpiricalPriceDistribution::cdf`]). Its score
/// `integral (F(x) - 1{y <= x})^2 dx` equals twice the mean pinball loss of
/// the sorted support points at levels `(i - 1/2) / 99`.
pub fn crps(distribution: &EmpiricalPriceDistribution, realized: f64) -> f64 {
    let m = PERCENTILES as f64;
    2.0 / m
        * distribution
            .quantiles()
            .iter()
            .enumerate()
            .map(|(i, q)| pinball(realized - q, (i as f64 + 0.5) / m))
            .sum::<f64>()
}

/// Probability integral transform: the cdf interpolated linearly between
/// percentiles, `0.005` below the first and `0.995` above the last. A
/// realization equal to several percentiles gets the midpoint of their
/// levels.
pub fn pit(distribution: &EmpiricalPriceDistribution, realized: f64) -> f64 {
    let q = distribution.quantiles();
    let lo = q.partition_point(|v| *v < realized);
    let hi = q.partition_point(|v| *v <= realized);
    if hi > lo {
        return 0.5 * (percentile_level(lo) + percentile_level(hi - 1));
    }
    if lo == 0 {
        return 0.005;
    }
    if lo == PERCENTILES {
        return 0.995;
    }
    let t = (realized - q[lo - 1]) / (q[lo] - q[lo - 1]);
    percentile_level(lo - 1) + t * (percentile_level(lo) - percentile_level(lo - 1))
}

/// Counts of `values` in `bins` equal-width bins of [0, 1].
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for v in values {
        let b = ((v * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        h[b] += 1;
    }
    h
}

/// Pearson chi-square test of uniformity on [0, 1]: (statistic, p-value).
pub fn chi_square_uniform(values: &[f64], bins: usize) -> Result<(f64, f64)> {
    if bins < 2 || values.is_empty() {
        return Err(Error::DegenerateTest(format!(
            "chi-square needs at least 2 bins and one value (bins {bins}, n {})",
            values.len()
        )));
    }
    let expected = values.len() as f64 / bins as f64;
    let stat = histogram(values, bins)
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, 1.0 - dist.cdf(stat)))
}

/// Kolmogorov-Smirnov distance between the sample and U(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut u = values.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max)
}

/// Streaming squared-correlation function of curve forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct R2Accumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    sse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Summary {
    /// `R^2(p)` per grid point; `None` where the actual curves do not vary.
    pub r2: Vec<Option<f64>>,
    /// Trapezoidal mean over the grid points where `R^2` is defined.
    pub average: f64,
}

impl R2Accumulator {
    pub fn new(grid_len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; grid_len],
            m2: vec![0.0; grid_len],
            sse: vec![0.0; grid_len],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, predicted: &[f64], actual: &[f64]) -> Result<()> {
        let g = self.mean.len();
        if predicted.len() != g || actual.len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: if predicted.len() != g {
                    predicted.len()
                } else {
                    actual.len()
                },
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for i in 0..g {
            let delta = actual[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (actual[i] - self.mean[i]);
            self.sse[i] += (predicted[i] - actual[i]).powi(2);
        }
        Ok(())
    }

    /// `R^2(p) = 1 - SSE(p) / SS(p)` and its trapezoidal average under the
    /// grid weights `weights`.
    pub fn finish(&self, weights: &[f64]) -> Result<R2Summary> {
        if self.count < 2 {
            return Err(Error::Parameter(format!(
                "R^2 needs at least 2 curves, got {}",
                self.count
            )));
        }
        let r2: Vec<Option<f64>> = self
            .m2
            .iter()
            .zip(&self.sse)
            .zip(&self.mean)
            .map(|((ss, sse), m)| (*ss > 1e-12 * m.abs().max(1.0).powi(2)).then(|| 1.0 - sse / ss))
            .collect();
        let excluded = r2.iter().filter(|v| v.is_none()).count();
        if excluded > 0 {
            log::warn!("R^2 undefined at {excluded} grid points (constant actual curves); excluded from the average");
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (v, w) in r2.iter().zip(weights) {
            if let Some(v) = v {
                num += w * v;
                den += w;
            }
        }
        if den == 0.0 {
            return Err(Error::Division(
                "R^2 is undefined at every grid point".into(),
            ));
        }
        Ok(R2Summary {
            r2,
            average: num / den,
        })
    }
}

/// Squared-correlation function of `predicted[t]` against `actual[t]`.
pub fn squared_correlation(
    predicted: &[Vec<f64>],
    actual: &[Vec<f64>],
    weights: &[f64],
) -> Result<R2Summary> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape {
            expected: predicted.len(),
            actual: actual.len(),
        });
    }
    let mut acc = R2Accumulator::new(weights.len());
    for (p, a) in predicted.iter().zip(actual) {
        acc.push(p, a)?;
    }
    acc.finish(weights)
}

/// Which forecast the test finds more accurate (lower loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DmDirection {
    FirstBetter,
    SecondBetter,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DmResult {
    /// `mean(d) / sqrt(var(d) / T)` with `d = loss_a - loss_b`.
    pub statistic: f64,
    /// One-sided p-value of H1: the first forecast has lower expected loss.
    pub p_first_better: f64,
    /// One-sided p-value of H1: the second forecast has lower expected loss.
    pub p_second_better: f64,
    pub direction: DmDirection,
}

pub const DM_MIN_LENGTH: usize = 30;

/// Diebold-Mariano test on daily loss series (no autocorrelation correction).
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult> {
    check_lengths(loss_a, loss_b)?;
    let t = loss_a.len();
    if t < DM_MIN_LENGTH {
        return Err(Error::DegenerateTest(format!(
            "DM test needs at least {DM_MIN_LENGTH} daily losses, got {t}"
        )));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let n = t as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let statistic = if d.iter().all(|v| *v == 0.0) {
        0.0
    } else if var <= 1e-24 * mean.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateTest(
            "loss differentials have zero variance".into(),
        ));
    } else {
        mean / (var / n).sqrt()
    };
    let phi = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .cdf(statistic);
    let direction = if statistic < 0.0 {
        DmDirection::FirstBetter
    } else if statistic > 0.0 {
        DmDirection::SecondBetter
    } else {
        DmDirection::Equal
    };
    Ok(DmResult {
        statistic,
        p_first_better: phi,
        p_second_better: 1.0 - phi,
        direction,
    })
}
