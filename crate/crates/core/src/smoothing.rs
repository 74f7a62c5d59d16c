//! Nadaraya–Watson kernel smoothing of curves sampled on a uniform price grid,
//! with bandwidth selection by generalized cross-validation.

use serde::{Deserialize, Serialize};

use crate::curves::StepCurve;
use crate::error::{Error, Result};
use crate::market_data::Side;

/// Uniform price grid spanning a closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    prices: Vec<f64>,
}

impl EvaluationGrid {
    pub const MIN_POINTS: usize = 50;

    pub fn uniform(p_min: f64, p_max: f64, points: usize) -> Result<Self> {
        if points < Self::MIN_POINTS {
            return Err(Error::Parameter(format!(
                "an evaluation grid needs at least {} points, got {points}",
                Self::MIN_POINTS
            )));
        }
        if !(p_min < p_max) || !p_min.is_finite() || !p_max.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid grid domain [{p_min}, {p_max}]"
            )));
        }
        let step = (p_max - p_min) / (points - 1) as f64;
        let mut prices: Vec<f64> = (0..points).map(|i| p_min + step * i as f64).collect();
        prices[points - 1] = p_max;
        Ok(Self { prices })
    }

    /// 301 points over `[0, 300]`, one per EUR/MWh.
    pub fn default_domain() -> Self {
        Self::uniform(0.0, 300.0, 301).expect("valid default grid")
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn p_min(&self) -> f64 {
        self.prices[0]
    }

    pub fn p_max(&self) -> f64 {
        self.prices[self.prices.len() - 1]
    }

    pub fn spacing(&self) -> f64 {
        (self.p_max() - self.p_min()) / (self.len() - 1) as f64
    }

    /// Trapezoidal quadrature weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let g = self.len();
        let dp = self.spacing();
        let mut w = vec![dp; g];
        w[0] = 0.5 * dp;
        w[g - 1] = 0.5 * dp;
        w
    }

    /// Evaluates a step curve at every grid price.
    pub fn sample(&self, curve: &StepCurve) -> Vec<f64> {
        curve.eval_sorted(&self.prices)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCurve {
    pub side: Side,
    pub values: Vec<f64>,
}

/// Precomputed Gaussian smoother for one grid and bandwidth.
///
/// Rows are normalized kernel weights truncated where the kernel falls below
/// `exp(-TRUNCATION^2 / 2)`, which is far below double precision relative to
/// the diagonal weight.
#[derive(Debug, Clone)]
pub struct KernelSmoother {
    bandwidth: f64,
    // kernel values K(i * spacing / h) for offsets 0..=reach
    kernel: Vec<f64>,
    // 1 / row sum for each grid point
    inv_row_sums: Vec<f64>,
    // G - tr(L), accumulated from off-diagonal weights to avoid cancellation
    residual_dof: f64,
}

const TRUNCATION: f64 = 9.0;

impl KernelSmoother {
    pub fn new(grid: &EvaluationGrid, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Parameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let g = grid.len();
        let ratio = grid.spacing() / bandwidth;
        let reach = ((TRUNCATION / ratio).ceil() as usize).min(g - 1);
        let kernel: Vec<f64> = (0..=reach)
            .map(|k| {
                let u = k as f64 * ratio;
                (-0.5 * u * u).exp()
            })
            .collect();
        let mut inv_row_sums = Vec::with_capacity(g);
        let mut residual_dof = 0.0;
        for i in 0..g {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(g - 1);
            let off: f64 = (lo..=hi)
                .filter(|&j| j != i)
                .map(|j| kernel[i.abs_diff(j)])
                .sum();
            let s = 1.0 + off;
            inv_row_sums.push(1.0 / s);
            residual_dof += off / s;
        }
        Ok(Self {
            bandwidth,
            kernel,
            inv_row_sums,
            residual_dof,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.inv_row_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_row_sums.is_empty()
    }

    /// `tr(L)`: each diagonal entry is `K(0) / rowsum = 1 / rowsum`.
    pub fn trace(&self) -> f64 {
        self.inv_row_sums.iter().sum()
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let g = self.len();
        if raw.len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: raw.len(),
            });
        }
        let reach = self.kernel.len() - 1;
        let mut out = Vec::with_capacity(g);
        for i in 0..g {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(g - 1);
            let mut acc = 0.0;
            for (j, r) in raw.iter().enumerate().take(hi + 1).skip(lo) {
                acc += self.kernel[i.abs_diff(j)] * r;
            }
            out.push(acc * self.inv_row_sums[i]);
        }
        Ok(out)
    }

    /// `G * RSS / (G - tr(L))^2`, infinite when the smoother interpolates.
    pub fn gcv(&self, raw: &[f64]) -> Result<f64> {
        let g = self.len();
        if raw.len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: raw.len(),
            });
        }
        // Residuals as weighted differences y_i - y_j, since rows sum to one;
        // this keeps precision when the smoother is close to the identity.
        let reach = self.kernel.len() - 1;
        let mut rss = 0.0;
        for i in 0..g {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(g - 1);
            let mut acc = 0.0;
            for j in (lo..=hi).filter(|&j| j != i) {
                acc += self.kernel[i.abs_diff(j)] * (raw[i] - raw[j]);
            }
            rss += (acc * self.inv_row_sums[i]).powi(2);
        }
        let g = g as f64;
        let denom = self.residual_dof;
        Ok(if denom <= 0.0 {
            f64::INFINITY
        } else {
            g * rss / (denom * denom)
        })
    }
}

/// Smooths grid evaluations of a step curve with a Gaussian kernel.
pub fn nadaraya_watson(
    grid: &EvaluationGrid,
    raw: &[f64],
    side: Side,
    bandwidth: f64,
) -> Result<SmoothCurve> {
    let values = KernelSmoother::new(grid, bandwidth)?.apply(raw)?;
    Ok(SmoothCurve { side, values })
}

/// Returns the candidate with the smallest GCV score; ties go to the smaller
/// bandwidth.
pub fn select_bandwidth_gcv(grid: &EvaluationGrid, raw: &[f64], candidates: &[f64]) -> Result<f64> {
    if candidates.len() < 2 {
        return Err(Error::Parameter(format!(
            "bandwidth selection needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let mut best: Option<(f64, f64)> = None;
    for &h in candidates {
        let score = KernelSmoother::new(grid, h)?.gcv(raw)?;
        if !score.is_finite() {
            continue;
        }
        best = match best {
            Some((bh, bs)) if bs < score || (bs == score && bh <= h) => Some((bh, bs)),
            _ => Some((h, score)),
        };
    }
    best.map(|(h, _)| h).ok_or(Error::DegenerateSmoother)
}

/// `count` log-spaced bandwidths from `lo` to `hi` inclusive.
pub fn log_spaced_bandwidths(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default candidates: 10 log-spaced values in `[0.5, 50]` EUR/MWh.
pub fn default_bandwidths() -> Vec<f64> {
    log_spaced_bandwidths(0.5, 50.0, 10)
}

/// Median of the per-curve GCV choices (lower median for even counts).
pub fn select_global_bandwidth(
    grid: &EvaluationGrid,
    curves: &[Vec<f64>],
    candidates: &[f64],
) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::Parameter("no curves for bandwidth selection".into()));
    }
    let smoothers = candidates
        .iter()
        .map(|&h| KernelSmoother::new(grid, h))
        .collect::<Result<Vec<_>>>()?;
    let mut chosen = Vec::with_capacity(curves.len());
    for raw in curves {
        let mut best: Option<(f64, f64)> = None;
        for s in &smoothers {
            let score = s.gcv(raw)?;
            if !score.is_finite() {
                continue;
            }
            let h = s.bandwidth();
            best = match best {
                Some((bh, bs)) if bs < score || (bs == score && bh <= h) => Some((bh, bs)),
                _ => Some((h, score)),
            };
        }
        chosen.push(best.ok_or(Error::DegenerateSmoother)?.0);
    }
    chosen.sort_by(f64::total_cmp);
    Ok(chosen[(chosen.len() - 1) / 2])
}
