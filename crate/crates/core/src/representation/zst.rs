//! Discretized benchmark representation: first differences of a curve at a
//! non-uniform price grid derived from the training-mean curve.
//!
//! The price grid places `K` points at equal steps of the mean curve's
//! quantity range, so each coordinate carries a comparable share of volume.

use serde::{Deserialize, Serialize};

use super::pava::{isotonic_decreasing, isotonic_increasing};
use crate::error::{Error, Result};
use crate::market_data::Side;
use crate::smoothing::EvaluationGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZstBasis {
    pub side: Side,
    pub grid: EvaluationGrid,
    /// `K` strictly increasing prices, the last equal to the grid maximum.
    pub price_grid: Vec<f64>,
    /// Monotone training-mean curve on the evaluation grid.
    pub mean_curve: Vec<f64>,
    /// Mean quantity at the grid minimum; reconstruction starts here.
    pub anchor: f64,
}

/// Linear interpolation of grid samples at `p`.
fn interpolate(grid: &EvaluationGrid, values: &[f64], p: f64) -> f64 {
    let prices = grid.prices();
    let g = prices.len();
    if p <= prices[0] {
        return values[0];
    }
    if p >= prices[g - 1] {
        return values[g - 1];
    }
    let i = prices.partition_point(|&x| x <= p) - 1;
    let t = (p - prices[i]) / (prices[i + 1] - prices[i]);
    values[i] + t * (values[i + 1] - values[i])
}

/// Builds the price grid from the mean of `curves` (grid evaluations).
pub fn fit_zst<V: AsRef<[f64]>>(
    side: Side,
    grid: &EvaluationGrid,
    curves: &[V],
    k: usize,
) -> Result<ZstBasis> {
    let g = grid.len();
    if curves.is_empty() {
        return Err(Error::Rank("ZST needs at least one curve".into()));
    }
    if k == 0 {
        return Err(Error::Parameter("ZST dimension must be positive".into()));
    }
    let mut mean = vec![0.0; g];
    for c in curves {
        let c = c.as_ref();
        if c.len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: c.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= curves.len() as f64;
    }
    let mean = match side {
        Side::Supply => isotonic_increasing(&mean),
        Side::Demand => isotonic_decreasing(&mean),
    };
    let first = mean[0];
    let range = (mean[g - 1] - first).abs();
    if !(range > 1e-12 * first.abs().max(1.0)) {
        return Err(Error::DegenerateGrid(format!(
            "{side} mean curve is flat on [{}, {}]",
            grid.p_min(),
            grid.p_max()
        )));
    }
    // progress in [0, 1], non-decreasing in price for both sides
    let progress: Vec<f64> = mean.iter().map(|m| (m - first).abs() / range).collect();
    let prices = grid.prices();
    let mut price_grid = Vec::with_capacity(k);
    let mut j = 0;
    for level_idx in 1..k {
        let level = level_idx as f64 / k as f64;
        while progress[j] < level {
            j += 1;
        }
        // progress[j - 1] < level <= progress[j], with j >= 1 since progress[0] = 0
        let (a, b) = (progress[j - 1], progress[j]);
        let t = (level - a) / (b - a);
        price_grid.push(prices[j - 1] + t * (prices[j] - prices[j - 1]));
    }
    price_grid.push(grid.p_max());
    Ok(ZstBasis {
        side,
        grid: grid.clone(),
        price_grid,
        mean_curve: mean,
        anchor: first,
    })
}

impl ZstBasis {
    pub fn dim(&self) -> usize {
        self.price_grid.len()
    }

    /// First differences of the curve at the price grid, the first taken
    /// against the anchor.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.grid.len() {
            return Err(Error::Shape {
                expected: self.grid.len(),
                actual: values.len(),
            });
        }
        let mut prev = self.anchor;
        Ok(self
            .price_grid
            .iter()
            .map(|&p| {
                let q = interpolate(&self.grid, values, p);
                let d = q - prev;
                prev = q;
                d
            })
            .collect())
    }

    /// Quantities at the price grid recovered by cumulative summation.
    pub fn levels(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: vector.len(),
            });
        }
        let mut acc = self.anchor;
        Ok(vector
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect())
    }

    /// Reconstructs grid evaluations; between grid prices the curve follows
    /// the shape of the mean curve.
    pub fn reconstruct(&self, vector: &[f64]) -> Result<Vec<f64>> {
        let levels = self.levels(vector)?;
        let prices = self.grid.prices();
        let mean_at: Vec<f64> = self
            .price_grid
            .iter()
            .map(|&p| interpolate(&self.grid, &self.mean_curve, p))
            .collect();
        let mut out = Vec::with_capacity(prices.len());
        let mut seg = 0;
        let mut left_p = self.grid.p_min();
        let mut left_q = self.anchor;
        let mut left_m = self.mean_curve[0];
        for (i, &p) in prices.iter().enumerate() {
            while seg + 1 < self.dim() && p > self.price_grid[seg] {
                left_p = self.price_grid[seg];
                left_q = levels[seg];
                left_m = mean_at[seg];
                seg += 1;
            }
            let right_p = self.price_grid[seg];
            let right_q = levels[seg];
            let right_m = mean_at[seg];
            let dm = right_m - left_m;
            let t = if dm.abs() > 0.0 {
                (self.mean_curve[i] - left_m) / dm
            } else if right_p > left_p {
                (p - left_p) / (right_p - left_p)
            } else {
                1.0
            };
            out.push(left_q + t.clamp(0.0, 1.0) * (right_q - left_q));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> EvaluationGrid {
        EvaluationGrid::uniform(0.0, 300.0, 301).unwrap()
    }

    fn supply_like(g: &EvaluationGrid, shift: f64) -> Vec<f64> {
        g.prices()
            .iter()
            .map(|p| 1000.0 + 5000.0 / (1.0 + (-(p - 100.0 - shift) / 20.0).exp()))
            .collect()
    }

    #[test]
    fn grid_is_increasing_and_ends_at_max() {
        let g = grid();
        let curves: Vec<Vec<f64>> = [-10.0, 0.0, 10.0]
            .iter()
            .map(|s| supply_like(&g, *s))
            .collect();
        let b = fit_zst(Side::Supply, &g, &curves, 8).unwrap();
        assert_eq!(b.dim(), 8);
        assert!(b.price_grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*b.price_grid.last().unwrap(), 300.0);
    }

    #[test]
    fn mean_curve_reconstructs_exactly_at_grid() {
        let g = grid();
        let curves: Vec<Vec<f64>> = [-10.0, 0.0, 10.0]
            .iter()
            .map(|s| supply_like(&g, *s))
            .collect();
        let b = fit_zst(Side::Supply, &g, &curves, 6).unwrap();
        let v = b.project(&b.mean_curve).unwrap();
        let r = b.reconstruct(&v).unwrap();
        for &p in &b.price_grid {
            let (a, c) = (interpolate(&g, &b.mean_curve, p), interpolate(&g, &r, p));
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_exact_at_grid_prices() {
        let g = grid();
        let curves: Vec<Vec<f64>> = [-10.0, 0.0, 10.0]
            .iter()
            .map(|s| supply_like(&g, *s))
            .collect();
        let b = fit_zst(Side::Supply, &g, &curves, 9).unwrap();
        let x = supply_like(&g, 23.0);
        let levels = b.levels(&b.project(&x).unwrap()).unwrap();
        for (&p, q) in b.price_grid.iter().zip(levels) {
            assert!((interpolate(&g, &x, p) - q).abs() < 1e-9);
        }
    }

    #[test]
    fn demand_grid() {
        let g = grid();
        let curves: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                g.prices()
                    .iter()
                    .map(|p| 9000.0 - 10.0 * p - k as f64)
                    .collect()
            })
            .collect();
        let b = fit_zst(Side::Demand, &g, &curves, 4).unwrap();
        // linear mean: equispaced quantities map to equispaced prices
        for (i, p) in b.price_grid.iter().enumerate() {
            assert!((p - 75.0 * (i + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_mean_is_degenerate() {
        let g = grid();
        let curves = vec![vec![5.0; 301]; 2];
        assert!(matches!(
            fit_zst(Side::Supply, &g, &curves, 3),
            Err(Error::DegenerateGrid(_))
        ));
    }
}
