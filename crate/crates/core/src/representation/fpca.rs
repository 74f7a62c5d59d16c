//! Functional principal component analysis of curves sampled on a uniform
//! grid, under the trapezoidal inner product `<f, g> = sum_i w_i f_i g_i`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::Side;
use crate::smoothing::EvaluationGrid;

/// How many components a fitted basis keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentSelection {
    /// Knee of the scree plot or 99 % explained variance, whichever is larger.
    Auto,
    Fixed(usize),
    /// Every component with a positive eigenvalue (at least one).
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaBasis {
    pub side: Side,
    pub grid: EvaluationGrid,
    pub mean: Vec<f64>,
    /// Retained components, orthonormal under the grid inner product.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the retained components.
    pub eigenvalues: Vec<f64>,
    /// Full non-increasing spectrum of the covariance operator.
    pub spectrum: Vec<f64>,
    /// `spectrum / sum(spectrum)`.
    pub explained_ratio: Vec<f64>,
    weights: Vec<f64>,
}

impl FpcaBasis {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        let g = self.mean.len();
        if values.len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: values.len(),
            });
        }
        let centered: Vec<f64> = values
            .iter()
            .zip(&self.mean)
            .zip(&self.weights)
            .map(|((v, m), w)| (v - m) * w)
            .collect();
        Ok(self
            .components
            .iter()
            .map(|xi| xi.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: scores.len(),
            });
        }
        let mut out = self.mean.clone();
        for (xi, &b) in self.components.iter().zip(scores) {
            for (o, x) in out.iter_mut().zip(xi) {
                *o += b * x;
            }
        }
        Ok(out)
    }

    /// A copy keeping only the first `k` components.
    pub fn truncated(&self, k: usize) -> Result<FpcaBasis> {
        if k == 0 || k > self.dim() {
            return Err(Error::Parameter(format!(
                "cannot truncate a {}-component basis to {k}",
                self.dim()
            )));
        }
        let mut b = self.clone();
        b.components.truncate(k);
        b.eigenvalues.truncate(k);
        Ok(b)
    }
}

/// Fits an FPCA basis to `curves` (each of grid length).
pub fn fit_fpca<V: AsRef<[f64]>>(
    side: Side,
    grid: &EvaluationGrid,
    curves: &[V],
    selection: ComponentSelection,
) -> Result<FpcaBasis> {
    let t = curves.len();
    let g = grid.len();
    if t < 2 {
        return Err(Error::Rank(format!(
            "FPCA needs at least 2 curves, got {t}"
        )));
    }
    for c in curves {
        if c.as_ref().len() != g {
            return Err(Error::Shape {
                expected: g,
                actual: c.as_ref().len(),
            });
        }
    }
    let weights = grid.trapezoid_weights();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let mut mean = vec![0.0; g];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }

    let x = DMatrix::from_fn(t, g, |i, j| (curves[i].as_ref()[j] - mean[j]) * sqrt_w[j]);
    let cov = (x.transpose() * &x) / t as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();
    let explained_ratio: Vec<f64> = if total > 0.0 {
        spectrum.iter().map(|l| l / total).collect()
    } else {
        let mut r = vec![0.0; g];
        r[0] = 1.0;
        r
    };

    let k = match selection {
        ComponentSelection::Auto => select_num_components(&spectrum),
        ComponentSelection::Fixed(k) => {
            if k == 0 || k > g {
                return Err(Error::Parameter(format!(
                    "component count must lie in [1, {g}], got {k}"
                )));
            }
            k
        }
        ComponentSelection::All => {
            let tol = spectrum[0] * 1e-12 * g as f64;
            spectrum.iter().filter(|&&l| l > tol).count().max(1)
        }
    };

    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let u = eig.eigenvectors.column(i);
            let mut xi: Vec<f64> = u.iter().zip(&sqrt_w).map(|(a, s)| a / s).collect();
            // sign convention: largest-magnitude entry positive
            let pivot = xi
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                xi.iter_mut().for_each(|v| *v = -*v);
            }
            xi
        })
        .collect();

    Ok(FpcaBasis {
        side,
        grid: grid.clone(),
        mean,
        components,
        eigenvalues: spectrum[..k].to_vec(),
        spectrum,
        explained_ratio,
        weights,
    })
}

/// Number of components: the larger of the scree-plot knee and the smallest
/// count reaching 99 % explained variance, and at least one.
pub fn select_num_components(eigenvalues: &[f64]) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if eigenvalues.len() < 2 || !(total > 0.0) {
        return 1;
    }
    let mut acc = 0.0;
    let mut k99 = eigenvalues.len();
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total >= 0.99 {
            k99 = i + 1;
            break;
        }
    }
    let knee = knee_index(eigenvalues).unwrap_or(0);
    knee.max(k99).max(1)
}

/// Kneedle knee (sensitivity 1) of a decreasing convex curve sampled at
/// unit-spaced abscissae. Returns the 0-based index of the knee, which is
/// also the number of components preceding it.
pub fn knee_index(y: &[f64]) -> Option<usize> {
    let n = y.len();
    if n < 3 {
        return None;
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi > lo) {
        return None;
    }
    let step = 1.0 / (n - 1) as f64;
    let diff: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| (1.0 - (v - lo) / (hi - lo)) - i as f64 * step)
        .collect();

    let mut candidate: Option<(usize, f64)> = None;
    for i in 0..n {
        let is_max = i > 0 && i + 1 < n && diff[i] >= diff[i - 1] && diff[i] > diff[i + 1];
        if is_max {
            candidate = Some((i, diff[i] - step));
            continue;
        }
        if let Some((idx, threshold)) = candidate {
            if diff[i] < threshold {
                return Some(idx);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> EvaluationGrid {
        EvaluationGrid::uniform(0.0, 1.0, 51).unwrap()
    }

    #[test]
    fn identical_curves_have_zero_spectrum() {
        let g = grid();
        let c: Vec<f64> = g.prices().iter().map(|p| p * p).collect();
        let b = fit_fpca(
            Side::Supply,
            &g,
            &[c.clone(), c.clone(), c.clone()],
            ComponentSelection::Auto,
        )
        .unwrap();
        assert!(b.spectrum.iter().all(|&l| l.abs() < 1e-20));
        assert!(b.mean.iter().zip(&c).all(|(m, v)| (m - v).abs() < 1e-12));
        assert_eq!(b.dim(), 1);
    }

    #[test]
    fn single_curve_is_rank_error() {
        let g = grid();
        let c = vec![vec![0.0; 51]];
        assert!(matches!(
            fit_fpca(Side::Supply, &g, &c, ComponentSelection::Auto),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn rank_one_family() {
        let g = grid();
        let shape: Vec<f64> = g.prices().iter().map(|p| (3.0 * p).sin()).collect();
        let base: Vec<f64> = g.prices().iter().map(|p| 1.0 + p).collect();
        let curves: Vec<Vec<f64>> = [-2.0, -1.0, 0.5, 2.5]
            .iter()
            .map(|a| base.iter().zip(&shape).map(|(b, s)| b + a * s).collect())
            .collect();
        let b = fit_fpca(Side::Supply, &g, &curves, ComponentSelection::Auto).unwrap();
        assert!(b.spectrum[0] > 0.0);
        assert!(b.spectrum[1] < 1e-12 * b.spectrum[0]);
        assert_eq!(b.dim(), 1);
        // component proportional to the shape
        let w = b.weights();
        let norm: f64 = shape
            .iter()
            .zip(w)
            .map(|(s, w)| s * s * w)
            .sum::<f64>()
            .sqrt();
        let cos: f64 = shape
            .iter()
            .zip(&b.components[0])
            .zip(w)
            .map(|((s, x), w)| s * x * w)
            .sum::<f64>()
            / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_scores_give_mean() {
        let g = grid();
        let curves: Vec<Vec<f64>> = (0..5)
            .map(|k| g.prices().iter().map(|p| (p * k as f64).cos()).collect())
            .collect();
        let b = fit_fpca(Side::Demand, &g, &curves, ComponentSelection::Fixed(3)).unwrap();
        assert_eq!(b.reconstruct(&[0.0; 3]).unwrap(), b.mean);
        assert!(matches!(b.reconstruct(&[0.0; 2]), Err(Error::Shape { .. })));
    }

    #[test]
    fn dominant_eigenvalue_example() {
        assert_eq!(select_num_components(&[100.0, 0.5, 0.3, 0.2]), 1);
        assert_eq!(select_num_components(&[5.0, 0.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn knee_of_sharp_elbow() {
        let y = [10.0, 9.0, 8.0, 1.0, 0.8, 0.6, 0.5, 0.4];
        assert_eq!(knee_index(&y), Some(3));
        // the 99 % rule needs all 8 components here
        assert_eq!(select_num_components(&y), 8);
    }

    #[test]
    fn ninety_nine_percent_threshold() {
        // cumulative ratios 0.5, 0.8, 0.95, 0.99, 1.0
        let y = [50.0, 30.0, 15.0, 4.0, 1.0];
        let total: f64 = y.iter().sum();
        let cum: Vec<f64> = y
            .iter()
            .scan(0.0, |a, v| {
                *a += v;
                Some(*a / total)
            })
            .collect();
        let k99 = cum.iter().position(|&c| c >= 0.99).unwrap() + 1;
        assert_eq!(k99, 4);
        assert!(select_num_components(&y) >= 4);
    }
}
