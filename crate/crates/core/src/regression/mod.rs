//! LASSO regression: LARS path with AIC selection of the penalty, coordinate
//! descent at the selected penalty, and a variance-stabilizing transform.
//!
//! Every fit works on internally standardized features (zero mean, unit
//! population variance) with an unpenalized intercept. Reported coefficients
//! are mapped back to the original feature scale.

mod cd;
mod lars;
mod transform;

use nalgebra::{DMatrix, DVector};

pub use cd::coordinate_descent;
pub use lars::{lars_path, select_knot_by_aic, LarsPath, PathKnot};
pub use transform::{asinh_inverse, asinh_transform, AsinhScaler};

use crate::error::{Error, Result};

/// Features with named columns, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if columns.len() != x.ncols() {
            return Err(Error::Shape {
                expected: x.ncols(),
                actual: columns.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::Parameter(format!("duplicate column name {c:?}")));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "design matrix contains non-finite values".into(),
            ));
        }
        Ok(Self { columns, x })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }
}

/// Coefficients on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Column means used for standardization.
    pub center: Vec<f64>,
    /// Column population standard deviations (0 for excluded constant columns).
    pub scale: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::Shape {
                expected: self.coefficients.len(),
                actual: row.len(),
            });
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>())
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Standardized copy of a design shared by several responses.
///
/// Columns with zero variance carry no information and are left out of the
/// optimization; their coefficients are reported as zero.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    n: usize,
    p: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// indices of the columns kept in `z`
    kept: Vec<usize>,
    z: DMatrix<f64>,
    /// `Z^T Z / n`
    gram: DMatrix<f64>,
}

impl StandardizedDesign {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::Parameter(format!(
                "a regression needs at least 2 observations, got {n}"
            )));
        }
        let mut center = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        let mut kept = Vec::new();
        for j in 0..p {
            let col = x.column(j);
            let m = col.mean();
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            center.push(m);
            if sd > 1e-12 * m.abs().max(1.0) {
                scale.push(sd);
                kept.push(j);
            } else {
                scale.push(0.0);
            }
        }
        let z = DMatrix::from_fn(n, kept.len(), |i, k| {
            let j = kept[k];
            (x[(i, j)] - center[j]) / scale[j]
        });
        let gram = (z.transpose() * &z) / n as f64;
        Ok(Self {
            n,
            p,
            center,
            scale,
            kept,
            z,
            gram,
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn standardized(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Centered response and `Z^T y_c / n`.
    fn correlations(&self, y: &[f64]) -> Result<(f64, DVector<f64>, f64)> {
        if y.len() != self.n {
            return Err(Error::Shape {
                expected: self.n,
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "response contains non-finite values".into(),
            ));
        }
        let ybar = y.iter().sum::<f64>() / self.n as f64;
        let yc = DVector::from_iterator(self.n, y.iter().map(|v| v - ybar));
        let yy = yc.norm_squared() / self.n as f64;
        let y_max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if yy.sqrt() <= 1e-12 * y_max {
            // constant response up to rounding
            return Ok((ybar, DVector::zeros(self.kept.len()), 0.0));
        }
        let xty = self.z.tr_mul(&yc) / self.n as f64;
        Ok((ybar, xty, yy))
    }

    /// LARS-lasso path of `y` on this design.
    pub fn path(&self, y: &[f64]) -> Result<LarsPath> {
        let (_, xty, yy) = self.correlations(y)?;
        Ok(lars_path(&self.gram, &xty, yy, self.n))
    }

    /// Penalty minimizing AIC over the path knots; infinite when `y` is constant.
    pub fn lambda_by_aic(&self, y: &[f64]) -> Result<f64> {
        let path = self.path(y)?;
        Ok(select_knot_by_aic(&path).map_or(f64::INFINITY, |k| path.knots[k].lambda))
    }

    /// Coordinate-descent fit at a fixed penalty, optionally warm-started
    /// from standardized coefficients.
    pub fn fit(&self, y: &[f64], lambda: f64, warm_start: Option<&[f64]>) -> Result<LassoFit> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        let (ybar, xty, yy) = self.correlations(y)?;
        let beta_std = if lambda.is_infinite() || self.kept.is_empty() {
            vec![0.0; self.kept.len()]
        } else {
            coordinate_descent(&self.gram, &xty, yy, lambda, warm_start)?
        };
        Ok(self.unstandardize(&beta_std, ybar, lambda))
    }

    /// Selects the penalty by AIC over the LARS path and refits it by
    /// coordinate descent, warm-started at the knot solution.
    pub fn fit_aic(&self, y: &[f64]) -> Result<LassoFit> {
        let (ybar, xty, yy) = self.correlations(y)?;
        let path = lars_path(&self.gram, &xty, yy, self.n);
        let Some(k) = select_knot_by_aic(&path) else {
            return Ok(self.unstandardize(&vec![0.0; self.kept.len()], ybar, f64::INFINITY));
        };
        let knot = &path.knots[k];
        let beta = match coordinate_descent(&self.gram, &xty, yy, knot.lambda, Some(&knot.beta)) {
            Ok(b) => b,
            // the knot is itself a lasso solution at its penalty
            Err(Error::Convergence { max_change, .. }) => {
                log::debug!(
                    "coordinate descent stalled (max change {max_change:e}); keeping the LARS knot"
                );
                knot.beta.clone()
            }
            Err(e) => return Err(e),
        };
        Ok(self.unstandardize(&beta, ybar, knot.lambda))
    }

    fn unstandardize(&self, beta_std: &[f64], ybar: f64, lambda: f64) -> LassoFit {
        let mut coefficients = vec![0.0; self.p];
        let mut intercept = ybar;
        for (k, &j) in self.kept.iter().enumerate() {
            let b = beta_std[k] / self.scale[j];
            coefficients[j] = b;
            intercept -= b * self.center[j];
        }
        LassoFit {
            coefficients,
            intercept,
            lambda,
            center: self.center.clone(),
            scale: self.scale.clone(),
        }
    }
}

/// Penalty selected by AIC over the LARS-lasso path of `y` on `x`.
pub fn lars_lambda_by_aic(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    StandardizedDesign::new(x)?.lambda_by_aic(y)
}

/// Minimizes `(1/2n)|y - b0 - Z b|^2 + lambda |b|_1` on standardized features.
pub fn fit_lasso_cd(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    StandardizedDesign::new(x)?.fit(y, lambda, None)
}
