use crate::error::{Error, Result};
use crate::models::HOURS;

/// Hour-specific location and scale of score forecast errors, with
/// standardized residuals pooled across hours so that all hours share one
/// correlation structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    /// `mean[h][k]`
    pub mean: Vec<Vec<f64>>,
    /// `variance[h][k]` (marginal variances; the scale matrix is diagonal)
    pub variance: Vec<Vec<f64>>,
    /// Standardized residual vectors of every (day, hour) of the window.
    pub pool: Vec<Vec<f64>>,
}

impl ErrorModel {
    /// Estimates the model from `residuals[day][hour][component]`.
    pub fn estimate(residuals: &[Vec<Vec<f64>>]) -> Result<Self> {
        let w = residuals.len();
        if w < 2 {
            return Err(Error::Window(w));
        }
        let k = residuals[0].first().map_or(0, Vec::len);
        for day in residuals {
            if day.len() != HOURS {
                return Err(Error::Shape {
                    expected: HOURS,
                    actual: day.len(),
                });
            }
            if let Some(r) = day.iter().find(|r| r.len() != k) {
                return Err(Error::Shape {
                    expected: k,
                    actual: r.len(),
                });
            }
        }
        let mut mean = vec![vec![0.0; k]; HOURS];
        let mut variance = vec![vec![0.0; k]; HOURS];
        for h in 0..HOURS {
            for c in 0..k {
                let m = residuals.iter().map(|d| d[h][c]).sum::<f64>() / w as f64;
                let v = residuals.iter().map(|d| (d[h][c] - m).powi(2)).sum::<f64>() / w as f64;
                if !(v > 1e-24 * m.abs().max(1.0).powi(2)) {
                    return Err(Error::DegenerateDimension {
                        hour: h,
                        component: c,
                    });
                }
                mean[h][c] = m;
                variance[h][c] = v;
            }
        }
        let pool = residuals
            .iter()
            .flat_map(|d| d.iter().enumerate())
            .map(|(h, r)| {
                (0..k)
                    .map(|c| (r[c] - mean[h][c]) / variance[h][c].sqrt())
                    .collect()
            })
            .collect();
        Ok(Self {
            mean,
            variance,
            pool,
        })
    }

    /// Assembles a model from known parts. Zero variances are allowed.
    pub fn from_parts(
        mean: Vec<Vec<f64>>,
        variance: Vec<Vec<f64>>,
        pool: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if mean.len() != HOURS || variance.len() != HOURS {
            return Err(Error::Shape {
                expected: HOURS,
                actual: mean.len().min(variance.len()),
            });
        }
        let k = mean[0].len();
        let bad = mean
            .iter()
            .chain(&variance)
            .chain(&pool)
            .find(|v| v.len() != k);
        if let Some(v) = bad {
            return Err(Error::Shape {
                expected: k,
                actual: v.len(),
            });
        }
        if pool.is_empty() {
            return Err(Error::Parameter("empty residual pool".into()));
        }
        if variance.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::Parameter("variances must be non-negative".into()));
        }
        Ok(Self {
            mean,
            variance,
            pool,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean[0].len()
    }

    /// `mu_h + V_h^{1/2} eta` for pool entry `index`.
    pub fn error(&self, hour: usize, index: usize) -> Vec<f64> {
        let eta = &self.pool[index];
        (0..self.dim())
            .map(|c| self.mean[hour][c] + self.variance[hour][c].sqrt() * eta[c])
            .collect()
    }
}
