use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 20_000;
const KKT_TOLERANCE: f64 = 1e-10;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/2)(yy - 2 b.xty + b.G b) + lambda |b|_1` written with `r = xty - G b`.
fn objective(beta: &[f64], xty: &DVector<f64>, r: &[f64], yy: f64, lambda: f64) -> f64 {
    let mut bx = 0.0;
    let mut br = 0.0;
    let mut l1 = 0.0;
    for j in 0..beta.len() {
        bx += beta[j] * xty[j];
        br += beta[j] * r[j];
        l1 += beta[j].abs();
    }
    0.5 * (yy - bx - br) + lambda * l1
}

/// Largest violation of the lasso optimality conditions `|r_j| <= lambda`
/// (zero coefficients) and `r_j = lambda sign(b_j)` (active ones).
fn kkt_violation(beta: &[f64], r: &[f64], lambda: f64) -> f64 {
    beta.iter()
        .zip(r)
        .map(|(b, r)| {
            if *b == 0.0 {
                (r.abs() - lambda).max(0.0)
            } else {
                (r - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent on the covariance form of the lasso problem,
/// given the Gram matrix `G = Z^T Z / n`, `xty = Z^T y / n` and
/// `yy = |y|^2 / n`. Stops once no coefficient moves by more than `1e-8`
/// or the optimality conditions hold to relative precision `1e-10`.
pub fn coordinate_descent(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    yy: f64,
    lambda: f64,
    warm_start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let p = xty.len();
    let mut beta = match warm_start {
        Some(b) if b.len() == p => b.to_vec(),
        Some(b) => {
            return Err(Error::Shape {
                expected: p,
                actual: b.len(),
            })
        }
        None => vec![0.0; p],
    };
    // r_j = xty_j - (G beta)_j
    let mut r: Vec<f64> = (0..p)
        .map(|j| xty[j] - (0..p).map(|k| gram[(j, k)] * beta[k]).sum::<f64>())
        .collect();
    let mut previous = if cfg!(debug_assertions) {
        objective(&beta, xty, &r, yy, lambda)
    } else {
        0.0
    };
    // flat directions (p > n) let coefficients drift long after optimality
    let kkt_tol = KKT_TOLERANCE * lambda.max(yy.sqrt()).max(f64::MIN_POSITIVE);
    if kkt_violation(&beta, &r, lambda) <= kkt_tol {
        return Ok(beta);
    }
    let mut max_change = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        max_change = 0.0f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(r[j] + gjj * old, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                for (rk, g) in r.iter_mut().zip(gram.column(j).iter()) {
                    *rk -= delta * g;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let current = objective(&beta, xty, &r, yy, lambda);
            debug_assert!(
                current <= previous + 1e-10 * (previous.abs() + yy + 1.0),
                "objective increased from {previous} to {current}"
            );
            previous = current;
        }
        if max_change < TOLERANCE || kkt_violation(&beta, &r, lambda) <= kkt_tol {
            return Ok(beta);
        }
    }
    Err(Error::Convergence {
        sweeps: MAX_SWEEPS,
        max_change,
    })
}
