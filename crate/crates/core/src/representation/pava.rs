//! Pool-adjacent-violators: least-squares projection onto monotone sequences.

use crate::market_data::Side;
use crate::smoothing::SmoothCurve;

/// Projects `y` onto non-decreasing sequences with equal weights in O(n).
pub fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    // stack of blocks (sum, count)
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        let mut s = v;
        let mut c = 1usize;
        while let (Some(&ps), Some(&pc)) = (sums.last(), counts.last()) {
            // merge while the previous block mean exceeds the current one
            if ps * c as f64 > s * pc as f64 {
                s += ps;
                c += pc;
                sums.pop();
                counts.pop();
            } else {
                break;
            }
        }
        sums.push(s);
        counts.push(c);
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in sums.into_iter().zip(counts) {
        let m = s / c as f64;
        out.extend(std::iter::repeat_n(m, c));
    }
    out
}

/// Weighted projection onto non-decreasing sequences.
pub fn isotonic_increasing_weighted(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len(), "values and weights differ in length");
    // stack of blocks (weighted mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        let mut b = (v, wt, 1usize);
        while let Some(&(m, pw, pl)) = blocks.last() {
            if m > b.0 {
                let tw = pw + b.1;
                b = ((m * pw + b.0 * b.1) / tw, tw, pl + b.2);
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push(b);
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Projects `y` onto non-increasing sequences.
pub fn isotonic_decreasing(y: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    isotonic_increasing(&neg).into_iter().map(|v| -v).collect()
}

/// Monotone projection matching the side: non-decreasing supply,
/// non-increasing demand.
pub fn enforce_monotonicity(curve: &SmoothCurve) -> SmoothCurve {
    let values = match curve.side {
        Side::Supply => isotonic_increasing(&curve.values),
        Side::Demand => isotonic_decreasing(&curve.values),
    };
    SmoothCurve {
        side: curve.side,
        values,
    }
}

/// Largest monotonicity violation of a curve, zero when already monotone.
pub fn max_violation(side: Side, values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| match side {
            Side::Supply => w[0] - w[1],
            Side::Demand => w[1] - w[0],
        })
        .fold(0.0, f64::max)
}
