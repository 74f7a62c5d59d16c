use crate::error::{Error, Result};

/// `asinh((p - median) / mad)`.
pub fn asinh_transform(price: f64, median: f64, mad: f64) -> Result<f64> {
    if !(mad > 0.0) {
        return Err(Error::Scale(mad));
    }
    Ok(((price - median) / mad).asinh())
}

/// Inverse of [`asinh_transform`].
pub fn asinh_inverse(t: f64, median: f64, mad: f64) -> Result<f64> {
    if !(mad > 0.0) {
        return Err(Error::Scale(mad));
    }
    Ok(t.sinh() * mad + median)
}

/// Median/MAD scaling followed by the area hyperbolic sine.
///
/// The MAD is multiplied by 1.4826 so it estimates the standard deviation
/// under normality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsinhScaler {
    pub median: f64,
    pub mad: f64,
}

const MAD_TO_SD: f64 = 1.4826;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl AsinhScaler {
    pub fn fit(prices: &[f64]) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Parameter(
                "cannot scale an empty price series".into(),
            ));
        }
        let mut v = prices.to_vec();
        let med = median(&mut v);
        let mut dev: Vec<f64> = prices.iter().map(|p| (p - med).abs()).collect();
        let mad = MAD_TO_SD * median(&mut dev);
        if !(mad > 0.0) {
            return Err(Error::Scale(mad));
        }
        Ok(Self { median: med, mad })
    }

    pub fn transform(&self, price: f64) -> f64 {
        ((price - self.median) / self.mad).asinh()
    }

    pub fn inverse(&self, t: f64) -> f64 {
        t.sinh() * self.mad + self.median
    }
}
