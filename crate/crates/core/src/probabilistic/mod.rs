//! Probabilistic clearing-price forecasts: residual bootstrap through the
//! curve representation, vertical ensembling across calibration windows and
//! price-based postprocessing benchmarks.

mod error_model;
mod postprocess;
mod simulate;

use std::io::Write;

use chrono::{DateTime, Utc};

pub use error_model::ErrorModel;
pub use postprocess::{
    conformal, idr, normal, postprocess_point_forecasts, qrm, IdrFit, PostprocessMethod, MIN_WINDOW,
};
pub use simulate::{
    point_price, simulate_price_distribution, SimulationOptions, SimulationOutcome,
    DEFAULT_SIMULATIONS, MIN_SIMULATIONS,
};

use crate::error::{Error, Result};

/// Number of reported percentiles (1 % to 99 %).
pub const PERCENTILES: usize = 99;

/// Probability level of percentile index `i` (0-based).
pub fn percentile_level(i: usize) -> f64 {
    (i + 1) as f64 / 100.0
}

/// Quantile of an ascending sample by linear interpolation of the order
/// statistics at plotting positions `i / (n + 1)`, clamped to the sample
/// range.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n + 1) as f64 * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo as usize - 1;
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

/// The 99 percentiles of a sample (sorted in place).
pub fn percentiles(sample: &mut [f64]) -> Vec<f64> {
    sample.sort_by(f64::total_cmp);
    (0..PERCENTILES)
        .map(|i| quantile_sorted(sample, percentile_level(i)))
        .collect()
}

/// A predictive price distribution given by its percentiles 1 to 99.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPriceDistribution {
    quantiles: Vec<f64>,
    pub n_simulations: usize,
}

impl EmpiricalPriceDistribution {
    pub fn from_quantiles(quantiles: Vec<f64>, n_simulations: usize) -> Result<Self> {
        if quantiles.len() != PERCENTILES {
            return Err(Error::Shape {
                expected: PERCENTILES,
                actual: quantiles.len(),
            });
        }
        if quantiles.iter().any(|q| !q.is_finite()) {
            return Err(Error::Parameter("non-finite quantile".into()));
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("quantiles must be non-decreasing".into()));
        }
        Ok(Self {
            quantiles,
            n_simulations,
        })
    }

    /// Percentiles of `sample`, with any crossing removed by sorting.
    pub fn from_sample(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Parameter("empty sample".into()));
        }
        let n = sample.len();
        let q = percentiles(&mut sample);
        Self::from_quantiles(q, n)
    }

    /// Sorts possibly crossing quantile estimates.
    pub fn from_unsorted(mut quantiles: Vec<f64>, n_simulations: usize) -> Result<Self> {
        quantiles.sort_by(f64::total_cmp);
        Self::from_quantiles(quantiles, n_simulations)
    }

    /// Point mass.
    pub fn degenerate(price: f64) -> Self {
        Self {
            quantiles: vec![price; PERCENTILES],
            n_simulations: 1,
        }
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn median(&self) -> f64 {
        self.quantiles[49]
    }

    /// Step cdf placing mass 1/99 on every percentile.
    pub fn cdf(&self, x: f64) -> f64 {
        self.quantiles.partition_point(|q| *q <= x) as f64 / PERCENTILES as f64
    }
}

/// Equal-weight average of the members' cdfs, evaluated at `x`.
pub fn ensemble_cdf(members: &[EmpiricalPriceDistribution], x: f64) -> f64 {
    members.iter().map(|m| m.cdf(x)).sum::<f64>() / members.len() as f64
}

/// Vertical (probability) averaging of the members' cdfs.
///
/// Every member puts mass 1/99 on each of its percentiles, so the average
/// cdf is the empirical cdf of the pooled percentiles. The returned
/// percentiles are its generalized inverse `inf { x : F(x) >= p }`.
pub fn ensemble_vertical_average(
    members: &[EmpiricalPriceDistribution],
) -> Result<EmpiricalPriceDistribution> {
    if members.is_empty() {
        return Err(Error::Parameter("ensemble of zero distributions".into()));
    }
    let mut pooled: Vec<f64> = members
        .iter()
        .flat_map(|m| m.quantiles.iter().copied())
        .collect();
    pooled.sort_by(f64::total_cmp);
    let m = pooled.len();
    let q = (0..PERCENTILES)
        .map(|i| {
            // smallest k with k / m >= p, in exact integer arithmetic
            let k = ((i + 1) * m).div_ceil(100);
            pooled[k.max(1) - 1]
        })
        .collect();
    EmpiricalPriceDistribution::from_quantiles(q, members.iter().map(|d| d.n_simulations).sum())
}

/// Writes `timestamp,p01,...,p99` rows.
pub fn write_quantiles<W: Write>(
    rows: &[(DateTime<Utc>, EmpiricalPriceDistribution)],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend((1..=PERCENTILES).map(|i| format!("p{i:02}")));
    w.write_record(&header)?;
    for (ts, d) in rows {
        let mut rec = vec![ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()];
        rec.extend(d.quantiles.iter().map(|q| q.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<quantile output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plotting_position_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.1), 1.0);
        assert_eq!(quantile_sorted(&s, 0.9), 4.0);
        assert!((quantile_sorted(&s, 0.3) - 1.5).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[7.0], 0.42), 7.0);
    }

    #[test]
    fn identical_members_are_identity() {
        let d =
            EmpiricalPriceDistribution::from_sample((0..500).map(|i| (i as f64).sqrt()).collect())
                .unwrap();
        let e = ensemble_vertical_average(&[d.clone(), d.clone(), d.clone(), d.clone()]).unwrap();
        assert_eq!(e.quantiles(), d.quantiles());
    }

    #[test]
    fn two_point_masses() {
        let a = EmpiricalPriceDistribution::degenerate(10.0);
        let b = EmpiricalPriceDistribution::degenerate(20.0);
        let e = ensemble_vertical_average(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ensemble_cdf(&[a.clone(), b.clone()], 9.9), 0.0);
        assert_eq!(ensemble_cdf(&[a.clone(), b.clone()], 10.0), 0.5);
        assert_eq!(ensemble_cdf(&[a, b], 20.0), 1.0);
        assert_eq!(e.quantiles()[49], 10.0);
        assert_eq!(e.quantiles()[50], 20.0);
    }

    fn random_member(rng: &mut ChaCha8Rng) -> EmpiricalPriceDistribution {
        let loc: f64 = rng.random_range(0.0..200.0);
        let scale: f64 = rng.random_range(0.1..50.0);
        let s = (0..300)
            .map(|_| loc + scale * rng.random::<f64>())
            .collect();
        EmpiricalPriceDistribution::from_sample(s).unwrap()
    }

    #[test]
    fn pooled_cdf_equals_average_cdf_at_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let members: Vec<_> = (0..4).map(|_| random_member(&mut rng)).collect();
            let mut pooled: Vec<f64> = members
                .iter()
                .flat_map(|m| m.quantiles().to_vec())
                .collect();
            pooled.sort_by(f64::total_cmp);
            let e = ensemble_vertical_average(&members).unwrap();
            for _ in 0..1000 {
                let x: f64 = rng.random_range(-10.0..260.0);
                let pooled_cdf = pooled.partition_point(|v| *v <= x) as f64 / pooled.len() as f64;
                assert!((pooled_cdf - ensemble_cdf(&members, x)).abs() < 1e-9);
            }
            // generalized inverse: F(q_p) >= p and F(q_p-) < p
            for (i, q) in e.quantiles().iter().enumerate() {
                let p = percentile_level(i);
                let f = ensemble_cdf(&members, *q);
                let below = pooled.partition_point(|v| *v < *q) as f64 / pooled.len() as f64;
                assert!(f >= p - 1e-12 && below < p + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn ensemble_preserves_dominance(shifts in proptest::collection::vec(0.0f64..30.0, 4), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_member(&mut rng);
            let members: Vec<_> = shifts
                .iter()
                .map(|s| {
                    EmpiricalPriceDistribution::from_quantiles(g.quantiles().iter().map(|q| q + s).collect(), 1).unwrap()
                })
                .collect();
            let e = ensemble_vertical_average(&members).unwrap();
            for (qe, qg) in e.quantiles().iter().zip(g.quantiles()) {
                prop_assert!(qe >= qg);
            }
        }

        #[test]
        fn sample_quantiles_are_sorted(sample in proptest::collection::vec(-500.0f64..3000.0, 1..300)) {
            let d = EmpiricalPriceDistribution::from_sample(sample.clone()).unwrap();
            prop_assert!(d.quantiles().windows(2).all(|w| w[0] <= w[1]));
            let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(d.quantiles()[0] >= lo && d.quantiles()[98] <= hi);
        }
    }

    #[test]
    fn csv_layout() {
        let ts = chrono::DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc);
        let mut buf = Vec::new();
        write_quantiles(
            &[(ts, EmpiricalPriceDistribution::degenerate(5.0))],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("timestamp,p01,p02"));
        assert!(header.ends_with("p99"));
        assert_eq!(header.split(',').count(), 100);
        assert!(lines.next().unwrap().starts_with("2024-01-01T00:00:00Z,5,"));
    }
}
