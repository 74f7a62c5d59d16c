use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EmpiricalPriceDistribution, ErrorModel};
use crate::curves::clear_on_grid;
use crate::error::{Error, Result};
use crate::representation::{isotonic_decreasing, isotonic_increasing, BasisPair};

pub const MIN_SIMULATIONS: usize = 1000;
pub const DEFAULT_SIMULATIONS: usize = 5000;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    pub simulations: usize,
    pub seed: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            simulations: DEFAULT_SIMULATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub distribution: EmpiricalPriceDistribution,
    /// Draws whose curves did not intersect and were redrawn.
    pub discarded: usize,
}

/// Clearing price of the monotone curves reconstructed from `scores`.
pub fn point_price(bases: &BasisPair, scores: &[f64]) -> Result<f64> {
    let (s, d) = bases.reconstruct(scores)?;
    let s = isotonic_increasing(&s);
    let d = isotonic_decreasing(&d);
    Ok(clear_on_grid(bases.supply.grid().prices(), &s, &d)?.price)
}

/// Monte Carlo clearing-price distribution of `hour` around the point
/// forecast `scores`.
///
/// Draw `i` uses its own ChaCha stream, so the result does not depend on
/// how draws are scheduled across threads. A draw whose curves do not
/// intersect is redrawn from the same stream.
pub fn simulate_price_distribution(
    scores: &[f64],
    hour: usize,
    model: &ErrorModel,
    bases: &BasisPair,
    options: SimulationOptions,
) -> Result<SimulationOutcome> {
    let n = options.simulations;
    if n < MIN_SIMULATIONS {
        return Err(Error::Parameter(format!(
            "at least {MIN_SIMULATIONS} simulations are required, got {n}"
        )));
    }
    if model.dim() != bases.dim() || scores.len() != bases.dim() {
        return Err(Error::Shape {
            expected: bases.dim(),
            actual: if model.dim() != bases.dim() {
                model.dim()
            } else {
                scores.len()
            },
        });
    }
    let pool = model.pool.len();
    let draws: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(i as u64);
            let mut last = None;
            for attempt in 0..MAX_REDRAWS {
                let e = model.error(hour, rng.random_range(0..pool));
                let y: Vec<f64> = scores.iter().zip(&e).map(|(a, b)| a + b).collect();
                match point_price(bases, &y) {
                    Ok(p) => return Ok((p, attempt)),
                    Err(err @ Error::NoIntersection { .. }) => last = Some(err),
                    Err(err) => return Err(err),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect::<Result<_>>()?;
    let discarded = draws.iter().map(|d| d.1).sum::<usize>();
    if discarded * 10 > n {
        log::warn!("hour {hour}: {discarded} of {n} simulated curve pairs did not intersect and were redrawn");
    } else if discarded > 0 {
        log::debug!("hour {hour}: redrew {discarded} non-intersecting curve pairs");
    }
    let mut distribution =
        EmpiricalPriceDistribution::from_sample(draws.into_iter().map(|d| d.0).collect())?;
    distribution.n_simulations = n;
    Ok(SimulationOutcome {
        distribution,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Side;
    use crate::models::HOURS;
    use crate::representation::{fit_fpca, ComponentSelection, CurveBasis};
    use crate::smoothing::EvaluationGrid;
    use rand_distr::{Distribution, StandardNormal};

    /// Supply `1000 + c + 10p` and demand `5000 + e - 10p` with random level
    /// shifts, so one FPCA component per side captures each shift exactly.
    fn linear_bases() -> BasisPair {
        let grid = EvaluationGrid::default_domain();
        let shifts = [-50.0, -20.0, 0.0, 15.0, 55.0];
        let s: Vec<Vec<f64>> = shifts
            .iter()
            .map(|c| {
                grid.prices()
                    .iter()
                    .map(|p| 1000.0 + c + 10.0 * p)
                    .collect()
            })
            .collect();
        let d: Vec<Vec<f64>> = shifts
            .iter()
            .map(|c| {
                grid.prices()
                    .iter()
                    .map(|p| 5000.0 - 2.0 * c - 10.0 * p)
                    .collect()
            })
            .collect();
        let sb = fit_fpca(Side::Supply, &grid, &s, ComponentSelection::Fixed(1)).unwrap();
        let db = fit_fpca(Side::Demand, &grid, &d, ComponentSelection::Fixed(1)).unwrap();
        BasisPair::new(CurveBasis::Fpca(sb), CurveBasis::Fpca(db)).unwrap()
    }

    fn gaussian_model(sd: [f64; 2], pool: usize, seed: u64) -> ErrorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<Vec<f64>> = (0..pool)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        ErrorModel::from_parts(
            vec![vec![0.0; 2]; HOURS],
            vec![vec![sd[0] * sd[0], sd[1] * sd[1]]; HOURS],
            pool,
        )
        .unwrap()
    }

    #[test]
    fn zero_variance_collapses_to_point_price() {
        let b = linear_bases();
        let y = vec![0.0, 0.0];
        let p0 = point_price(&b, &y).unwrap();
        let mut m = gaussian_model([0.0, 0.0], 50, 1);
        let out = simulate_price_distribution(
            &y,
            3,
            &m,
            &b,
            SimulationOptions {
                simulations: 1000,
                seed: 5,
            },
        )
        .unwrap();
        assert!(out.distribution.quantiles().iter().all(|q| *q == p0));
        // degenerate pool {0} with non-zero scale
        m = ErrorModel::from_parts(
            vec![vec![0.0; 2]; HOURS],
            vec![vec![4.0; 2]; HOURS],
            vec![vec![0.0; 2]],
        )
        .unwrap();
        let out = simulate_price_distribution(
            &y,
            3,
            &m,
            &b,
            SimulationOptions {
                simulations: 1000,
                seed: 5,
            },
        )
        .unwrap();
        assert!(out.distribution.quantiles().iter().all(|q| *q == p0));
    }

    #[test]
    fn linear_clearing_median_matches_closed_form() {
        let b = linear_bases();
        let y = vec![0.0, 0.0];
        // mean curves cross where 1000 + 10p = 5000 - 10p
        let p0 = point_price(&b, &y).unwrap();
        assert!((p0 - 200.0).abs() < 1e-9, "{p0}");
        // a score s shifts the curve by s / sqrt(300) on [0, 300]
        let sd = [60.0 * 300f64.sqrt(), 60.0 * 300f64.sqrt()];
        let n = 10_000;
        let pool = 20_000;
        let m = gaussian_model(sd, pool, 2);
        let out = simulate_price_distribution(
            &y,
            0,
            &m,
            &b,
            SimulationOptions {
                simulations: n,
                seed: 9,
            },
        )
        .unwrap();
        // price = 200 + (demand shift - supply shift) / 20, sd = 60 * sqrt(2) / 20
        let sigma = 60.0 * 2f64.sqrt() / 20.0;
        let se = 1.2533 * sigma * (1.0 / n as f64 + 1.0 / pool as f64).sqrt();
        let med = out.distribution.median();
        assert!(
            (med - 200.0).abs() < 3.0 * se,
            "median {med}, tolerance {}",
            3.0 * se
        );
        assert_eq!(out.discarded, 0);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let b = linear_bases();
        let m = gaussian_model([300.0, 500.0], 500, 3);
        let opts = SimulationOptions {
            simulations: 10_000,
            seed: 11,
        };
        let a = simulate_price_distribution(&[10.0, -5.0], 7, &m, &b, opts).unwrap();
        let c = simulate_price_distribution(&[10.0, -5.0], 7, &m, &b, opts).unwrap();
        assert_eq!(a, c);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let d =
            pool.install(|| simulate_price_distribution(&[10.0, -5.0], 7, &m, &b, opts).unwrap());
        assert_eq!(a, d);
    }

    #[test]
    fn too_few_simulations_rejected() {
        let b = linear_bases();
        let m = gaussian_model([1.0, 1.0], 10, 4);
        let r = simulate_price_distribution(
            &[0.0, 0.0],
            0,
            &m,
            &b,
            SimulationOptions {
                simulations: 999,
                seed: 0,
            },
        );
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
