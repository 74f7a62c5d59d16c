//! Merit-order quantity curves and market clearing.
//!
//! A supply curve `Q(p)` is the total quantity offered at prices `<= p`
//! (right-continuous, non-decreasing); a demand curve is the total quantity
//! bid at prices `>= p` (left-continuous, non-increasing). Both are stored as
//! breakpoints `(price, Q(price))` with strictly increasing prices.

use log::debug;

use crate::error::{Error, Result};
use crate::market_data::{OrderRecord, Side, PRICE_CAP, PRICE_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    side: Side,
    breakpoints: Vec<(f64, f64)>,
    domain: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingPoint {
    pub price: f64,
    pub quantity: f64,
}

impl StepCurve {
    /// Builds a curve from breakpoints, validating ordering and monotonicity.
    pub fn from_breakpoints(
        side: Side,
        breakpoints: Vec<(f64, f64)>,
        domain: (f64, f64),
    ) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::EmptyCurve);
        }
        for w in breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Parameter(format!(
                    "breakpoint prices must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            let monotone = match side {
                Side::Supply => w[1].1 >= w[0].1,
                Side::Demand => w[1].1 <= w[0].1,
            };
            if !monotone {
                return Err(Error::Parameter(format!(
                    "{side} breakpoints are not monotone"
                )));
            }
        }
        Ok(Self {
            side,
            breakpoints,
            domain,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Total quantity of the curve (`Q` at the top of the supply stack or the
    /// bottom of the demand stack).
    pub fn total_quantity(&self) -> f64 {
        match self.side {
            Side::Supply => self.breakpoints.last().map_or(0.0, |b| b.1),
            Side::Demand => self.breakpoints.first().map_or(0.0, |b| b.1),
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        let bp = &self.breakpoints;
        match self.side {
            Side::Supply => {
                // last breakpoint with price <= p
                let idx = bp.partition_point(|b| b.0 <= p);
                if idx == 0 {
                    0.0
                } else {
                    bp[idx - 1].1
                }
            }
            Side::Demand => {
                // first breakpoint with price >= p
                let idx = bp.partition_point(|b| b.0 < p);
                bp.get(idx).map_or(0.0, |b| b.1)
            }
        }
    }

    /// Limit of `Q` from the left of `p`.
    pub fn eval_left(&self, p: f64) -> f64 {
        let bp = &self.breakpoints;
        match self.side {
            Side::Supply => {
                let idx = bp.partition_point(|b| b.0 < p);
                if idx == 0 {
                    0.0
                } else {
                    bp[idx - 1].1
                }
            }
            Side::Demand => self.eval(p),
        }
    }

    /// Limit of `Q` from the right of `p`.
    pub fn eval_right(&self, p: f64) -> f64 {
        match self.side {
            Side::Supply => self.eval(p),
            Side::Demand => {
                let bp = &self.breakpoints;
                let idx = bp.partition_point(|b| b.0 <= p);
                bp.get(idx).map_or(0.0, |b| b.1)
            }
        }
    }

    /// Evaluates the curve on sorted prices in a single merge pass.
    pub fn eval_sorted(&self, prices: &[f64]) -> Vec<f64> {
        let bp = &self.breakpoints;
        let mut out = Vec::with_capacity(prices.len());
        let mut i = 0;
        match self.side {
            Side::Supply => {
                for &p in prices {
                    while i < bp.len() && bp[i].0 <= p {
                        i += 1;
                    }
                    out.push(if i == 0 { 0.0 } else { bp[i - 1].1 });
                }
            }
            Side::Demand => {
                for &p in prices {
                    while i < bp.len() && bp[i].0 < p {
                        i += 1;
                    }
                    out.push(bp.get(i).map_or(0.0, |b| b.1));
                }
            }
        }
        out
    }
}

/// Aggregates orders of one side into the quantity curve `Q(p)`; orders at
/// equal prices merge into a single breakpoint.
pub fn build_quantity_curve(orders: &[OrderRecord], side: Side) -> Result<StepCurve> {
    if orders.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(orders.len());
    for o in orders {
        if o.side != side {
            return Err(Error::Parameter(format!(
                "{} order passed to a {side} curve",
                o.side
            )));
        }
        if !(o.quantity > 0.0) || !o.price.is_finite() {
            return Err(Error::Parameter(format!(
                "orders need a finite price and positive quantity, got ({}, {})",
                o.price, o.quantity
            )));
        }
        pairs.push((o.price, o.quantity));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (p, q) in pairs {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += q,
            _ => merged.push((p, q)),
        }
    }
    match side {
        Side::Supply => {
            let mut acc = 0.0;
            for b in merged.iter_mut() {
                acc += b.1;
                b.1 = acc;
            }
        }
        Side::Demand => {
            let mut acc = 0.0;
            for b in merged.iter_mut().rev() {
                acc += b.1;
                b.1 = acc;
            }
        }
    }
    Ok(StepCurve {
        side,
        breakpoints: merged,
        domain: (PRICE_FLOOR, PRICE_CAP),
    })
}

/// Restricts a curve to `[p_min, p_max]`. Mass outside the domain collapses
/// onto the boundary, so `Q` is unchanged on the interior.
pub fn restrict_domain(curve: &StepCurve, p_min: f64, p_max: f64) -> Result<StepCurve> {
    if !(p_min < p_max) {
        return Err(Error::Parameter(format!(
            "restriction needs p_min < p_max, got [{p_min}, {p_max}]"
        )));
    }
    let mut bps = Vec::new();
    match curve.side {
        Side::Supply => {
            let base = curve.eval(p_min);
            if base > 0.0 {
                bps.push((p_min, base));
            }
            bps.extend(
                curve
                    .breakpoints
                    .iter()
                    .filter(|b| b.0 > p_min && b.0 <= p_max)
                    .copied(),
            );
        }
        Side::Demand => {
            bps.extend(
                curve
                    .breakpoints
                    .iter()
                    .filter(|b| b.0 >= p_min && b.0 < p_max)
                    .copied(),
            );
            let top = curve.eval(p_max);
            if top > 0.0 {
                bps.push((p_max, top));
            }
        }
    }
    Ok(StepCurve {
        side: curve.side,
        breakpoints: bps,
        domain: (p_min, p_max),
    })
}

/// Clears the market at the lowest price where `D(p) - S(p)` turns
/// non-positive.
///
/// For step curves the sign change is a jump, so the interpolated root
/// collapses onto the jump price. The quantity is the midpoint of the
/// vertical overlap of the two curves at that price.
pub fn clear_market(supply: &StepCurve, demand: &StepCurve) -> Result<ClearingPoint> {
    if supply.side != Side::Supply || demand.side != Side::Demand {
        return Err(Error::Parameter(
            "clear_market expects (supply, demand)".into(),
        ));
    }
    let p_min = supply.domain.0.max(demand.domain.0);
    let p_max = supply.domain.1.min(demand.domain.1);
    let no_cross = Error::NoIntersection { p_min, p_max };
    let diff = |p: f64| demand.eval(p) - supply.eval(p);
    if !(diff(p_min) > 0.0) || !(diff(p_max) < 0.0) {
        return Err(no_cross);
    }

    let mut prices: Vec<f64> = supply
        .breakpoints
        .iter()
        .chain(&demand.breakpoints)
        .map(|b| b.0)
        .filter(|p| *p > p_min && *p < p_max)
        .collect();
    prices.push(p_min);
    prices.push(p_max);
    prices.sort_by(f64::total_cmp);
    prices.dedup();

    // On (a, b) between consecutive evaluation prices, S = S(a) and D = D(b).
    let mut root = None;
    let mut sign_changes = 0usize;
    let mut positive = true;
    for w in prices.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (p, d) in [(a, demand.eval(b) - supply.eval(a)), (b, diff(b))] {
            if positive && d <= 0.0 {
                sign_changes += 1;
                positive = false;
                root.get_or_insert(p);
            } else if !positive && d > 0.0 {
                sign_changes += 1;
                positive = true;
            }
        }
    }
    let price = root.ok_or(no_cross)?;
    if sign_changes > 1 {
        debug!("clear_market: {sign_changes} sign changes, keeping the lowest-price crossing at {price}");
    }
    let lo = supply.eval_left(price).max(demand.eval_right(price));
    let hi = supply.eval(price).min(demand.eval_left(price));
    Ok(ClearingPoint {
        price,
        quantity: 0.5 * (lo + hi),
    })
}

/// Clears curves sampled on a common price grid, interpolating linearly
/// between the two grid prices that bracket the sign change of `D - S`.
pub fn clear_on_grid(prices: &[f64], supply: &[f64], demand: &[f64]) -> Result<ClearingPoint> {
    let g = prices.len();
    if supply.len() != g {
        return Err(Error::Shape {
            expected: g,
            actual: supply.len(),
        });
    }
    if demand.len() != g {
        return Err(Error::Shape {
            expected: g,
            actual: demand.len(),
        });
    }
    let no_cross = || Error::NoIntersection {
        p_min: prices.first().copied().unwrap_or(f64::NAN),
        p_max: prices.last().copied().unwrap_or(f64::NAN),
    };
    if g < 2 {
        return Err(no_cross());
    }
    let mut prev = demand[0] - supply[0];
    if !(prev > 0.0) {
        return Err(no_cross());
    }
    for i in 1..g {
        let d = demand[i] - supply[i];
        if d <= 0.0 {
            if d == 0.0 {
                return Ok(ClearingPoint {
                    price: prices[i],
                    quantity: supply[i],
                });
            }
            let t = prev / (prev - d);
            return Ok(ClearingPoint {
                price: prices[i - 1] + t * (prices[i] - prices[i - 1]),
                quantity: supply[i - 1] + t * (supply[i] - supply[i - 1]),
            });
        }
        prev = d;
    }
    Err(no_cross())
}
