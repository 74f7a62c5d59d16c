//! Hourly order-book snapshots, exogenous predictors and market-coupling flows.
//!
//! Prices are in EUR/MWh and quantities in MWh. Every snapshot carries the
//! supply offers sorted by non-decreasing price and the demand bids sorted by
//! non-increasing price, which is the merit order used to build the quantity
//! curves in [`crate::curves`].

mod io;
pub mod synthetic;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use io::{
    attach_coupling, parse_coupling, parse_exogenous, parse_order_book, read_coupling,
    read_exogenous, read_order_book, write_coupling, write_exogenous, write_order_book,
    COUPLING_HEADER, EXOGENOUS_HEADER, ORDERS_HEADER,
};
pub use synthetic::{generate_synthetic_market, SyntheticConfig, SyntheticMarket};

/// Lowest admissible bid price on the exchange.
pub const PRICE_FLOOR: f64 = -500.0;
/// Highest admissible bid price on the exchange.
pub const PRICE_CAP: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Supply,
    Demand,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Supply => "supply",
            Side::Demand => "demand",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "supply" => Some(Side::Supply),
            "demand" => Some(Side::Demand),
            _ => None,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRecord {
    pub timestamp: DateTime<Utc>,
    pub side: Side,
    pub price: f64,
    pub quantity: f64,
}

/// Day-ahead predictors known before gate closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExogenousRecord {
    pub timestamp: DateTime<Utc>,
    pub load_forecast: f64,
    pub ntc_fr: f64,
    pub ntc_ch: f64,
    pub res_forecast: f64,
}

impl ExogenousRecord {
    pub const COUNT: usize = 4;

    /// Values in the fixed column order `load_fc, ntc_fr, ntc_ch, res_fc`.
    pub fn values(&self) -> [f64; Self::COUNT] {
        [
            self.load_forecast,
            self.ntc_fr,
            self.ntc_ch,
            self.res_forecast,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRecord {
    pub timestamp: DateTime<Utc>,
    pub imports: f64,
    pub exports: f64,
}

impl CouplingRecord {
    pub fn zero(timestamp: DateTime<Utc>) -> Self {
        Self {
            timestamp,
            imports: 0.0,
            exports: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSnapshot {
    pub timestamp: DateTime<Utc>,
    pub supply_orders: Vec<OrderRecord>,
    pub demand_orders: Vec<OrderRecord>,
    pub coupling: CouplingRecord,
}

impl MarketSnapshot {
    /// Builds a snapshot and sorts both sides into merit order. The sort is
    /// stable so orders at equal prices keep their input order.
    pub fn new(
        timestamp: DateTime<Utc>,
        mut supply_orders: Vec<OrderRecord>,
        mut demand_orders: Vec<OrderRecord>,
        coupling: CouplingRecord,
    ) -> Self {
        supply_orders.sort_by(|a, b| a.price.total_cmp(&b.price));
        demand_orders.sort_by(|a, b| b.price.total_cmp(&a.price));
        Self {
            timestamp,
            supply_orders,
            demand_orders,
            coupling,
        }
    }
}

/// Folds the net cross-border flow into the order book.
///
/// A net import enters as a supply offer at [`PRICE_FLOOR`], a net export as
/// a demand bid at [`PRICE_CAP`], so either is always accepted.
pub fn apply_market_coupling(snapshot: &MarketSnapshot) -> MarketSnapshot {
    let mut out = snapshot.clone();
    let net = snapshot.coupling.imports - snapshot.coupling.exports;
    if net > 0.0 {
        // The floor is the lowest admissible price, so prepending keeps merit order.
        out.supply_orders.insert(
            0,
            OrderRecord {
                timestamp: snapshot.timestamp,
                side: Side::Supply,
                price: PRICE_FLOOR,
                quantity: net,
            },
        );
    } else if net < 0.0 {
        out.demand_orders.insert(
            0,
            OrderRecord {
                timestamp: snapshot.timestamp,
                side: Side::Demand,
                price: PRICE_CAP,
                quantity: -net,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn order(side: Side, price: f64, quantity: f64) -> OrderRecord {
        OrderRecord {
            timestamp: ts(),
            side,
            price,
            quantity,
        }
    }

    fn snapshot(imports: f64, exports: f64) -> MarketSnapshot {
        MarketSnapshot::new(
            ts(),
            vec![
                order(Side::Supply, 20.0, 3.0),
                order(Side::Supply, 10.0, 5.0),
            ],
            vec![
                order(Side::Demand, 30.0, 2.0),
                order(Side::Demand, 50.0, 4.0),
            ],
            CouplingRecord {
                timestamp: ts(),
                imports,
                exports,
            },
        )
    }

    #[test]
    fn snapshot_sorts_merit_order() {
        let s = snapshot(0.0, 0.0);
        let supply: Vec<f64> = s.supply_orders.iter().map(|o| o.price).collect();
        let demand: Vec<f64> = s.demand_orders.iter().map(|o| o.price).collect();
        assert_eq!(supply, vec![10.0, 20.0]);
        assert_eq!(demand, vec![50.0, 30.0]);
    }

    #[test]
    fn net_imports_become_floor_priced_supply() {
        let adjusted = apply_market_coupling(&snapshot(100.0, 40.0));
        assert_eq!(adjusted.supply_orders.len(), 3);
        assert_eq!(adjusted.supply_orders[0].price, -500.0);
        assert_eq!(adjusted.supply_orders[0].quantity, 60.0);
        assert_eq!(adjusted.demand_orders.len(), 2);
    }

    #[test]
    fn balanced_flows_are_identity() {
        let s = snapshot(70.0, 70.0);
        assert_eq!(apply_market_coupling(&s), s);
    }

    #[test]
    fn net_exports_become_capped_demand() {
        let adjusted = apply_market_coupling(&snapshot(0.0, 25.0));
        assert_eq!(adjusted.demand_orders[0].price, 3000.0);
        assert_eq!(adjusted.demand_orders[0].quantity, 25.0);
        assert_eq!(adjusted.supply_orders.len(), 2);
    }
}
