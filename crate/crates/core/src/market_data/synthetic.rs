//! Synthetic order books with smooth latent factors.
//!
//! The generator mimics the qualitative structure of a zonal day-ahead
//! auction: an inelastic demand block at the price cap plus a small elastic
//! bid stack, renewables and imports offered near zero, and a thermal stack
//! whose price level and spread follow slow autoregressive factors. Every
//! hour clears strictly inside `(0, 300)` EUR/MWh after market coupling.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use super::{
    apply_market_coupling, CouplingRecord, ExogenousRecord, MarketSnapshot, OrderRecord, Side,
};
use crate::curves::{build_quantity_curve, clear_market, restrict_domain};
use crate::error::{Error, Result};
use crate::models::calendar::{DayType, HolidayCalendar};
use crate::seeding::{derive_seed, splitmix};

/// Parameters of the synthetic market. Quantities in MWh, prices in EUR/MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub start: NaiveDate,
    pub base_load: f64,
    pub thermal_orders: usize,
    pub elastic_orders: usize,
    pub renewable_orders: usize,
    pub solar_capacity: f64,
    pub wind_capacity: f64,
    pub thermal_price_level: f64,
    pub thermal_price_spread: f64,
    /// Share of the load bid inelastically at the price cap.
    pub inelastic_share: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date"),
            base_load: 30_000.0,
            thermal_orders: 150,
            elastic_orders: 40,
            renewable_orders: 12,
            solar_capacity: 9_000.0,
            wind_capacity: 4_000.0,
            thermal_price_level: 110.0,
            thermal_price_spread: 35.0,
            inelastic_share: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub snapshots: Vec<MarketSnapshot>,
    pub exogenous: Vec<ExogenousRecord>,
}

impl SyntheticMarket {
    pub fn coupling(&self) -> Vec<CouplingRecord> {
        self.snapshots.iter().map(|s| s.coupling).collect()
    }
}

/// Daily latent state shared by the 24 hours of a day.
#[derive(Debug, Clone, Copy)]
struct DayState {
    level: f64,
    spread: f64,
    demand_shift: f64,
    cloud: f64,
    wind: f64,
    ntc_fr: f64,
    ntc_ch: f64,
}

const MAX_ATTEMPTS: u64 = 64;

/// Generates `days` consecutive days of hourly snapshots and exogenous
/// predictors starting at `config.start` (00:00 UTC). The output depends only
/// on `seed`, `days` and `config`.
pub fn generate_synthetic_market(
    seed: u64,
    days: usize,
    config: &SyntheticConfig,
) -> Result<SyntheticMarket> {
    if days < 8 {
        return Err(Error::Config(format!(
            "synthetic market needs at least 8 days to cover the weekly lag, got {days}"
        )));
    }
    validate(config)?;
    let end = config.start + Duration::days(days as i64);
    let calendar = HolidayCalendar::italian(config.start.year(), end.year());
    let states = latent_states(seed, days);

    let mut snapshots = Vec::with_capacity(days * 24);
    let mut exogenous = Vec::with_capacity(days * 24);
    for (d, state) in states.iter().enumerate() {
        let date = config.start + Duration::days(d as i64);
        let day_type = calendar.day_type(date);
        for h in 0..24 {
            let ts = Utc.from_utc_datetime(&date.and_hms_opt(h as u32, 0, 0).expect("valid hour"));
            let mut generated = None;
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[d as u64, h as u64, attempt]));
                let (snap, exo) = generate_hour(&mut rng, config, state, day_type, date, h, ts);
                if clears_inside(&snap) {
                    generated = Some((snap, exo));
                    break;
                }
            }
            let (snap, exo) = generated.ok_or_else(|| {
                Error::Config(format!(
                    "synthetic generator failed to produce a clearing price inside (0, 300) at {ts}"
                ))
            })?;
            snapshots.push(snap);
            exogenous.push(exo);
        }
    }
    Ok(SyntheticMarket {
        snapshots,
        exogenous,
    })
}

fn validate(c: &SyntheticConfig) -> Result<()> {
    let positive = [
        ("base_load", c.base_load),
        ("thermal_price_level", c.thermal_price_level),
        ("thermal_price_spread", c.thermal_price_spread),
    ];
    for (name, v) in positive {
        if !(v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if c.thermal_orders == 0 || c.elastic_orders == 0 || c.renewable_orders == 0 {
        return Err(Error::Config("order counts must be positive".into()));
    }
    if !(c.inelastic_share > 0.0 && c.inelastic_share < 1.0) {
        return Err(Error::Config(format!(
            "inelastic_share must lie in (0, 1), got {}",
            c.inelastic_share
        )));
    }
    if c.solar_capacity < 0.0 || c.wind_capacity < 0.0 {
        return Err(Error::Config(
            "renewable capacities must be non-negative".into(),
        ));
    }
    Ok(())
}

fn latent_states(seed: u64, days: usize) -> Vec<DayState> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    // stationary starts
    let mut level = z();
    let mut spread = z();
    let mut demand_shift = z();
    let mut cloud = z();
    let mut wind = z();
    let mut fr = z();
    let mut ch = z();
    let mut out = Vec::with_capacity(days);
    for _ in 0..days {
        let state = DayState {
            level,
            spread,
            demand_shift,
            cloud,
            wind,
            ntc_fr: 3_000.0 + 300.0 * fr,
            ntc_ch: 2_000.0 + 200.0 * ch,
        };
        out.push(state);
        let prev_level = level;
        level = 0.97 * level + (1.0 - 0.97f64 * 0.97).sqrt() * z();
        spread = 0.9 * spread + (1.0 - 0.81f64).sqrt() * z();
        demand_shift = 0.6 * demand_shift + 0.5 * prev_level + 0.6 * z();
        cloud = 0.7 * cloud + (1.0 - 0.49f64).sqrt() * z();
        wind = 0.8 * wind + (1.0 - 0.64f64).sqrt() * z();
        fr = 0.9 * fr + (1.0 - 0.81f64).sqrt() * z();
        ch = 0.9 * ch + (1.0 - 0.81f64).sqrt() * z();
    }
    out
}

fn load_shape(h: usize) -> f64 {
    let t = h as f64;
    let morning = (-(t - 10.5).powi(2) / 18.0).exp();
    let evening = (-(t - 19.5).powi(2) / 8.0).exp();
    0.72 + 0.28 * morning + 0.22 * evening
}

fn day_type_factor(t: DayType) -> f64 {
    match t {
        DayType::Working | DayType::Monday => 1.0,
        DayType::Saturday => 0.9,
        DayType::Holiday => 0.8,
    }
}

fn solar_profile(h: usize, date: NaiveDate) -> f64 {
    let season =
        0.75 + 0.25 * (2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 172.0) / 365.25).cos();
    let x = (std::f64::consts::PI * (h as f64 + 0.5 - 6.0) / 13.0).sin();
    season * x.max(0.0)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[allow(clippy::too_many_arguments)]
fn generate_hour(
    rng: &mut ChaCha8Rng,
    c: &SyntheticConfig,
    s: &DayState,
    day_type: DayType,
    date: NaiveDate,
    h: usize,
    ts: DateTime<Utc>,
) -> (MarketSnapshot, ExogenousRecord) {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let annual = 1.0 + 0.08 * (2.0 * std::f64::consts::PI * date.ordinal() as f64 / 365.25).cos();
    let load = c.base_load
        * load_shape(h)
        * day_type_factor(day_type)
        * annual
        * (1.0 + 0.015 * noise.sample(rng));
    let solar =
        c.solar_capacity * solar_profile(h, date) * (0.35 + 0.65 * logistic(1.5 * s.cloud + 0.8));
    let wind = c.wind_capacity * logistic(1.2 * s.wind + 0.3 * noise.sample(rng) - 0.5);
    let res = solar + wind;

    let ntc_fr = s.ntc_fr.max(0.0);
    let ntc_ch = s.ntc_ch.max(0.0);
    let imports = (0.55 * ntc_fr + 0.3 * ntc_ch) * rng.random_range(0.85..1.0);
    let exports = rng.random_range(0.0..400.0);

    let load_fc = (load * (1.0 + 0.01 * noise.sample(rng))).max(0.0);
    let res_fc = (res * (1.0 + 0.05 * noise.sample(rng))).max(0.0);

    let order = |side, price: f64, quantity: f64| OrderRecord {
        timestamp: ts,
        side,
        price,
        quantity,
    };

    // Supply: renewables near zero, capped so demand at zero price still exceeds supply.
    let renewable_volume = res.min(0.85 * load - (imports - exports).max(0.0)).max(1.0);
    let mut supply = Vec::with_capacity(c.renewable_orders + c.thermal_orders + 16);
    let nr = c.renewable_orders;
    for i in 0..nr {
        let price = if i < nr * 2 / 3 {
            0.0
        } else {
            rng.random_range(0.1..10.0)
        };
        supply.push(order(Side::Supply, price, renewable_volume / nr as f64));
    }

    let std_normal = NormalDist::new(0.0, 1.0).expect("unit normal");
    let hour_premium = 12.0 * (load_shape(h) - 0.9);
    let mu = c.thermal_price_level + 25.0 * s.level + hour_premium;
    let sigma = (c.thermal_price_spread + 6.0 * s.spread).max(8.0);
    let thermal_capacity = 1.45 * c.base_load * (1.0 + 0.03 * s.spread);
    let peaker_share = 0.08;
    let nt = c.thermal_orders;
    for i in 0..nt {
        let u = (i as f64 + rng.random_range(0.0..1.0)) / nt as f64;
        let price =
            (mu + sigma * std_normal.inverse_cdf(u.clamp(1e-6, 1.0 - 1e-6))).clamp(0.5, 289.0);
        let q = (1.0 - peaker_share) * thermal_capacity / nt as f64 * rng.random_range(0.6..1.4);
        supply.push(order(Side::Supply, (price * 100.0).round() / 100.0, q));
    }
    let np = (nt / 12).max(1);
    for _ in 0..np {
        let price: f64 = rng.random_range(300.0..3000.0);
        supply.push(order(
            Side::Supply,
            (price * 100.0).round() / 100.0,
            peaker_share * thermal_capacity / np as f64,
        ));
    }

    // Demand: inelastic block at the cap plus an elastic stack.
    let mut demand = Vec::with_capacity(c.elastic_orders + 1);
    demand.push(order(
        Side::Demand,
        super::PRICE_CAP,
        c.inelastic_share * load,
    ));
    let elastic = (1.0 - c.inelastic_share) * load;
    let mu_d = 70.0 + 18.0 * s.demand_shift;
    let ne = c.elastic_orders;
    for i in 0..ne {
        let u = (i as f64 + rng.random_range(0.0..1.0)) / ne as f64;
        let price =
            (mu_d + 30.0 * std_normal.inverse_cdf(u.clamp(1e-6, 1.0 - 1e-6))).clamp(0.5, 280.0);
        demand.push(order(
            Side::Demand,
            (price * 100.0).round() / 100.0,
            elastic / ne as f64 * rng.random_range(0.7..1.3),
        ));
    }

    let coupling = CouplingRecord {
        timestamp: ts,
        imports,
        exports,
    };
    let exo = ExogenousRecord {
        timestamp: ts,
        load_forecast: load_fc,
        ntc_fr,
        ntc_ch,
        res_forecast: res_fc,
    };
    (MarketSnapshot::new(ts, supply, demand, coupling), exo)
}

fn clears_inside(snapshot: &MarketSnapshot) -> bool {
    let adjusted = apply_market_coupling(snapshot);
    let (Ok(s), Ok(d)) = (
        build_quantity_curve(&adjusted.supply_orders, Side::Supply),
        build_quantity_curve(&adjusted.demand_orders, Side::Demand),
    ) else {
        return false;
    };
    let (Ok(s), Ok(d)) = (
        restrict_domain(&s, 0.0, 300.0),
        restrict_domain(&d, 0.0, 300.0),
    ) else {
        return false;
    };
    matches!(clear_market(&s, &d), Ok(cp) if cp.price > 0.0 && cp.price < 300.0)
}
