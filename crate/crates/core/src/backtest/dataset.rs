//! Daily curve data: coupled order books turned into grid samples, smoothed
//! with one bandwidth per side, alongside clearing prices and predictors.

use std::collections::HashMap;
use std::ops::Range;

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use rayon::prelude::*;

use crate::curves::{build_quantity_curve, clear_market};
use crate::error::{Error, Result};
use crate::market_data::{apply_market_coupling, ExogenousRecord, MarketSnapshot, Side};
use crate::models::{HolidayCalendar, HOURS};
use crate::smoothing::{
    default_bandwidths, select_global_bandwidth, EvaluationGrid, KernelSmoother,
};

const R: usize = ExogenousRecord::COUNT;

/// Hourly market data grouped into whole days (possibly with missing days).
#[derive(Debug, Clone)]
pub struct Dataset {
    grid: EvaluationGrid,
    calendar: HolidayCalendar,
    days: Vec<NaiveDate>,
    /// `prices[day * 24 + hour]`, cleared on the full price domain
    prices: Vec<f64>,
    /// `exogenous[(day * 24 + hour) * R + j]`
    exogenous: Vec<f64>,
    /// `curves[side][day * 24 + hour]`, grid samples (smoothed once
    /// [`Dataset::smooth`] has run)
    curves: [Vec<Vec<f64>>; 2],
    bandwidths: Option<(f64, f64)>,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Supply => 0,
        Side::Demand => 1,
    }
}

struct Hour {
    price: f64,
    supply: Vec<f64>,
    demand: Vec<f64>,
}

fn process_hour(snapshot: &MarketSnapshot, grid: &EvaluationGrid) -> Result<Hour> {
    let coupled = apply_market_coupling(snapshot);
    let supply = build_quantity_curve(&coupled.supply_orders, Side::Supply)?;
    let demand = build_quantity_curve(&coupled.demand_orders, Side::Demand)?;
    let price = clear_market(&supply, &demand)?.price;
    Ok(Hour {
        price,
        supply: grid.sample(&supply),
        demand: grid.sample(&demand),
    })
}

impl Dataset {
    /// Groups hourly snapshots into UTC days. Every day present must have all
    /// 24 hours and every hour an exogenous record; days may be missing.
    pub fn from_market(
        snapshots: &[MarketSnapshot],
        exogenous: &[ExogenousRecord],
        grid: EvaluationGrid,
        calendar: HolidayCalendar,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Input("no order-book snapshots".into()));
        }
        let mut sorted: Vec<&MarketSnapshot> = snapshots.iter().collect();
        sorted.sort_by_key(|s| s.timestamp);
        let exo: HashMap<DateTime<Utc>, [f64; R]> = exogenous
            .iter()
            .map(|e| (e.timestamp, e.values()))
            .collect();

        let mut days = Vec::new();
        let mut groups: Vec<Vec<&MarketSnapshot>> = Vec::new();
        for s in sorted {
            let date = s.timestamp.date_naive();
            if days.last() != Some(&date) {
                days.push(date);
                groups.push(Vec::with_capacity(HOURS));
            }
            groups.last_mut().expect("group exists").push(s);
        }
        let mut missing = Vec::new();
        for (date, group) in days.iter().zip(&groups) {
            let present: Vec<u32> = group.iter().map(|s| s.timestamp.hour()).collect();
            if present.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Input(format!("duplicate hourly snapshot on {date}")));
            }
            for h in 0..HOURS {
                if !present.contains(&(h as u32)) {
                    missing.push(timestamp(*date, h));
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Gap { missing });
        }

        let flat: Vec<&MarketSnapshot> = groups.into_iter().flatten().collect();
        let mut exogenous = Vec::with_capacity(flat.len() * R);
        let mut missing = Vec::new();
        for s in &flat {
            match exo.get(&s.timestamp) {
                Some(v) => exogenous.extend_from_slice(v),
                None => missing.push(s.timestamp),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Gap { missing });
        }
        let hours: Vec<Hour> = flat
            .par_iter()
            .map(|s| {
                process_hour(s, &grid).map_err(|e| Error::Day {
                    day: s.timestamp.date_naive(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let mut prices = Vec::with_capacity(hours.len());
        let mut supply = Vec::with_capacity(hours.len());
        let mut demand = Vec::with_capacity(hours.len());
        for h in hours {
            prices.push(h.price);
            supply.push(h.supply);
            demand.push(h.demand);
        }
        Ok(Self {
            grid,
            calendar,
            days,
            prices,
            exogenous,
            curves: [supply, demand],
            bandwidths: None,
        })
    }

    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    pub fn calendar(&self) -> &HolidayCalendar {
        &self.calendar
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.days.binary_search(&date).ok()
    }

    pub fn price(&self, day: usize, hour: usize) -> f64 {
        self.prices[day * HOURS + hour]
    }

    pub fn exogenous(&self, day: usize, hour: usize) -> &[f64] {
        let i = (day * HOURS + hour) * R;
        &self.exogenous[i..i + R]
    }

    /// Grid samples of a curve; smoothed once [`Dataset::smooth`] has run.
    pub fn curve(&self, side: Side, day: usize, hour: usize) -> &[f64] {
        &self.curves[side_index(side)][day * HOURS + hour]
    }

    /// Curves of both sides for the days `days` in chronological order.
    pub fn curves(&self, side: Side, days: Range<usize>) -> &[Vec<f64>] {
        &self.curves[side_index(side)][days.start * HOURS..days.end * HOURS]
    }

    pub fn bandwidths(&self) -> Option<(f64, f64)> {
        self.bandwidths
    }

    /// Global GCV bandwidth per side from the 24 raw curves of dataset day `day`.
    pub fn select_bandwidths(&self, day: usize) -> Result<(f64, f64)> {
        let days = day..day + 1;
        if self.bandwidths.is_some() {
            return Err(Error::Parameter("curves are already smoothed".into()));
        }
        let candidates = default_bandwidths();
        let s = select_global_bandwidth(
            &self.grid,
            self.curves(Side::Supply, days.clone()),
            &candidates,
        )?;
        let d = select_global_bandwidth(&self.grid, self.curves(Side::Demand, days), &candidates)?;
        Ok((s, d))
    }

    /// Replaces every raw curve by its kernel-smoothed version.
    pub fn smooth(&mut self, bandwidths: (f64, f64)) -> Result<()> {
        if self.bandwidths.is_some() {
            return Err(Error::Parameter("curves are already smoothed".into()));
        }
        for (side, h) in [(0, bandwidths.0), (1, bandwidths.1)] {
            let smoother = KernelSmoother::new(&self.grid, h)?;
            self.curves[side]
                .par_iter_mut()
                .try_for_each(|c| -> Result<()> {
                    *c = smoother.apply(c)?;
                    Ok(())
                })?;
        }
        self.bandwidths = Some(bandwidths);
        Ok(())
    }

    /// Calendar days in `[from, to]` that have no data.
    pub fn missing_days(&self, from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut d = from;
        while d <= to {
            if self.index_of(d).is_none() {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    }

    /// Index range of the consecutive days `[date - before, date]`, or the
    /// days missing from it.
    pub fn window(&self, date: NaiveDate, before: usize) -> Result<Range<usize>> {
        let from = date - Duration::days(before as i64);
        let missing = self.missing_days(from, date);
        if !missing.is_empty() {
            return Err(Error::WindowGap { days: missing });
        }
        let end = self.index_of(date).expect("date present") + 1;
        Ok(end - before - 1..end)
    }
}

fn timestamp(date: NaiveDate, hour: usize) -> DateTime<Utc> {
    date.and_hms_opt(hour as u32, 0, 0)
        .expect("valid hour")
        .and_utc()
}
