//! Day-by-hour panels of targets and predictors, and audited read access.

use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;

use super::calendar::{CalendarDummies, HolidayCalendar};
use crate::error::{Error, Result};

pub const HOURS: usize = 24;

/// Consecutive days of hourly targets `y_{d,h}` (dimension `k`), hourly
/// exogenous predictors `x_{d,h}` (dimension `r`) and daily dummies `z_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    days: Vec<NaiveDate>,
    k: usize,
    r: usize,
    targets: Vec<f64>,
    exogenous: Vec<f64>,
    dummies: Vec<[f64; CalendarDummies::COUNT]>,
}

impl Panel {
    /// `targets` and `exogenous` are laid out day-major, then hour, then
    /// component. Unknown targets (e.g. the forecast day) may be NaN.
    pub fn new(
        days: Vec<NaiveDate>,
        k: usize,
        r: usize,
        targets: Vec<f64>,
        exogenous: Vec<f64>,
        calendar: &HolidayCalendar,
    ) -> Result<Self> {
        for w in days.windows(2) {
            if w[1] != w[0].succ_opt().unwrap_or(w[0]) {
                return Err(Error::Parameter(format!(
                    "panel days must be consecutive ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let n = days.len();
        if targets.len() != n * HOURS * k {
            return Err(Error::Shape {
                expected: n * HOURS * k,
                actual: targets.len(),
            });
        }
        if exogenous.len() != n * HOURS * r {
            return Err(Error::Shape {
                expected: n * HOURS * r,
                actual: exogenous.len(),
            });
        }
        let dummies = days.iter().map(|d| calendar.dummies(*d).0).collect();
        Ok(Self {
            days,
            k,
            r,
            targets,
            exogenous,
            dummies,
        })
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

    pub fn target_dim(&self) -> usize {
        self.k
    }

    pub fn exogenous_dim(&self) -> usize {
        self.r
    }

    pub fn index_of(&self, day: NaiveDate) -> Option<usize> {
        let first = *self.days.first()?;
        let i = (day - first).num_days();
        (i >= 0 && (i as usize) < self.days.len()).then_some(i as usize)
    }

    pub fn target(&self, day: usize, hour: usize) -> &[f64] {
        let o = (day * HOURS + hour) * self.k;
        &self.targets[o..o + self.k]
    }

    pub fn exogenous(&self, day: usize, hour: usize) -> &[f64] {
        let o = (day * HOURS + hour) * self.r;
        &self.exogenous[o..o + self.r]
    }

    pub fn dummies(&self, day: usize) -> &[f64; CalendarDummies::COUNT] {
        &self.dummies[day]
    }

    /// A copy with every target mapped through `f`.
    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Panel {
        let mut p = self.clone();
        p.targets.iter_mut().for_each(|v| *v = f(*v));
        p
    }

    /// Read view for forecasting day index `cutoff`.
    pub fn view(&self, cutoff: usize) -> PanelView<'_> {
        PanelView {
            panel: self,
            cutoff,
            violations: AtomicUsize::new(0),
        }
    }
}

/// Read access for a forecast issued for day `cutoff`.
///
/// Targets are known strictly before the cutoff; exogenous forecasts and
/// calendar dummies are known up to and including it. Every read outside
/// that information set is counted as a leakage violation.
#[derive(Debug)]
pub struct PanelView<'a> {
    panel: &'a Panel,
    cutoff: usize,
    violations: AtomicUsize,
}

impl<'a> PanelView<'a> {
    pub fn panel(&self) -> &'a Panel {
        self.panel
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }

    /// Adds violations observed through a derived view.
    pub fn record(&self, violations: usize) {
        self.violations.fetch_add(violations, Ordering::Relaxed);
    }

    fn flag(&self, ok: bool) {
        if !ok {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn target(&self, day: usize, hour: usize) -> &'a [f64] {
        self.flag(day < self.cutoff);
        self.panel.target(day, hour)
    }

    pub fn exogenous(&self, day: usize, hour: usize) -> &'a [f64] {
        self.flag(day <= self.cutoff);
        self.panel.exogenous(day, hour)
    }

    pub fn dummies(&self, day: usize) -> &'a [f64; CalendarDummies::COUNT] {
        self.flag(day <= self.cutoff);
        self.panel.dummies(day)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(days: usize) -> Panel {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let d: Vec<NaiveDate> = (0..days)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        let t: Vec<f64> = (0..days * HOURS * 2).map(|i| i as f64).collect();
        let x: Vec<f64> = (0..days * HOURS).map(|i| -(i as f64)).collect();
        Panel::new(d, 2, 1, t, x, &HolidayCalendar::default_italian()).unwrap()
    }

    #[test]
    fn layout() {
        let p = panel(3);
        assert_eq!(p.target(1, 2), &[52.0, 53.0]);
        assert_eq!(p.exogenous(2, 0), &[-48.0]);
        assert_eq!(p.dummies(0), &[0.0, 0.0, 1.0]); // New Year
    }

    #[test]
    fn view_counts_future_reads() {
        let p = panel(5);
        let v = p.view(3);
        v.target(2, 0);
        v.exogenous(3, 0);
        v.dummies(3);
        assert_eq!(v.violations(), 0);
        v.target(3, 0);
        v.exogenous(4, 1);
        assert_eq!(v.violations(), 2);
    }

    #[test]
    fn non_consecutive_days_rejected() {
        let a = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let b = NaiveDate::from_ymd_opt(2024, 1, 3).unwrap();
        let r = Panel::new(
            vec![a, b],
            1,
            0,
            vec![0.0; 48],
            vec![],
            &HolidayCalendar::default(),
        );
        assert!(r.is_err());
    }
}
