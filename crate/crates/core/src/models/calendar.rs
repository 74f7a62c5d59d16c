//! Day-type classification: Monday, working day, Saturday, or holiday
//! (Sundays and bank holidays).

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DayType {
    Monday,
    Working,
    Saturday,
    Holiday,
}

/// Three binary indicators for Monday, Saturday and Holiday. A working day
/// has all three at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarDummies(pub [f64; 3]);

impl CalendarDummies {
    pub const COUNT: usize = 3;

    pub fn from_day_type(t: DayType) -> Self {
        match t {
            DayType::Monday => Self([1.0, 0.0, 0.0]),
            DayType::Saturday => Self([0.0, 1.0, 0.0]),
            DayType::Holiday => Self([0.0, 0.0, 1.0]),
            DayType::Working => Self([0.0; 3]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            dates: dates.into_iter().collect(),
        }
    }

    /// Italian national holidays for the given years (inclusive).
    pub fn italian(first_year: i32, last_year: i32) -> Self {
        let mut dates = BTreeSet::new();
        for y in first_year..=last_year {
            for (m, d) in [
                (1, 1),
                (1, 6),
                (4, 25),
                (5, 1),
                (6, 2),
                (8, 15),
                (11, 1),
                (12, 8),
                (12, 25),
                (12, 26),
            ] {
                dates.insert(NaiveDate::from_ymd_opt(y, m, d).expect("valid fixed holiday"));
            }
            dates.insert(easter_sunday(y) + Duration::days(1));
        }
        Self { dates }
    }

    /// The shipped default: Italian national holidays 2023-2024.
    pub fn default_italian() -> Self {
        Self::italian(2023, 2024)
    }

    /// Reads one ISO date per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Parse {
                path: source.to_string(),
                line: i as u64 + 1,
                message: format!("invalid date {line:?}: {e}"),
            })?;
            dates.insert(date);
        }
        Ok(Self { dates })
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }

    pub fn dates(&self) -> impl Iterator<Item = &NaiveDate> {
        self.dates.iter()
    }

    pub fn day_type(&self, date: NaiveDate) -> DayType {
        if self.is_holiday(date) {
            return DayType::Holiday;
        }
        match date.weekday() {
            Weekday::Sun => DayType::Holiday,
            Weekday::Mon => DayType::Monday,
            Weekday::Sat => DayType::Saturday,
            _ => DayType::Working,
        }
    }

    pub fn dummies(&self, date: NaiveDate) -> CalendarDummies {
        CalendarDummies::from_day_type(self.day_type(date))
    }
}

/// Gregorian Easter (anonymous Gregorian algorithm).
fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("valid easter date")
}
