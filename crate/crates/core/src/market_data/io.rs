//! CSV ingestion and serialization.
//!
//! All three files are UTF-8 with a header row, ISO-8601 timestamps and a dot
//! decimal separator. Files written here parse back to identical values and
//! re-serialize byte for byte.
//!
//! Hour normalization: a timestamp block that reappears after a different
//! timestamp is a repeated (daylight-saving) hour and is dropped in favour of
//! the first occurrence. A day missing exactly one hour is completed by
//! copying the previous hour; any other missing hour is a gap error.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, SecondsFormat, Timelike, Utc};
use log::warn;

use super::{
    CouplingRecord, ExogenousRecord, MarketSnapshot, OrderRecord, Side, PRICE_CAP, PRICE_FLOOR,
};
use crate::error::{Error, Result};

pub const ORDERS_HEADER: [&str; 4] = ["timestamp", "side", "price_eur_mwh", "quantity_mwh"];
pub const EXOGENOUS_HEADER: [&str; 5] = ["timestamp", "load_fc", "ntc_fr", "ntc_ch", "res_fc"];
pub const COUPLING_HEADER: [&str; 3] = ["timestamp", "imports_mwh", "exports_mwh"];

struct LineContext<'a> {
    source: &'a str,
    line: u64,
}

impl LineContext<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn timestamp(&self, field: &str) -> Result<DateTime<Utc>> {
        let ts = DateTime::parse_from_rfc3339(field)
            .map_err(|e| self.err(format!("invalid timestamp {field:?}: {e}")))?
            .with_timezone(&Utc);
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(self.err(format!("timestamp {field:?} is not on the hour")));
        }
        Ok(ts)
    }

    fn number(&self, field: &str, name: &str) -> Result<f64> {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| self.err(format!("{name}: {field:?} is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("{name}: {field:?} is not finite")));
        }
        Ok(v)
    }

    fn non_negative(&self, field: &str, name: &str) -> Result<f64> {
        let v = self.number(field, name)?;
        if v < 0.0 {
            return Err(self.err(format!("{name} must be non-negative, got {v}")));
        }
        Ok(v)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn check_header(
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
    source: &str,
) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!(
                "header {:?} does not match the expected `{}`",
                header.iter().collect::<Vec<_>>(),
                expected.join(",")
            ),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader)
}

fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Completes single missing hours per day and reports every other gap.
///
/// Returns `(missing, filled)` where `filled` lists hours that the
/// daylight-saving rule copies from their predecessor.
fn audit_hours(present: &[DateTime<Utc>]) -> (Vec<DateTime<Utc>>, Vec<DateTime<Utc>>) {
    let (Some(first), Some(last)) = (present.first(), present.last()) else {
        return (Vec::new(), Vec::new());
    };
    let set: HashSet<_> = present.iter().copied().collect();
    let mut absent_by_day: BTreeMap<NaiveDate, Vec<DateTime<Utc>>> = BTreeMap::new();
    let mut t = *first;
    while t <= *last {
        if !set.contains(&t) {
            absent_by_day.entry(t.date_naive()).or_default().push(t);
        }
        t += Duration::hours(1);
    }
    let mut missing = Vec::new();
    let mut filled = Vec::new();
    for (_, hours) in absent_by_day {
        if hours.len() == 1 {
            filled.push(hours[0]);
        } else {
            missing.extend(hours);
        }
    }
    (missing, filled)
}

/// Parses an orders file into one snapshot per hour with zero coupling flows.
pub fn parse_order_book(path: impl AsRef<Path>) -> Result<Vec<MarketSnapshot>> {
    let path = path.as_ref();
    read_order_book(open(path)?, &path.display().to_string())
}

pub fn read_order_book<R: Read>(reader: R, source: &str) -> Result<Vec<MarketSnapshot>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &ORDERS_HEADER, source)?;

    let mut hours: BTreeMap<DateTime<Utc>, (Vec<OrderRecord>, Vec<OrderRecord>)> = BTreeMap::new();
    let mut current: Option<DateTime<Utc>> = None;
    let mut skipping = false;
    let mut duplicated: Vec<DateTime<Utc>> = Vec::new();

    for record in rdr.records() {
        let record = record?;
        let ctx = LineContext {
            source,
            line: record.position().map_or(0, |p| p.line()),
        };
        let timestamp = ctx.timestamp(&record[0])?;
        let side = Side::parse(&record[1]).ok_or_else(|| {
            ctx.err(format!(
                "side must be supply or demand, got {:?}",
                &record[1]
            ))
        })?;
        let price = ctx.number(&record[2], "price_eur_mwh")?;
        if !(PRICE_FLOOR..=PRICE_CAP).contains(&price) {
            return Err(ctx.err(format!(
                "price {price} outside the bidding domain [{PRICE_FLOOR}, {PRICE_CAP}]"
            )));
        }
        let quantity = ctx.number(&record[3], "quantity_mwh")?;
        if quantity <= 0.0 {
            return Err(ctx.err(format!(
                "quantity must be strictly positive, got {quantity}"
            )));
        }

        if current != Some(timestamp) {
            current = Some(timestamp);
            skipping = hours.contains_key(&timestamp);
            if skipping {
                duplicated.push(timestamp);
            }
        }
        if skipping {
            continue;
        }
        let entry = hours.entry(timestamp).or_default();
        let order = OrderRecord {
            timestamp,
            side,
            price,
            quantity,
        };
        match side {
            Side::Supply => entry.0.push(order),
            Side::Demand => entry.1.push(order),
        }
    }
    for t in &duplicated {
        warn!(
            "{source}: repeated hour {} dropped (keeping first occurrence)",
            format_timestamp(t)
        );
    }

    let present: Vec<_> = hours.keys().copied().collect();
    let (missing, filled) = audit_hours(&present);
    if !missing.is_empty() {
        return Err(Error::Gap { missing });
    }
    for t in filled {
        let prev = t - Duration::hours(1);
        let (supply, demand) = hours
            .get(&prev)
            .cloned()
            .ok_or_else(|| Error::Gap { missing: vec![t] })?;
        warn!(
            "{source}: missing hour {} filled from the previous hour",
            format_timestamp(&t)
        );
        let retime = |orders: Vec<OrderRecord>| {
            orders
                .into_iter()
                .map(|o| OrderRecord { timestamp: t, ..o })
                .collect::<Vec<_>>()
        };
        hours.insert(t, (retime(supply), retime(demand)));
    }

    Ok(hours
        .into_iter()
        .map(|(ts, (supply, demand))| {
            MarketSnapshot::new(ts, supply, demand, CouplingRecord::zero(ts))
        })
        .collect())
}

/// Writes snapshots in the orders schema: per hour, supply then demand, each
/// in merit order.
pub fn write_order_book<W: Write>(snapshots: &[MarketSnapshot], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ORDERS_HEADER)?;
    for snap in snapshots {
        let ts = format_timestamp(&snap.timestamp);
        for o in snap.supply_orders.iter().chain(&snap.demand_orders) {
            wtr.write_record([
                ts.as_str(),
                o.side.as_str(),
                &o.price.to_string(),
                &o.quantity.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<orders writer>", e))?;
    Ok(())
}

fn hourly_series<T: Clone>(
    mut rows: Vec<(DateTime<Utc>, T)>,
    source: &str,
    retime: impl Fn(T, DateTime<Utc>) -> T,
) -> Result<Vec<T>> {
    // stable: the first occurrence of a repeated hour wins
    rows.sort_by_key(|(t, _)| *t);
    let before = rows.len();
    rows.dedup_by_key(|(t, _)| *t);
    if rows.len() != before {
        warn!("{source}: {} repeated hours dropped", before - rows.len());
    }
    let present: Vec<_> = rows.iter().map(|(t, _)| *t).collect();
    let (missing, filled) = audit_hours(&present);
    if !missing.is_empty() {
        return Err(Error::Gap { missing });
    }
    let mut map: BTreeMap<_, _> = rows.into_iter().collect();
    for t in filled {
        warn!(
            "{source}: missing hour {} filled from the previous hour",
            format_timestamp(&t)
        );
        let prev = map
            .get(&(t - Duration::hours(1)))
            .cloned()
            .ok_or_else(|| Error::Gap { missing: vec![t] })?;
        map.insert(t, retime(prev, t));
    }
    Ok(map.into_values().collect())
}

pub fn parse_exogenous(path: impl AsRef<Path>) -> Result<Vec<ExogenousRecord>> {
    let path = path.as_ref();
    read_exogenous(open(path)?, &path.display().to_string())
}

pub fn read_exogenous<R: Read>(reader: R, source: &str) -> Result<Vec<ExogenousRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &EXOGENOUS_HEADER, source)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let ctx = LineContext {
            source,
            line: record.position().map_or(0, |p| p.line()),
        };
        let timestamp = ctx.timestamp(&record[0])?;
        rows.push((
            timestamp,
            ExogenousRecord {
                timestamp,
                load_forecast: ctx.non_negative(&record[1], "load_fc")?,
                ntc_fr: ctx.non_negative(&record[2], "ntc_fr")?,
                ntc_ch: ctx.non_negative(&record[3], "ntc_ch")?,
                res_forecast: ctx.non_negative(&record[4], "res_fc")?,
            },
        ));
    }
    hourly_series(rows, source, |r, timestamp| ExogenousRecord {
        timestamp,
        ..r
    })
}

pub fn write_exogenous<W: Write>(records: &[ExogenousRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EXOGENOUS_HEADER)?;
    for r in records {
        wtr.write_record([
            format_timestamp(&r.timestamp),
            r.load_forecast.to_string(),
            r.ntc_fr.to_string(),
            r.ntc_ch.to_string(),
            r.res_forecast.to_string(),
        ])?;
    }
    wtr.flush()
        .map_err(|e| Error::io("<exogenous writer>", e))?;
    Ok(())
}

pub fn parse_coupling(path: impl AsRef<Path>) -> Result<Vec<CouplingRecord>> {
    let path = path.as_ref();
    read_coupling(open(path)?, &path.display().to_string())
}

pub fn read_coupling<R: Read>(reader: R, source: &str) -> Result<Vec<CouplingRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &COUPLING_HEADER, source)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let ctx = LineContext {
            source,
            line: record.position().map_or(0, |p| p.line()),
        };
        let timestamp = ctx.timestamp(&record[0])?;
        rows.push((
            timestamp,
            CouplingRecord {
                timestamp,
                imports: ctx.non_negative(&record[1], "imports_mwh")?,
                exports: ctx.non_negative(&record[2], "exports_mwh")?,
            },
        ));
    }
    hourly_series(rows, source, |r, timestamp| CouplingRecord {
        timestamp,
        ..r
    })
}

pub fn write_coupling<W: Write>(records: &[CouplingRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(COUPLING_HEADER)?;
    for r in records {
        wtr.write_record([
            format_timestamp(&r.timestamp),
            r.imports.to_string(),
            r.exports.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<coupling writer>", e))?;
    Ok(())
}

/// Attaches the coupling record of the same hour to every snapshot.
pub fn attach_coupling(
    snapshots: &mut [MarketSnapshot],
    coupling: &[CouplingRecord],
) -> Result<()> {
    let by_hour: BTreeMap<_, _> = coupling.iter().map(|c| (c.timestamp, *c)).collect();
    let mut missing = Vec::new();
    for snap in snapshots.iter_mut() {
        match by_hour.get(&snap.timestamp) {
            Some(c) => snap.coupling = *c,
            None => missing.push(snap.timestamp),
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Gap { missing })
    }
}
