//! Append-only CSV store of forecasts, partitioned by model and month.
//!
//! Layout under the store root:
//!
//! - `points/<model>/<YYYY-MM>.csv`: `timestamp,forecast,actual,substituted,basis,scores`
//! - `quantiles/<model>/<YYYY-MM>.csv`: `timestamp,p01,...,p99` (ensemble)
//! - `scores/<model>/<YYYY-MM>.csv`: `timestamp,window,crps,pit`
//! - `components.csv`: `date,k_supply,k_demand`
//! - `r2.csv`: `model,side,price,r2` once the run completes

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};

use crate::error::{Error, Result};
use crate::probabilistic::{EmpiricalPriceDistribution, PERCENTILES};

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub timestamp: DateTime<Utc>,
    pub model: String,
    pub forecast: f64,
    pub actual: f64,
    /// The model failed and the naive forecast took its place.
    pub substituted: bool,
    /// Fingerprint of the curve basis the scores refer to.
    pub basis: Option<String>,
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub timestamp: DateTime<Utc>,
    pub model: String,
    /// Calibration window in days, or `ensemble`.
    pub window: String,
    pub crps: f64,
    pub pit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub timestamp: DateTime<Utc>,
    pub model: String,
    pub distribution: EmpiricalPriceDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2Row {
    pub model: String,
    pub side: String,
    pub price: f64,
    pub r2: Option<f64>,
}

#[derive(Debug)]
pub struct ForecastStore {
    root: PathBuf,
    last: HashMap<(String, String, String), DateTime<Utc>>,
}

fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.format(TS_FORMAT).to_string()
}

fn parse_ts(s: &str, path: &Path) -> Result<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .map(|t| t.and_utc())
        .map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("invalid timestamp '{s}'"),
        })
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("invalid number '{s}'"),
    })
}

fn append_records(path: &Path, header: &[String], records: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        w.write_record(header)?;
    }
    for r in records {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

impl ForecastStore {
    /// Creates an empty store. An existing non-empty directory is refused so
    /// that rows are never mixed across runs.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if root.exists() {
            let mut entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
            if entries.next().is_some() {
                return Err(Error::Config(format!(
                    "store directory {} is not empty",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            last: HashMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn check_key(&mut self, kind: &str, model: &str, sub: &str, ts: DateTime<Utc>) -> Result<()> {
        let key = (kind.to_string(), model.to_string(), sub.to_string());
        if let Some(prev) = self.last.get(&key) {
            if ts <= *prev {
                return Err(Error::Parameter(format!(
                    "{kind} row for {model} at {} is not after {}",
                    format_ts(&ts),
                    format_ts(prev)
                )));
            }
        }
        self.last.insert(key, ts);
        Ok(())
    }

    fn partition(&self, kind: &str, model: &str, ts: &DateTime<Utc>) -> PathBuf {
        self.root
            .join(kind)
            .join(model)
            .join(format!("{}.csv", ts.format("%Y-%m")))
    }

    fn append_grouped(
        &self,
        kind: &str,
        header: &[String],
        rows: Vec<(String, DateTime<Utc>, Vec<String>)>,
    ) -> Result<()> {
        let mut groups: Vec<(PathBuf, Vec<Vec<String>>)> = Vec::new();
        for (model, ts, rec) in rows {
            let path = self.partition(kind, &model, &ts);
            match groups.iter_mut().find(|g| g.0 == path) {
                Some(g) => g.1.push(rec),
                None => groups.push((path, vec![rec])),
            }
        }
        for (path, recs) in groups {
            append_records(&path, header, &recs)?;
        }
        Ok(())
    }

    pub fn append_points(&mut self, rows: &[PointRow]) -> Result<()> {
        for r in rows {
            self.check_key("points", &r.model, "", r.timestamp)?;
        }
        let header: Vec<String> = [
            "timestamp",
            "forecast",
            "actual",
            "substituted",
            "basis",
            "scores",
        ]
        .map(String::from)
        .to_vec();
        let recs = rows
            .iter()
            .map(|r| {
                let scores = r.scores.as_ref().map_or(String::new(), |s| {
                    s.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
                });
                (
                    r.model.clone(),
                    r.timestamp,
                    vec![
                        format_ts(&r.timestamp),
                        r.forecast.to_string(),
                        r.actual.to_string(),
                        u8::from(r.substituted).to_string(),
                        r.basis.clone().unwrap_or_default(),
                        scores,
                    ],
                )
            })
            .collect();
        self.append_grouped("points", &header, recs)
    }

    pub fn append_quantiles(&mut self, rows: &[QuantileRow]) -> Result<()> {
        for r in rows {
            self.check_key("quantiles", &r.model, "", r.timestamp)?;
        }
        let mut header = vec!["timestamp".to_string()];
        header.extend((1..=PERCENTILES).map(|i| format!("p{i:02}")));
        let recs = rows
            .iter()
            .map(|r| {
                let mut rec = vec![format_ts(&r.timestamp)];
                rec.extend(r.distribution.quantiles().iter().map(f64::to_string));
                (r.model.clone(), r.timestamp, rec)
            })
            .collect();
        self.append_grouped("quantiles", &header, recs)
    }

    pub fn append_scores(&mut self, rows: &[ScoreRow]) -> Result<()> {
        for r in rows {
            self.check_key("scores", &r.model, &r.window, r.timestamp)?;
        }
        let header: Vec<String> = ["timestamp", "window", "crps", "pit"]
            .map(String::from)
            .to_vec();
        let recs = rows
            .iter()
            .map(|r| {
                (
                    r.model.clone(),
                    r.timestamp,
                    vec![
                        format_ts(&r.timestamp),
                        r.window.clone(),
                        r.crps.to_string(),
                        r.pit.to_string(),
                    ],
                )
            })
            .collect();
        self.append_grouped("scores", &header, recs)
    }

    pub fn append_components(
        &mut self,
        date: NaiveDate,
        k_supply: usize,
        k_demand: usize,
    ) -> Result<()> {
        let ts = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        self.check_key("components", "", "", ts)?;
        let header: Vec<String> = ["date", "k_supply", "k_demand"].map(String::from).to_vec();
        append_records(
            &self.root.join("components.csv"),
            &header,
            &[vec![
                date.to_string(),
                k_supply.to_string(),
                k_demand.to_string(),
            ]],
        )
    }

    /// Writes the squared-correlation functions of a completed run.
    pub fn write_r2(&self, rows: &[R2Row]) -> Result<()> {
        let path = self.root.join("r2.csv");
        if path.exists() {
            return Err(Error::Config(format!("{} already written", path.display())));
        }
        let header: Vec<String> = ["model", "side", "price", "r2"].map(String::from).to_vec();
        let recs: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.side.clone(),
                    r.price.to_string(),
                    r.r2.map_or(String::new(), |v| v.to_string()),
                ]
            })
            .collect();
        append_records(&path, &header, &recs)
    }
}

/// Partition files of `kind`, ordered by model then month.
fn partitions(root: &Path, kind: &str) -> Result<Vec<(String, PathBuf)>> {
    let dir = root.join(kind);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut models: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<_>>()?;
    models.sort();
    for m in models {
        let name = m
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Input(format!("invalid model directory {}", m.display())))?
            .to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&m)
            .map_err(|e| Error::io(&m, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&m, err)))
            .collect::<Result<_>>()?;
        files.retain(|f| f.extension().is_some_and(|x| x == "csv"));
        files.sort();
        out.extend(files.into_iter().map(|f| (name.clone(), f)));
    }
    Ok(out)
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_points(root: &Path) -> Result<Vec<PointRow>> {
    let mut out = Vec::new();
    for (model, path) in partitions(root, "points")? {
        for rec in records(&path)? {
            let scores = match &rec[5] {
                "" => None,
                s => Some(
                    s.split(' ')
                        .map(|v| parse_f64(v, &path))
                        .collect::<Result<_>>()?,
                ),
            };
            out.push(PointRow {
                timestamp: parse_ts(&rec[0], &path)?,
                model: model.clone(),
                forecast: parse_f64(&rec[1], &path)?,
                actual: parse_f64(&rec[2], &path)?,
                substituted: &rec[3] == "1",
                basis: (!rec[4].is_empty()).then(|| rec[4].to_string()),
                scores,
            });
        }
    }
    Ok(out)
}

pub fn read_scores(root: &Path) -> Result<Vec<ScoreRow>> {
    let mut out = Vec::new();
    for (model, path) in partitions(root, "scores")? {
        for rec in records(&path)? {
            out.push(ScoreRow {
                timestamp: parse_ts(&rec[0], &path)?,
                model: model.clone(),
                window: rec[1].to_string(),
                crps: parse_f64(&rec[2], &path)?,
                pit: parse_f64(&rec[3], &path)?,
            });
        }
    }
    Ok(out)
}

pub fn read_quantiles(root: &Path) -> Result<Vec<QuantileRow>> {
    let mut out = Vec::new();
    for (model, path) in partitions(root, "quantiles")? {
        for rec in records(&path)? {
            let q = rec
                .iter()
                .skip(1)
                .map(|v| parse_f64(v, &path))
                .collect::<Result<Vec<_>>>()?;
            out.push(QuantileRow {
                timestamp: parse_ts(&rec[0], &path)?,
                model: model.clone(),
                distribution: EmpiricalPriceDistribution::from_quantiles(q, 0)?,
            });
        }
    }
    Ok(out)
}

pub fn read_r2(root: &Path) -> Result<Vec<R2Row>> {
    let path = root.join("r2.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    records(&path)?
        .into_iter()
        .map(|rec| {
            Ok(R2Row {
                model: rec[0].to_string(),
                side: rec[1].to_string(),
                price: parse_f64(&rec[2], &path)?,
                r2: match &rec[3] {
                    "" => None,
                    v => Some(parse_f64(v, &path)?),
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(h: u32) -> DateTime<Utc> {
        NaiveDate::from_ymd_opt(2024, 3, 31)
            .unwrap()
            .and_hms_opt(h, 0, 0)
            .unwrap()
            .and_utc()
    }

    fn point(h: u32, model: &str) -> PointRow {
        PointRow {
            timestamp: ts(h),
            model: model.into(),
            forecast: 10.5 + h as f64,
            actual: 11.0,
            substituted: h == 2,
            basis: Some("abc".into()),
            scores: Some(vec![1.0, -0.25]),
        }
    }

    #[test]
    fn points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ForecastStore::create(dir.path().join("store")).unwrap();
        let rows = vec![
            point(0, "FPCA-ARX"),
            point(1, "FPCA-ARX"),
            point(2, "Naive"),
        ];
        s.append_points(&rows).unwrap();
        let back = read_points(s.root()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0], rows[0]);
        assert_eq!(back[2], rows[2]);
        assert!(s.root().join("points/FPCA-ARX/2024-03.csv").exists());
    }

    #[test]
    fn rows_are_keyed_uniquely() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ForecastStore::create(dir.path().join("store")).unwrap();
        s.append_points(&[point(3, "Naive")]).unwrap();
        assert!(s.append_points(&[point(3, "Naive")]).is_err());
        assert!(s.append_points(&[point(2, "Naive")]).is_err());
    }

    #[test]
    fn non_empty_store_refused() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("store");
        let mut s = ForecastStore::create(&root).unwrap();
        s.append_components(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 3, 4)
            .unwrap();
        assert!(matches!(
            ForecastStore::create(&root),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantiles_and_scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ForecastStore::create(dir.path().join("store")).unwrap();
        let d =
            EmpiricalPriceDistribution::from_sample((0..200).map(|i| i as f64 * 0.37).collect())
                .unwrap();
        s.append_quantiles(&[QuantileRow {
            timestamp: ts(5),
            model: "fARX-QRM".into(),
            distribution: d.clone(),
        }])
        .unwrap();
        let rows = ["28", "ensemble"].map(|w| ScoreRow {
            timestamp: ts(5),
            model: "fARX-QRM".into(),
            window: w.into(),
            crps: 1.25,
            pit: 0.5,
        });
        s.append_scores(&rows).unwrap();
        assert_eq!(
            read_quantiles(s.root()).unwrap()[0]
                .distribution
                .quantiles(),
            d.quantiles()
        );
        assert_eq!(read_scores(s.root()).unwrap(), rows.to_vec());
    }
}
