//! Price ingestion, alignment onto a common time grid, and log-return panels.
//!
//! Input files are delimiter-separated text with a header row. Two layouts are
//! understood:
//!
//! - wide: `timestamp,TICKER1,TICKER2,...`, one row per timestamp; an empty cell
//!   marks a missing observation;
//! - long: `timestamp,asset,price`, one row per observation.
//!
//! Timestamps are either integer epoch milliseconds or ISO-8601 strings; the
//! kind is detected from the first data row and must be the same for every row.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Wide,
    Long,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::Config(format!(
                "unknown layout '{other}' (expected wide or long)"
            ))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Wide => "wide",
            Layout::Long => "long",
        })
    }
}

/// Aligned, strictly positive prices for `N` assets over `T` grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    timestamps: Vec<i64>,
    assets: Vec<String>,
    prices: Vec<Vec<f64>>,
    sectors: Option<Vec<String>>,
    step_ms: i64,
    rejected: Vec<String>,
}

impl PricePanel {
    pub fn new(timestamps: Vec<i64>, assets: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if assets.len() < 2 {
            return Err(Error::Data(format!(
                "price panel needs at least 2 assets, got {}",
                assets.len()
            )));
        }
        if timestamps.len() < 2 {
            return Err(Error::Data(format!(
                "price panel needs at least 2 time points, got {}",
                timestamps.len()
            )));
        }
        check_unique(&assets)?;
        let step_ms = uniform_step(&timestamps)?;
        if prices.len() != assets.len() {
            return Err(Error::Data(format!(
                "{} price rows for {} assets",
                prices.len(),
                assets.len()
            )));
        }
        for (asset, row) in assets.iter().zip(&prices) {
            if row.len() != timestamps.len() {
                return Err(Error::Data(format!(
                    "asset {asset}: {} prices for {} timestamps",
                    row.len(),
                    timestamps.len()
                )));
            }
            if let Some(m) = row.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::Data(format!(
                    "asset {asset}: non-positive price {} at grid index {m}",
                    row[m]
                )));
            }
        }
        Ok(Self {
            timestamps,
            assets,
            prices,
            sectors: None,
            step_ms,
            rejected: Vec::new(),
        })
    }

    pub fn with_sectors(mut self, sectors: Vec<String>) -> Result<Self> {
        if sectors.len() != self.assets.len() {
            return Err(Error::Data(format!(
                "{} sector labels for {} assets",
                sectors.len(),
                self.assets.len()
            )));
        }
        self.sectors = Some(sectors);
        Ok(self)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn sectors(&self) -> Option<&[String]> {
        self.sectors.as_deref()
    }

    /// Grid spacing Δt in milliseconds.
    pub fn step_ms(&self) -> i64 {
        self.step_ms
    }

    /// Assets dropped at load time because they had no observation at the
    /// first grid point.
    pub fn rejected_assets(&self) -> &[String] {
        &self.rejected
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Log-returns `ln p(t+1) - ln p(t)`, stamped with the end time of each step.
    pub fn to_returns(&self) -> ReturnPanel {
        let returns = self
            .prices
            .iter()
            .map(|row| row.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
            .collect();
        ReturnPanel {
            timestamps: self.timestamps[1..].to_vec(),
            assets: self.assets.clone(),
            returns,
            sectors: self.sectors.clone(),
        }
    }
}

/// Log-returns for `N` assets over `T-1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    timestamps: Vec<i64>,
    assets: Vec<String>,
    returns: Vec<Vec<f64>>,
    sectors: Option<Vec<String>>,
}

impl ReturnPanel {
    pub fn new(timestamps: Vec<i64>, assets: Vec<String>, returns: Vec<Vec<f64>>) -> Result<Self> {
        if assets.is_empty() || timestamps.is_empty() {
            return Err(Error::Data("return panel is empty".into()));
        }
        check_unique(&assets)?;
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if returns.len() != assets.len() {
            return Err(Error::Data(format!(
                "{} return rows for {} assets",
                returns.len(),
                assets.len()
            )));
        }
        for (asset, row) in assets.iter().zip(&returns) {
            if row.len() != timestamps.len() {
                return Err(Error::Data(format!(
                    "asset {asset}: {} returns for {} timestamps",
                    row.len(),
                    timestamps.len()
                )));
            }
            if let Some(m) = row.iter().position(|r| !r.is_finite()) {
                return Err(Error::Data(format!(
                    "asset {asset}: non-finite return at index {m}"
                )));
            }
        }
        Ok(Self {
            timestamps,
            assets,
            returns,
            sectors: None,
        })
    }

    pub fn with_sectors(mut self, sectors: Vec<String>) -> Result<Self> {
        if sectors.len() != self.assets.len() {
            return Err(Error::Data(format!(
                "{} sector labels for {} assets",
                sectors.len(),
                self.assets.len()
            )));
        }
        self.sectors = Some(sectors);
        Ok(self)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &[Vec<f64>] {
        &self.returns
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.returns[i]
    }

    pub fn sectors(&self) -> Option<&[String]> {
        self.sectors.as_deref()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Number of return samples per asset.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Running sums of each return row.
    pub fn cumulative_returns(&self) -> Vec<Vec<f64>> {
        self.returns
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, r| {
                        *acc += r;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect()
    }

    /// Contiguous sub-panel `[start, start + length)`.
    pub fn slice_window(&self, start: usize, length: usize) -> Result<ReturnPanel> {
        let end = start.saturating_add(length);
        if length == 0 || end > self.len() {
            return Err(Error::OutOfRange {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(ReturnPanel {
            timestamps: self.timestamps[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.iter().map(|r| r[start..end].to_vec()).collect(),
            sectors: self.sectors.clone(),
        })
    }

    /// Sub-panel restricted to the given asset indices, in the given order.
    pub fn select_assets(&self, keep: &[usize]) -> ReturnPanel {
        ReturnPanel {
            timestamps: self.timestamps.clone(),
            assets: keep.iter().map(|&i| self.assets[i].clone()).collect(),
            returns: keep.iter().map(|&i| self.returns[i].clone()).collect(),
            sectors: self
                .sectors
                .as_ref()
                .map(|s| keep.iter().map(|&i| s[i].clone()).collect()),
        }
    }

    /// Writes the returns in wide layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_wide(writer, &self.timestamps, &self.assets, &self.returns)
    }

    pub fn write_cumulative_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_wide(writer, &self.timestamps, &self.assets, &self.cumulative_returns())
    }

    /// Pseudo-prices `exp(cumsum(returns))` starting from 1, with one extra
    /// leading grid point one step before the first return.
    pub fn to_pseudo_prices(&self) -> Result<PricePanel> {
        let step = if self.len() >= 2 {
            self.timestamps[1] - self.timestamps[0]
        } else {
            60_000
        };
        let mut timestamps = Vec::with_capacity(self.len() + 1);
        timestamps.push(self.timestamps[0] - step);
        timestamps.extend_from_slice(&self.timestamps);
        let prices = self
            .cumulative_returns()
            .into_iter()
            .map(|row| std::iter::once(1.0).chain(row.into_iter().map(f64::exp)).collect())
            .collect();
        PricePanel::new(timestamps, self.assets.clone(), prices)
    }
}

pub fn to_returns(p: &PricePanel) -> ReturnPanel {
    p.to_returns()
}

pub fn cumulative_returns(r: &ReturnPanel) -> Vec<Vec<f64>> {
    r.cumulative_returns()
}

pub fn slice_window(r: &ReturnPanel, start: usize, length: usize) -> Result<ReturnPanel> {
    r.slice_window(start, length)
}

/// Reads a price file and aligns every asset on the union time grid.
pub fn load_prices(path: impl AsRef<Path>, layout: Layout) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_prices(file, layout)
}

pub fn read_prices<R: Read>(reader: R, layout: Layout) -> Result<PricePanel> {
    let observations = match layout {
        Layout::Wide => read_wide_observations(reader, true)?,
        Layout::Long => read_long_observations(reader)?,
    };
    align(observations)
}

/// Reads a wide-layout file of log-returns (no gaps allowed).
pub fn load_returns(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_returns(file)
}

pub fn read_returns<R: Read>(reader: R) -> Result<ReturnPanel> {
    let obs = read_wide_observations(reader, false)?;
    let timestamps: Vec<i64> = obs.grid.iter().copied().collect();
    let mut returns = Vec::with_capacity(obs.assets.len());
    for (asset, series) in obs.assets.iter().zip(&obs.series) {
        let row: Option<Vec<f64>> = timestamps.iter().map(|t| series.get(t).copied()).collect();
        returns.push(row.ok_or_else(|| Error::Data(format!("asset {asset}: missing return")))?);
    }
    ReturnPanel::new(timestamps, obs.assets, returns)
}

/// Reads a two-column `asset,sector` file.
pub fn read_sectors<R: Read>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() < 2 {
            return Err(Error::Row {
                row: line_of(&rec),
                message: "expected asset,sector".into(),
            });
        }
        map.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    Ok(map)
}

struct Observations {
    grid: BTreeSet<i64>,
    assets: Vec<String>,
    series: Vec<BTreeMap<i64, f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TimeKind {
    EpochMs,
    Iso,
}

fn detect_kind(s: &str) -> TimeKind {
    if s.trim().parse::<i64>().is_ok() {
        TimeKind::EpochMs
    } else {
        TimeKind::Iso
    }
}

fn parse_timestamp(s: &str, kind: TimeKind, row: usize) -> Result<i64> {
    let s = s.trim();
    let bad = |what: &str| Error::Row {
        row,
        message: format!("cannot parse timestamp '{s}' as {what}"),
    };
    match kind {
        TimeKind::EpochMs => s.parse::<i64>().map_err(|_| bad("epoch milliseconds")),
        TimeKind::Iso => {
            if s.parse::<i64>().is_ok() {
                return Err(Error::Row {
                    row,
                    message: "mixed timestamp formats in column".into(),
                });
            }
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Ok(dt.timestamp_millis());
            }
            for fmt in [
                "%Y-%m-%dT%H:%M:%S%.f",
                "%Y-%m-%d %H:%M:%S%.f",
                "%Y-%m-%dT%H:%M",
                "%Y-%m-%d %H:%M",
            ] {
                if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                    return Ok(dt.and_utc().timestamp_millis());
                }
            }
            if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
                if let Some(dt) = d.and_hms_opt(0, 0, 0) {
                    return Ok(dt.and_utc().timestamp_millis());
                }
            }
            Err(bad("ISO-8601"))
        }
    }
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Row {
        row,
        message: e.to_string(),
    }
}

fn parse_price(s: &str, row: usize, positive: bool) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Row {
        row,
        message: format!("cannot parse value '{}'", s.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Row {
            row,
            message: format!("non-finite value {v}"),
        });
    }
    if positive && v <= 0.0 {
        return Err(Error::Row {
            row,
            message: format!("non-positive price {v}"),
        });
    }
    Ok(v)
}

fn read_wide_observations<R: Read>(reader: R, prices: bool) -> Result<Observations> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 {
        return Err(Error::Data(
            "wide layout needs a timestamp column and at least one asset column".into(),
        ));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    check_unique(&assets)?;
    let mut series = vec![BTreeMap::new(); assets.len()];
    let mut grid = BTreeSet::new();
    let mut kind = None;
    let mut last: Option<i64> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let row = line_of(&rec);
        let k = *kind.get_or_insert_with(|| detect_kind(&rec[0]));
        let t = parse_timestamp(&rec[0], k, row)?;
        if let Some(prev) = last {
            if t <= prev {
                return Err(Error::Row {
                    row,
                    message: format!("timestamp {t} does not increase (previous {prev})"),
                });
            }
        }
        last = Some(t);
        grid.insert(t);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                continue;
            }
            series[j].insert(t, parse_price(cell, row, prices)?);
        }
    }
    if grid.is_empty() {
        return Err(Error::Data("file has no data rows".into()));
    }
    Ok(Observations {
        grid,
        assets,
        series,
    })
}

fn read_long_observations<R: Read>(reader: R) -> Result<Observations> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 3 {
        return Err(Error::Data(
            "long layout expects columns timestamp,asset,price".into(),
        ));
    }
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut assets = Vec::new();
    let mut series: Vec<BTreeMap<i64, f64>> = Vec::new();
    let mut grid = BTreeSet::new();
    let mut kind = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let row = line_of(&rec);
        let k = *kind.get_or_insert_with(|| detect_kind(&rec[0]));
        let t = parse_timestamp(&rec[0], k, row)?;
        let asset = rec[1].to_string();
        let price = parse_price(&rec[2], row, true)?;
        let j = *index.entry(asset.clone()).or_insert_with(|| {
            assets.push(asset.clone());
            series.push(BTreeMap::new());
            assets.len() - 1
        });
        if let Some((&prev, _)) = series[j].last_key_value() {
            if t <= prev {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "timestamp {t} for asset {asset} does not increase (previous {prev})"
                    ),
                });
            }
        }
        series[j].insert(t, price);
        grid.insert(t);
    }
    if grid.is_empty() {
        return Err(Error::Data("file has no data rows".into()));
    }
    Ok(Observations {
        grid,
        assets,
        series,
    })
}

fn align(obs: Observations) -> Result<PricePanel> {
    let timestamps: Vec<i64> = obs.grid.into_iter().collect();
    let first = timestamps[0];
    let mut assets = Vec::new();
    let mut prices = Vec::new();
    let mut rejected = Vec::new();
    for (asset, series) in obs.assets.into_iter().zip(obs.series) {
        if !series.contains_key(&first) {
            rejected.push(asset);
            continue;
        }
        let mut row = Vec::with_capacity(timestamps.len());
        let mut carry = f64::NAN;
        for t in &timestamps {
            if let Some(&p) = series.get(t) {
                carry = p;
            }
            row.push(carry);
        }
        assets.push(asset);
        prices.push(row);
    }
    let mut panel = PricePanel::new(timestamps, assets, prices)?;
    panel.rejected = rejected;
    Ok(panel)
}

fn check_unique(assets: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for a in assets {
        if !seen.insert(a.as_str()) {
            return Err(Error::Data(format!("duplicate asset label '{a}'")));
        }
    }
    Ok(())
}

fn uniform_step(timestamps: &[i64]) -> Result<i64> {
    let step = timestamps[1] - timestamps[0];
    if step <= 0 {
        return Err(Error::Data("timestamps not strictly increasing at index 1".into()));
    }
    for (i, w) in timestamps.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d <= 0 {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if d != step {
            return Err(Error::Data(format!(
                "non-uniform time grid: spacing {d} ms at index {} differs from {step} ms",
                i + 1
            )));
        }
    }
    Ok(step)
}

/// Writes `timestamp,ASSET...` rows, one per timestamp.
pub fn write_wide<W: Write>(
    writer: W,
    timestamps: &[i64],
    assets: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = std::iter::once("timestamp")
        .chain(assets.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(csv_error)?;
    let mut line = Vec::with_capacity(assets.len() + 1);
    for (m, t) in timestamps.iter().enumerate() {
        line.clear();
        line.push(t.to_string());
        line.extend(rows.iter().map(|r| r[m].to_string()));
        w.write_record(&line).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("writing table", e))?;
    Ok(())
}
