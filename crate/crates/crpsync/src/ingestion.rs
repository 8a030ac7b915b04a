//! CSV ingestion, calendar alignment, and series caches.
//!
//! Input files are per-ticker daily CSVs with a `date,adj_close,volume`
//! header. Ingestion parses and date-sorts the rows, derives the requested
//! channels, and produces a [`TimeSeries`] per ticker. [`align_pair`]
//! restricts two series to their common trading dates and refuses pairs whose
//! common range has interior holes, since index `t` must mean the same
//! calendar day on both sides for a recurrence-plot diagonal to mean
//! "same day".

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {0}: cannot parse row")]
    UnparsableRow(u64),
    #[error("line {0}: empty or non-finite numeric value")]
    NonFiniteValue(u64),
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("no usable data rows")]
    NoRows,
    #[error("series share no dates")]
    EmptyOverlap,
    #[error("{n} gap(s) inside the common date range, first expected {first_expected}, next common date {first_observed}", n = .gaps.len(), first_expected = .gaps[0].0, first_observed = .gaps[0].1)]
    GapInCommonDomain { gaps: Vec<(NaiveDate, NaiveDate)> },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("{path}: bad cache file: {reason}")]
    BadCache { path: PathBuf, reason: String },
}

/// One observable per trading day. `Return` is the simple day-over-day
/// price return `p_t / p_{t-1} - 1`; requesting it drops the first row of
/// the series because the first return is undefined.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Channel {
    Price,
    Volume,
    Return,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Price, Channel::Volume, Channel::Return];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Price => "price",
            Channel::Volume => "volume",
            Channel::Return => "return",
        }
    }

    pub(crate) fn id(self) -> u8 {
        match self {
            Channel::Price => 0,
            Channel::Volume => 1,
            Channel::Return => 2,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.id() == id)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "price" => Ok(Channel::Price),
            "volume" => Ok(Channel::Volume),
            "return" => Ok(Channel::Return),
            other => Err(format!("unknown channel `{other}` (expected price, volume, or return)")),
        }
    }
}

/// A ticker's daily observations over one or more channels.
///
/// Construction enforces the representation invariants: at least one date,
/// dates strictly increasing, every channel exactly as long as `dates`,
/// channels unique and in canonical order, all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    channels: Vec<(Channel, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new(
        ticker: String,
        dates: Vec<NaiveDate>,
        channels: Vec<(Channel, Vec<f64>)>,
    ) -> Result<TimeSeries, IngestError> {
        if dates.is_empty() {
            return Err(IngestError::NoRows);
        }
        if channels.is_empty() {
            return Err(IngestError::InvalidSeries("no channels".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IngestError::InvalidSeries(format!(
                "dates of `{ticker}` are not strictly increasing"
            )));
        }
        if channels.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(IngestError::InvalidSeries(
                "channels must be unique and in canonical order".into(),
            ));
        }
        for (c, values) in &channels {
            if values.len() != dates.len() {
                return Err(IngestError::InvalidSeries(format!(
                    "channel {c} has {} values for {} dates",
                    values.len(),
                    dates.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(IngestError::InvalidSeries(format!(
                    "channel {c} contains a non-finite value"
                )));
            }
        }
        Ok(TimeSeries {
            ticker,
            dates,
            channels,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Number of channels `d`.
    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &[f64])> {
        self.channels.iter().map(|(c, v)| (*c, v.as_slice()))
    }

    pub fn channel(&self, channel: Channel) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|(_, v)| v.as_slice())
    }

    /// Copy of the observations at rows `range`, keeping ticker and channels.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        assert!(range.end <= self.len(), "slice {range:?} out of bounds");
        TimeSeries {
            ticker: self.ticker.clone(),
            dates: self.dates[range.clone()].to_vec(),
            channels: self
                .channels
                .iter()
                .map(|(c, v)| (*c, v[range.clone()].to_vec()))
                .collect(),
        }
    }

    /// Same dates and channel set, new values. For per-channel transforms.
    pub(crate) fn with_values(&self, values: Vec<Vec<f64>>) -> TimeSeries {
        assert_eq!(values.len(), self.channels.len());
        TimeSeries {
            ticker: self.ticker.clone(),
            dates: self.dates.clone(),
            channels: self
                .channels
                .iter()
                .zip(values)
                .map(|((c, old), new)| {
                    assert_eq!(old.len(), new.len());
                    (*c, new)
                })
                .collect(),
        }
    }
}

/// What [`align_pair`] did to produce the common-domain series.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentReport {
    pub common_start: NaiveDate,
    pub common_end: NaiveDate,
    pub common_length: usize,
    pub dropped_left: usize,
    pub dropped_right: usize,
    /// `(expected, next observed)` discontinuities. Empty on success; a
    /// non-empty list is reported through [`IngestError::GapInCommonDomain`].
    pub gaps: Vec<(NaiveDate, NaiveDate)>,
}

/// Loads one ticker CSV and derives the requested channels.
///
/// The file must carry `date`, `adj_close`, and `volume` columns (any column
/// order); rows may appear in any date order and are sorted. Every numeric
/// cell is validated even when its channel is not requested, so a malformed
/// file is rejected identically no matter which channels a run uses. The
/// ticker is taken from the file stem.
pub fn load_csv(path: &Path, channels: &[Channel]) -> Result<TimeSeries, IngestError> {
    let requested: BTreeSet<Channel> = channels.iter().copied().collect();
    if requested.is_empty() {
        return Err(IngestError::InvalidSeries("no channels requested".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let column = |name: &'static str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(IngestError::MissingColumn(name))
    };
    let date_col = column("date")?;
    let price_col = column("adj_close")?;
    let volume_col = column("volume")?;

    let mut rows: Vec<(NaiveDate, f64, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| record.get(col).ok_or(IngestError::UnparsableRow(line));
        let date = NaiveDate::parse_from_str(field(date_col)?, "%Y-%m-%d")
            .map_err(|_| IngestError::UnparsableRow(line))?;
        let number = |col: usize| -> Result<f64, IngestError> {
            let cell = field(col)?;
            if cell.is_empty() {
                return Err(IngestError::NonFiniteValue(line));
            }
            let value: f64 = cell.parse().map_err(|_| IngestError::UnparsableRow(line))?;
            if !value.is_finite() {
                return Err(IngestError::NonFiniteValue(line));
            }
            Ok(value)
        };
        rows.push((date, number(price_col)?, number(volume_col)?, line));
    }
    if rows.is_empty() {
        return Err(IngestError::NoRows);
    }

    rows.sort_by_key(|r| r.0);
    if let Some(dup) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate(dup[0].0));
    }

    // Returns are undefined at the first row, so requesting them shifts the
    // whole series forward by one day.
    let start = usize::from(requested.contains(&Channel::Return));
    if rows.len() <= start {
        return Err(IngestError::NoRows);
    }
    let dates: Vec<NaiveDate> = rows[start..].iter().map(|r| r.0).collect();
    let mut out: Vec<(Channel, Vec<f64>)> = Vec::new();
    for channel in requested {
        let values = match channel {
            Channel::Price => rows[start..].iter().map(|r| r.1).collect(),
            Channel::Volume => rows[start..].iter().map(|r| r.2).collect(),
            Channel::Return => {
                let mut returns = Vec::with_capacity(rows.len() - 1);
                for t in 1..rows.len() {
                    let r = rows[t].1 / rows[t - 1].1 - 1.0;
                    if !r.is_finite() {
                        return Err(IngestError::NonFiniteValue(rows[t].3));
                    }
                    returns.push(r);
                }
                returns
            }
        };
        out.push((channel, values));
    }

    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeries::new(ticker, dates, out)
}

/// Restricts two series to their common dates.
///
/// The common range must be contiguous with respect to the union of both
/// tickers' calendars: a date one side traded and the other did not, strictly
/// inside the common span, is a gap and the pair is rejected. Values are
/// never recomputed, only rows outside the common span are dropped.
pub fn align_pair(
    a: &TimeSeries,
    b: &TimeSeries,
) -> Result<(TimeSeries, TimeSeries, AlignmentReport), IngestError> {
    let common: Vec<NaiveDate> = intersect_sorted(a.dates(), b.dates());
    if common.is_empty() {
        return Err(IngestError::EmptyOverlap);
    }
    let (start, end) = (common[0], *common.last().unwrap());

    let union: BTreeSet<NaiveDate> = a.dates().iter().chain(b.dates()).copied().collect();
    let mut gaps = Vec::new();
    let mut next_common = common.iter().copied().peekable();
    for date in union.range(start..=end) {
        while next_common.peek().is_some_and(|c| c < date) {
            next_common.next();
        }
        match next_common.peek() {
            Some(c) if c == date => {}
            Some(c) => gaps.push((*date, *c)),
            // Unreachable: `end` is itself a common date.
            None => gaps.push((*date, end)),
        }
    }
    if !gaps.is_empty() {
        return Err(IngestError::GapInCommonDomain { gaps });
    }

    let report = AlignmentReport {
        common_start: start,
        common_end: end,
        common_length: common.len(),
        dropped_left: a.len() - common.len(),
        dropped_right: b.len() - common.len(),
        gaps: Vec::new(),
    };
    Ok((restrict(a, &common), restrict(b, &common), report))
}

fn intersect_sorted(a: &[NaiveDate], b: &[NaiveDate]) -> Vec<NaiveDate> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn restrict(ts: &TimeSeries, dates: &[NaiveDate]) -> TimeSeries {
    let keep: Vec<usize> = {
        let mut keep = Vec::with_capacity(dates.len());
        let mut cursor = 0;
        for (idx, d) in ts.dates().iter().enumerate() {
            if cursor < dates.len() && *d == dates[cursor] {
                keep.push(idx);
                cursor += 1;
            }
        }
        assert_eq!(cursor, dates.len(), "common dates must exist on both sides");
        keep
    };
    let channels = ts
        .channels
        .iter()
        .map(|(c, v)| (*c, keep.iter().map(|&i| v[i]).collect()))
        .collect();
    TimeSeries {
        ticker: ts.ticker.clone(),
        dates: dates.to_vec(),
        channels,
    }
}

/// Calendar dates inside the series' own span that the series is missing.
/// Dates outside `[first, last]` are not reported.
pub fn validate_continuity(ts: &TimeSeries, calendar: &[NaiveDate]) -> Vec<NaiveDate> {
    let (Some(first), Some(last)) = (ts.dates().first(), ts.dates().last()) else {
        return Vec::new();
    };
    let mut missing = Vec::new();
    let mut own = ts.dates().iter().peekable();
    for date in calendar.iter().filter(|d| *d >= first && *d <= last) {
        while own.peek().is_some_and(|o| *o < date) {
            own.next();
        }
        if own.peek() != Some(&date) {
            missing.push(*date);
        }
    }
    missing
}

// --- binary caches -----------------------------------------------------
//
// `ingest` runs once and later stages reload its output, so single series
// and aligned pairs are cached in small versioned binary files. Layout of
// a series cache (all integers little-endian):
//
//   "CRPS" | version u8 | ticker (u16 len + utf-8) | n_channels u8
//   | channel ids u8 xн | T u32 | dates i64 xT (days from CE)
//   | per channel: f64 xT
//
// A pair cache ("CRPA") stores two tickers, the shared dates, then each
// side's channel blocks in order. No timestamps or absolute paths, so a
// rebuild from identical inputs is byte-identical.

const SERIES_MAGIC: &[u8; 4] = b"CRPS";
const PAIR_MAGIC: &[u8; 4] = b"CRPA";
const CACHE_VERSION: u8 = 1;

pub fn write_series_cache(path: &Path, ts: &TimeSeries) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SERIES_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    write_series_body(&mut w, ts)?;
    w.flush()?;
    Ok(())
}

pub fn read_series_cache(path: &Path) -> Result<TimeSeries, IngestError> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, path, SERIES_MAGIC)?;
    read_series_body(&mut r, path)
}

pub fn write_pair_cache(path: &Path, a: &TimeSeries, b: &TimeSeries) -> Result<(), IngestError> {
    assert_eq!(a.dates(), b.dates(), "pair cache requires aligned series");
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PAIR_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    write_series_body(&mut w, a)?;
    write_series_body(&mut w, b)?;
    w.flush()?;
    Ok(())
}

pub fn read_pair_cache(path: &Path) -> Result<(TimeSeries, TimeSeries), IngestError> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, path, PAIR_MAGIC)?;
    let a = read_series_body(&mut r, path)?;
    let b = read_series_body(&mut r, path)?;
    if a.dates() != b.dates() {
        return Err(IngestError::BadCache {
            path: path.to_path_buf(),
            reason: "pair sides disagree on dates".into(),
        });
    }
    Ok((a, b))
}

fn write_series_body<W: Write>(w: &mut W, ts: &TimeSeries) -> Result<(), IngestError> {
    let ticker = ts.ticker.as_bytes();
    w.write_all(&(ticker.len() as u16).to_le_bytes())?;
    w.write_all(ticker)?;
    w.write_all(&[ts.dim() as u8])?;
    for (c, _) in ts.channels() {
        w.write_all(&[c.id()])?;
    }
    w.write_all(&(ts.len() as u32).to_le_bytes())?;
    for d in ts.dates() {
        w.write_all(&i64::from(d.num_days_from_ce()).to_le_bytes())?;
    }
    for (_, values) in ts.channels() {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_series_body<R: Read>(r: &mut R, path: &Path) -> Result<TimeSeries, IngestError> {
    let bad = |reason: &str| IngestError::BadCache {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let ticker_len = read_u16(r)? as usize;
    let mut ticker = vec![0u8; ticker_len];
    r.read_exact(&mut ticker)?;
    let ticker = String::from_utf8(ticker).map_err(|_| bad("ticker is not utf-8"))?;
    let n_channels = read_u8(r)? as usize;
    let mut ids = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let id = read_u8(r)?;
        ids.push(Channel::from_id(id).ok_or_else(|| bad("unknown channel id"))?);
    }
    let len = read_u32(r)? as usize;
    let mut dates = Vec::with_capacity(len);
    for _ in 0..len {
        let days = read_i64(r)?;
        let days = i32::try_from(days).map_err(|_| bad("date out of range"))?;
        dates.push(NaiveDate::from_num_days_from_ce_opt(days).ok_or_else(|| bad("date out of range"))?);
    }
    let mut channels = Vec::with_capacity(n_channels);
    for id in ids {
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(read_f64(r)?);
        }
        channels.push((id, values));
    }
    TimeSeries::new(ticker, dates, channels).map_err(|e| bad(&e.to_string()))
}

fn expect_magic<R: Read>(r: &mut R, path: &Path, magic: &[u8; 4]) -> Result<(), IngestError> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    if &head[..4] != magic {
        return Err(IngestError::BadCache {
            path: path.to_path_buf(),
            reason: format!("expected magic {:?}", std::str::from_utf8(magic).unwrap()),
        });
    }
    if head[4] != CACHE_VERSION {
        return Err(IngestError::BadCache {
            path: path.to_path_buf(),
            reason: format!("unsupported version {}", head[4]),
        });
    }
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> std::io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
