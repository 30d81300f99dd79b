//! Raw CSV ingestion, gap repair and alignment into one sample per day.
//!
//! The flow is `parse_* -> impute_weather -> interpolate_evi ->
//! fill_evi_seasonal -> join_daily`. Every step is a pure transformation over
//! in-memory sequences; file IO happens only in the `parse_*`/`read_*` and
//! `write_*` helpers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::csv_util::{self, csv_err, fmt_opt, row_error};
use crate::error::{Error, Result, RowError};

pub const WEATHER_COLUMNS: [&str; 5] = ["date", "tavg", "prcp", "wspd", "wdir"];
pub const OUTAGE_COLUMNS: [&str; 5] = ["date", "cause", "location", "duration_min", "customers"];
pub const EVI_COLUMNS: [&str; 2] = ["date", "evi"];
pub const DAILY_COLUMNS: [&str; 7] = ["date", "tavg", "prcp", "wspd", "wdir", "evi", "outage"];

/// Fraction of missing cells per column above which imputation warns.
pub const MISSING_WARN_FRACTION: f64 = 0.01;

/// Number of prior days averaged when imputing a gap.
pub const IMPUTE_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawWeatherRecord {
    pub date: NaiveDate,
    /// °C
    pub tavg: Option<f64>,
    /// mm
    pub prcp: Option<f64>,
    /// m/s
    pub wspd: Option<f64>,
    /// degrees in [0, 360)
    pub wdir: Option<f64>,
}

/// A weather day with every field present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub tavg: f64,
    pub prcp: f64,
    pub wspd: f64,
    pub wdir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutageRecord {
    pub date: NaiveDate,
    pub cause: String,
    pub location: String,
    /// minutes
    pub duration_min: f64,
    pub customers: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawEviRecord {
    pub date: NaiveDate,
    pub evi: f64,
}

/// One calendar day of aligned weather, vegetation and outage label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailySample {
    pub date: NaiveDate,
    pub tavg: f64,
    pub prcp: f64,
    pub wspd: f64,
    pub wdir: f64,
    pub evi: f64,
    pub outage: bool,
}

/// Inclusive span of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Validation(format!(
                "date range ends ({end}) before it starts ({start})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }
}

/// Daily EVI values starting at `start`; `None` marks days not yet filled.
#[derive(Debug, Clone, PartialEq)]
pub struct EviSeries {
    pub start: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl EviSeries {
    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        let offset = (date - self.start).num_days();
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied().flatten()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.values.len())
    }

    pub fn end(&self) -> Option<NaiveDate> {
        self.dates().last()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }
}

/// Count of imputed cells per weather column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ImputeReport {
    pub rows: usize,
    pub tavg: usize,
    pub prcp: usize,
    pub wspd: usize,
    pub wdir: usize,
}

impl ImputeReport {
    pub fn total(&self) -> usize {
        self.tavg + self.prcp + self.wspd + self.wdir
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutcome {
    pub samples: Vec<DailySample>,
    /// Outage records dated outside the weather range.
    pub dropped_outages: usize,
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

pub fn parse_weather(path: &Path) -> Result<Vec<RawWeatherRecord>> {
    let rdr = csv_util::reader_from_path(path)?;
    read_weather_from(rdr, &path.display().to_string())
}

pub fn read_weather<R: Read>(input: R, name: &str) -> Result<Vec<RawWeatherRecord>> {
    read_weather_from(csv_util::reader(input), name)
}

fn read_weather_from<R: Read>(mut rdr: csv::Reader<R>, file: &str) -> Result<Vec<RawWeatherRecord>> {
    let cols = csv_util::locate_columns(&mut rdr, file, &WEATHER_COLUMNS)?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(file))?;
        let parsed = (|| {
            let date = csv_util::parse_date(&rec[cols[0]])?;
            let tavg = csv_util::parse_opt_f64(&rec[cols[1]], "tavg")?;
            let prcp = csv_util::parse_opt_f64(&rec[cols[2]], "prcp")?;
            let wspd = csv_util::parse_opt_f64(&rec[cols[3]], "wspd")?;
            let wdir = csv_util::parse_opt_f64(&rec[cols[4]], "wdir")?;
            if let Some(p) = prcp.filter(|p| *p < 0.0) {
                return Err(format!("prcp must be >= 0, got {p}"));
            }
            if let Some(w) = wspd.filter(|w| *w < 0.0) {
                return Err(format!("wspd must be >= 0, got {w}"));
            }
            if let Some(d) = wdir.filter(|d| !(0.0..360.0).contains(d)) {
                return Err(format!("wdir must be in [0, 360), got {d}"));
            }
            Ok(RawWeatherRecord {
                date,
                tavg,
                prcp,
                wspd,
                wdir,
            })
        })();
        match parsed {
            Ok(r) if !seen.insert(r.date) => {
                errors.push(row_error(&rec, format!("duplicate date {}", r.date)))
            }
            Ok(r) => out.push(r),
            Err(msg) => errors.push(row_error(&rec, msg)),
        }
    }
    finish_rows(file, errors)?;
    out.sort_by_key(|r| r.date);
    Ok(out)
}

pub fn parse_outages(path: &Path) -> Result<Vec<RawOutageRecord>> {
    let rdr = csv_util::reader_from_path(path)?;
    read_outages_from(rdr, &path.display().to_string())
}

pub fn read_outages<R: Read>(input: R, name: &str) -> Result<Vec<RawOutageRecord>> {
    read_outages_from(csv_util::reader(input), name)
}

fn read_outages_from<R: Read>(mut rdr: csv::Reader<R>, file: &str) -> Result<Vec<RawOutageRecord>> {
    let cols = csv_util::locate_columns(&mut rdr, file, &OUTAGE_COLUMNS)?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(file))?;
        let parsed = (|| {
            let date = csv_util::parse_date(&rec[cols[0]])?;
            let duration_min = csv_util::parse_f64(&rec[cols[3]], "duration_min")?;
            if duration_min < 0.0 {
                return Err(format!("duration_min must be >= 0, got {duration_min}"));
            }
            let customers: u64 = rec[cols[4]]
                .parse()
                .map_err(|_| format!("customers: not a non-negative integer: '{}'", &rec[cols[4]]))?;
            Ok(RawOutageRecord {
                date,
                cause: rec[cols[1]].to_string(),
                location: rec[cols[2]].to_string(),
                duration_min,
                customers,
            })
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(msg) => errors.push(row_error(&rec, msg)),
        }
    }
    finish_rows(file, errors)?;
    out.sort_by_key(|r| r.date);
    Ok(out)
}

pub fn parse_evi(path: &Path) -> Result<Vec<RawEviRecord>> {
    let rdr = csv_util::reader_from_path(path)?;
    read_evi_from(rdr, &path.display().to_string())
}

pub fn read_evi<R: Read>(input: R, name: &str) -> Result<Vec<RawEviRecord>> {
    read_evi_from(csv_util::reader(input), name)
}

fn read_evi_from<R: Read>(mut rdr: csv::Reader<R>, file: &str) -> Result<Vec<RawEviRecord>> {
    let cols = csv_util::locate_columns(&mut rdr, file, &EVI_COLUMNS)?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(file))?;
        let parsed = (|| {
            let date = csv_util::parse_date(&rec[cols[0]])?;
            let evi = csv_util::parse_f64(&rec[cols[1]], "evi")?;
            if !(-1.0..=1.0).contains(&evi) {
                return Err(format!("evi must be in [-1, 1], got {evi}"));
            }
            Ok(RawEviRecord { date, evi })
        })();
        match parsed {
            Ok(r) if !seen.insert(r.date) => {
                errors.push(row_error(&rec, format!("duplicate date {}", r.date)))
            }
            Ok(r) => out.push(r),
            Err(msg) => errors.push(row_error(&rec, msg)),
        }
    }
    finish_rows(file, errors)?;
    out.sort_by_key(|r| r.date);
    Ok(out)
}

fn finish_rows(file: &str, errors: Vec<RowError>) -> Result<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Rows {
            file: file.to_string(),
            errors,
        })
    }
}

// ---------------------------------------------------------------------------
// Weather imputation
// ---------------------------------------------------------------------------

/// Replace each missing weather value with the mean of the same column over
/// the three preceding records. Earlier imputed values count as history, so
/// runs of consecutive gaps are filled left to right. Wind direction uses a
/// circular mean.
pub fn impute_weather(records: &[RawWeatherRecord]) -> Result<(Vec<WeatherDay>, ImputeReport)> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.date);

    let dates: Vec<NaiveDate> = sorted.iter().map(|r| r.date).collect();
    let column = |name: &'static str, get: fn(&RawWeatherRecord) -> Option<f64>, circular: bool| {
        let raw: Vec<Option<f64>> = sorted.iter().map(get).collect();
        fill_column(name, &dates, &raw, circular)
    };
    let (tavg, n_tavg) = column("tavg", |r| r.tavg, false)?;
    let (prcp, n_prcp) = column("prcp", |r| r.prcp, false)?;
    let (wspd, n_wspd) = column("wspd", |r| r.wspd, false)?;
    let (wdir, n_wdir) = column("wdir", |r| r.wdir, true)?;

    let report = ImputeReport {
        rows: sorted.len(),
        tavg: n_tavg,
        prcp: n_prcp,
        wspd: n_wspd,
        wdir: n_wdir,
    };
    let days = (0..sorted.len())
        .map(|i| WeatherDay {
            date: dates[i],
            tavg: tavg[i],
            prcp: prcp[i],
            wspd: wspd[i],
            wdir: wdir[i],
        })
        .collect();
    Ok((days, report))
}

fn fill_column(
    name: &'static str,
    dates: &[NaiveDate],
    raw: &[Option<f64>],
    circular: bool,
) -> Result<(Vec<f64>, usize)> {
    let mut filled = Vec::with_capacity(raw.len());
    let mut imputed = 0;
    for (i, value) in raw.iter().enumerate() {
        let v = match value {
            Some(v) => *v,
            None => {
                if i < IMPUTE_WINDOW {
                    return Err(Error::Imputation {
                        column: name,
                        date: dates[i],
                    });
                }
                imputed += 1;
                let window = &filled[i - IMPUTE_WINDOW..i];
                if circular {
                    circular_mean_deg(window)
                } else {
                    window.iter().sum::<f64>() / IMPUTE_WINDOW as f64
                }
            }
        };
        filled.push(v);
    }
    if !raw.is_empty() {
        let frac = imputed as f64 / raw.len() as f64;
        if frac > MISSING_WARN_FRACTION {
            log::warn!(
                "{name}: {imputed} of {} values missing ({:.2}%), above the 1% guideline",
                raw.len(),
                frac * 100.0
            );
        }
    }
    Ok((filled, imputed))
}

/// Mean direction of a set of angles in degrees, in [0, 360).
///
/// Falls back to the last angle when the unit vectors cancel out.
pub fn circular_mean_deg(angles: &[f64]) -> f64 {
    let (s, c) = angles.iter().fold((0.0_f64, 0.0_f64), |(s, c), a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    if s.hypot(c) < 1e-12 {
        return angles.last().copied().unwrap_or(0.0);
    }
    let deg = s.atan2(c).to_degrees().rem_euclid(360.0);
    // Round away float noise so that e.g. -1e-15 does not become 360 - ε.
    let deg = (deg * 1e9).round() / 1e9;
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

// ---------------------------------------------------------------------------
// EVI
// ---------------------------------------------------------------------------

/// Linearly interpolate 16-day EVI composites to one value per day in `range`.
///
/// Days on or before the first composite hold the first value. Days after the
/// last composite are left as `None` for [`fill_evi_seasonal`].
pub fn interpolate_evi(records: &[RawEviRecord], range: DateRange) -> Result<EviSeries> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no EVI records".into()));
    }
    if records.len() < 2 {
        return Err(Error::InsufficientData(
            "EVI interpolation needs at least two composites".into(),
        ));
    }
    if let Some(w) = records.windows(2).find(|w| w[1].date <= w[0].date) {
        return Err(Error::Validation(format!(
            "EVI records must be strictly ascending by date ({} then {})",
            w[0].date, w[1].date
        )));
    }

    let first = records[0];
    let last = records[records.len() - 1];
    let mut values = Vec::with_capacity(range.len());
    // Index of the knot at or before the current day.
    let mut k = 0;
    for day in range.days() {
        if day <= first.date {
            values.push(Some(first.evi));
            continue;
        }
        if day > last.date {
            values.push(None);
            continue;
        }
        while records[k + 1].date < day {
            k += 1;
        }
        let (a, b) = (records[k], records[k + 1]);
        let v = if day == b.date {
            b.evi
        } else if day == a.date {
            a.evi
        } else {
            let t = (day - a.date).num_days() as f64;
            let span = (b.date - a.date).num_days() as f64;
            let v = a.evi + (b.evi - a.evi) * (t / span);
            v.clamp(a.evi.min(b.evi), a.evi.max(b.evi))
        };
        values.push(Some(v));
    }
    Ok(EviSeries {
        start: range.start,
        values,
    })
}

/// Fill every day after `cutoff` with the mean EVI of the same month-day over
/// `history_years`, using only values on or before `cutoff`. Feb 29 falls back
/// to Feb 28 when the history has no leap day.
pub fn fill_evi_seasonal(
    series: &EviSeries,
    cutoff: NaiveDate,
    history_years: &BTreeSet<i32>,
) -> Result<EviSeries> {
    let mut sums: BTreeMap<(u32, u32), (f64, usize)> = BTreeMap::new();
    for (date, v) in series.dates().zip(&series.values) {
        if date > cutoff || !history_years.contains(&date.year()) {
            continue;
        }
        if let Some(v) = v {
            let e = sums.entry((date.month(), date.day())).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mean_of = |key: (u32, u32)| sums.get(&key).map(|(s, n)| s / *n as f64);

    let mut out = series.clone();
    let mut filled = 0;
    for (date, slot) in series.dates().zip(out.values.iter_mut()) {
        if date <= cutoff {
            continue;
        }
        let key = (date.month(), date.day());
        let v = mean_of(key)
            .or_else(|| if key == (2, 29) { mean_of((2, 28)) } else { None })
            .ok_or_else(|| Error::MissingData {
                what: "seasonal EVI history".into(),
                date,
            })?;
        *slot = Some(v);
        filled += 1;
    }
    if filled > 0 {
        log::info!(
            "filled {filled} EVI day(s) after {cutoff} from {} history year(s)",
            history_years.len()
        );
    }
    Ok(out)
}

/// Calendar years fully covered by `series` on or before `cutoff`.
pub fn default_history_years(series: &EviSeries, cutoff: NaiveDate) -> BTreeSet<i32> {
    let start = series.start;
    let Some(end) = series.end().map(|e| e.min(cutoff)) else {
        return BTreeSet::new();
    };
    (start.year()..=end.year())
        .filter(|y| {
            let jan1 = NaiveDate::from_ymd_opt(*y, 1, 1).expect("valid date");
            let dec31 = NaiveDate::from_ymd_opt(*y, 12, 31).expect("valid date");
            start <= jan1 && dec31 <= end
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Join
// ---------------------------------------------------------------------------

pub fn default_vegetation_causes() -> Vec<String> {
    vec!["Tree Fall".to_string(), "Branch Contact".to_string()]
}

fn normalize_cause(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Align complete weather, daily EVI and outage records into one sample per day.
///
/// A day is labeled positive when at least one outage on that date has a cause
/// in `vegetation_causes` (compared case-insensitively).
pub fn join_daily(
    weather: &[WeatherDay],
    evi: &EviSeries,
    outages: &[RawOutageRecord],
    vegetation_causes: &[String],
) -> Result<JoinOutcome> {
    let (Some(first), Some(last)) = (weather.first(), weather.last()) else {
        return Err(Error::InsufficientData("no weather days to join".into()));
    };
    if let Some(w) = weather.windows(2).find(|w| w[0].date.succ_opt() != Some(w[1].date)) {
        return Err(Error::Validation(format!(
            "weather days are not contiguous: {} is followed by {}",
            w[0].date, w[1].date
        )));
    }
    let range = DateRange::new(first.date, last.date)?;

    let causes: HashSet<String> = vegetation_causes.iter().map(|c| normalize_cause(c)).collect();
    let mut positive_dates = HashSet::new();
    let mut dropped = 0;
    for o in outages {
        if !range.contains(o.date) {
            dropped += 1;
            continue;
        }
        if causes.contains(&normalize_cause(&o.cause)) {
            positive_dates.insert(o.date);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} outage record(s) dated outside {} to {}", range.start, range.end);
    }

    let samples = weather
        .iter()
        .map(|w| {
            let evi = evi.get(w.date).ok_or_else(|| Error::MissingData {
                what: "EVI".into(),
                date: w.date,
            })?;
            Ok(DailySample {
                date: w.date,
                tavg: w.tavg,
                prcp: w.prcp,
                wspd: w.wspd,
                wdir: w.wdir,
                evi,
                outage: positive_dates.contains(&w.date),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JoinOutcome {
        samples,
        dropped_outages: dropped,
    })
}

// ---------------------------------------------------------------------------
// Writers and the joined daily file
// ---------------------------------------------------------------------------

pub fn write_weather<W: Write>(out: W, records: &[RawWeatherRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WEATHER_COLUMNS).map_err(csv_err("weather"))?;
    for r in records {
        w.write_record([
            r.date.format(csv_util::DATE_FORMAT).to_string(),
            fmt_opt(r.tavg),
            fmt_opt(r.prcp),
            fmt_opt(r.wspd),
            fmt_opt(r.wdir),
        ])
        .map_err(csv_err("weather"))?;
    }
    csv_util::flush(&mut w, "weather")
}

pub fn write_outages<W: Write>(out: W, records: &[RawOutageRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTAGE_COLUMNS).map_err(csv_err("outages"))?;
    for r in records {
        w.write_record([
            r.date.format(csv_util::DATE_FORMAT).to_string(),
            r.cause.clone(),
            r.location.clone(),
            r.duration_min.to_string(),
            r.customers.to_string(),
        ])
        .map_err(csv_err("outages"))?;
    }
    csv_util::flush(&mut w, "outages")
}

pub fn write_evi<W: Write>(out: W, records: &[RawEviRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVI_COLUMNS).map_err(csv_err("evi"))?;
    for r in records {
        w.write_record([r.date.format(csv_util::DATE_FORMAT).to_string(), r.evi.to_string()])
            .map_err(csv_err("evi"))?;
    }
    csv_util::flush(&mut w, "evi")
}

pub fn write_daily<W: Write>(out: W, samples: &[DailySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DAILY_COLUMNS).map_err(csv_err("daily"))?;
    for s in samples {
        w.write_record([
            s.date.format(csv_util::DATE_FORMAT).to_string(),
            s.tavg.to_string(),
            s.prcp.to_string(),
            s.wspd.to_string(),
            s.wdir.to_string(),
            s.evi.to_string(),
            u8::from(s.outage).to_string(),
        ])
        .map_err(csv_err("daily"))?;
    }
    csv_util::flush(&mut w, "daily")
}

pub fn parse_daily(path: &Path) -> Result<Vec<DailySample>> {
    let rdr = csv_util::reader_from_path(path)?;
    read_daily_from(rdr, &path.display().to_string())
}

pub fn read_daily<R: Read>(input: R, name: &str) -> Result<Vec<DailySample>> {
    read_daily_from(csv_util::reader(input), name)
}

fn read_daily_from<R: Read>(mut rdr: csv::Reader<R>, file: &str) -> Result<Vec<DailySample>> {
    let cols = csv_util::locate_columns(&mut rdr, file, &DAILY_COLUMNS)?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(file))?;
        let parsed = (|| {
            let f = |i: usize, name: &str| csv_util::parse_f64(&rec[cols[i]], name);
            let outage = match &rec[cols[6]] {
                "0" => false,
                "1" => true,
                other => return Err(format!("outage must be 0 or 1, got '{other}'")),
            };
            Ok(DailySample {
                date: csv_util::parse_date(&rec[cols[0]])?,
                tavg: f(1, "tavg")?,
                prcp: f(2, "prcp")?,
                wspd: f(3, "wspd")?,
                wdir: f(4, "wdir")?,
                evi: f(5, "evi")?,
                outage,
            })
        })();
        match parsed {
            Ok(s) => out.push(s),
            Err(msg) => errors.push(row_error(&rec, msg)),
        }
    }
    finish_rows(file, errors)?;
    Ok(out)
}
