//! Model features derived from daily samples: seasons, snow typing, wind
//! decomposition, interaction terms, grouped outage rates, one-hot encoding
//! and standard scaling.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::csv_util::{self, csv_err, row_error};
use crate::error::{Error, Result, RowError};
use crate::ingest::DailySample;

/// Continuous features, scaled before fitting.
pub const CONTINUOUS_FEATURES: [&str; 10] = [
    "wspd", "prcp", "tavg", "EVI", "wind_x", "wind_y", "cos_wdir", "sin_wdir", "ws_evi", "wind_temp",
];

/// Dummy columns. Spring and Dry_Snow are the dropped reference levels.
pub const ONE_HOT_FEATURES: [&str; 5] = [
    "season_summer",
    "season_autumn",
    "season_winter",
    "snow_type_No_Snow",
    "snow_type_Wet_Snow",
];

/// Upper bound of the wet-snow temperature band, °C (inclusive).
pub const WET_SNOW_MAX_TAVG: f64 = 2.0;

pub fn feature_names() -> Vec<String> {
    CONTINUOUS_FEATURES
        .iter()
        .chain(ONE_HOT_FEATURES.iter())
        .map(|s| s.to_string())
        .collect()
}

pub fn is_one_hot(name: &str) -> bool {
    ONE_HOT_FEATURES.contains(&name)
}

// ---------------------------------------------------------------------------
// Categorical features
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Autumn, Season::Winter];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Season::ALL
            .into_iter()
            .find(|season| season.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownCategory {
                kind: "season",
                value: s.to_string(),
            })
    }
}

/// How dates map to seasons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonRule {
    /// Dec–Feb winter, Mar–May spring, Jun–Aug summer, Sep–Nov autumn.
    #[default]
    Meteorological,
}

pub fn derive_season(date: NaiveDate) -> Season {
    match date.month() {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Autumn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SnowType {
    #[serde(rename = "No_Snow")]
    NoSnow,
    #[serde(rename = "Dry_Snow")]
    DrySnow,
    #[serde(rename = "Wet_Snow")]
    WetSnow,
}

impl SnowType {
    pub const ALL: [SnowType; 3] = [SnowType::NoSnow, SnowType::DrySnow, SnowType::WetSnow];

    pub fn as_str(self) -> &'static str {
        match self {
            SnowType::NoSnow => "No_Snow",
            SnowType::DrySnow => "Dry_Snow",
            SnowType::WetSnow => "Wet_Snow",
        }
    }
}

impl fmt::Display for SnowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SnowType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SnowType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownCategory {
                kind: "snow type",
                value: s.to_string(),
            })
    }
}

/// Snow type from precipitation (mm) and average temperature (°C).
///
/// Rain (precipitation above 2 °C) counts as `NoSnow`.
pub fn classify_snow(prcp: f64, tavg: f64) -> Result<SnowType> {
    if prcp.is_nan() || prcp < 0.0 {
        return Err(Error::Validation(format!("precipitation must be >= 0, got {prcp}")));
    }
    if tavg.is_nan() {
        return Err(Error::Validation("temperature is NaN".into()));
    }
    Ok(if prcp == 0.0 {
        SnowType::NoSnow
    } else if tavg < 0.0 {
        SnowType::DrySnow
    } else if tavg <= WET_SNOW_MAX_TAVG {
        SnowType::WetSnow
    } else {
        SnowType::NoSnow
    })
}

/// Dummy values in [`ONE_HOT_FEATURES`] order.
pub fn one_hot_encode(season: Season, snow: SnowType) -> [f64; 5] {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [
        flag(season == Season::Summer),
        flag(season == Season::Autumn),
        flag(season == Season::Winter),
        flag(snow == SnowType::NoSnow),
        flag(snow == SnowType::WetSnow),
    ]
}

/// String-labeled variant of [`one_hot_encode`].
pub fn one_hot_encode_labels(season: &str, snow: &str) -> Result<[f64; 5]> {
    Ok(one_hot_encode(season.parse()?, snow.parse()?))
}

// ---------------------------------------------------------------------------
// Wind and interactions
// ---------------------------------------------------------------------------

/// How the recorded wind direction maps onto the decomposition angle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConvention {
    /// Use the recorded angle directly as θ.
    #[default]
    Raw,
    /// Recorded angle is the compass direction the wind blows from
    /// (clockwise from north); components point where the wind goes.
    Meteorological,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindComponents {
    pub vx: f64,
    pub vy: f64,
    pub cos_wdir: f64,
    pub sin_wdir: f64,
}

pub fn decompose_wind(wspd: f64, wdir: f64, convention: DirectionConvention) -> WindComponents {
    let theta = wdir.to_radians();
    let (cos_wdir, sin_wdir) = match convention {
        DirectionConvention::Raw => (theta.cos(), theta.sin()),
        DirectionConvention::Meteorological => (-theta.sin(), -theta.cos()),
    };
    WindComponents {
        vx: wspd * cos_wdir,
        vy: wspd * sin_wdir,
        cos_wdir,
        sin_wdir,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interactions {
    pub ws_evi: f64,
    pub wind_temp: f64,
}

/// Interaction terms on unscaled inputs.
pub fn build_interactions(wspd: f64, evi: f64, tavg: f64) -> Interactions {
    Interactions {
        ws_evi: wspd * evi,
        wind_temp: wspd * tavg,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub direction_convention: DirectionConvention,
    pub season_rule: SeasonRule,
}

/// Raw (unscaled) feature values for one day, in [`feature_names`] order.
pub fn feature_row(sample: &DailySample, options: &FeatureOptions) -> Result<Vec<f64>> {
    if sample.wspd.is_nan() || sample.wspd < 0.0 {
        return Err(Error::Validation(format!("wind speed must be >= 0, got {}", sample.wspd)));
    }
    if !(0.0..360.0).contains(&sample.wdir) {
        return Err(Error::Validation(format!(
            "wind direction must be in [0, 360), got {}",
            sample.wdir
        )));
    }
    if !(-1.0..=1.0).contains(&sample.evi) {
        return Err(Error::Validation(format!("EVI must be in [-1, 1], got {}", sample.evi)));
    }
    let snow = classify_snow(sample.prcp, sample.tavg)?;
    let season = match options.season_rule {
        SeasonRule::Meteorological => derive_season(sample.date),
    };
    let wind = decompose_wind(sample.wspd, sample.wdir, options.direction_convention);
    let inter = build_interactions(sample.wspd, sample.evi, sample.tavg);
    let mut row = vec![
        sample.wspd,
        sample.prcp,
        sample.tavg,
        sample.evi,
        wind.vx,
        wind.vy,
        wind.cos_wdir,
        wind.sin_wdir,
        inter.ws_evi,
        inter.wind_temp,
    ];
    row.extend_from_slice(&one_hot_encode(season, snow));
    Ok(row)
}

/// Raw feature table for a daily sequence.
pub fn build_feature_table(samples: &[DailySample], options: &FeatureOptions) -> Result<FeatureTable> {
    let rows = samples
        .iter()
        .map(|s| feature_row(s, options))
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::new(
        feature_names(),
        rows,
        samples.iter().map(|s| s.outage).collect(),
        samples.iter().map(|s| s.date).collect(),
    )
}

// ---------------------------------------------------------------------------
// Feature table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub dates: Vec<NaiveDate>,
    /// Marks rows created by oversampling.
    pub synthetic: Vec<bool>,
}

impl FeatureTable {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
        dates: Vec<NaiveDate>,
    ) -> Result<Self> {
        let synthetic = vec![false; rows.len()];
        let table = Self {
            feature_names,
            rows,
            labels,
            dates,
            synthetic,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.feature_names.len();
        let mut seen = HashSet::new();
        if let Some(dup) = self.feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Validation(format!("duplicate feature name '{dup}'")));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != width) {
            return Err(Error::Validation(format!(
                "row {i} has {} values, expected {width}",
                self.rows[i].len()
            )));
        }
        let n = self.rows.len();
        if self.labels.len() != n || self.dates.len() != n || self.synthetic.len() != n {
            return Err(Error::Validation(format!(
                "table has {n} rows but {} labels, {} dates, {} synthetic flags",
                self.labels.len(),
                self.dates.len(),
                self.synthetic.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            dates: indices.iter().map(|&i| self.dates[i]).collect(),
            synthetic: indices.iter().map(|&i| self.synthetic[i]).collect(),
        }
    }

    /// Write as CSV: feature columns, then `label`, `date` and optionally `synthetic`.
    pub fn write_csv<W: Write>(&self, out: W, with_synthetic: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["label", "date"]);
        if with_synthetic {
            header.push("synthetic");
        }
        w.write_record(&header).map_err(csv_err("features"))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.rows[i].iter().map(|v| v.to_string()).collect();
            rec.push(u8::from(self.labels[i]).to_string());
            rec.push(self.dates[i].format(csv_util::DATE_FORMAT).to_string());
            if with_synthetic {
                rec.push(u8::from(self.synthetic[i]).to_string());
            }
            w.write_record(&rec).map_err(csv_err("features"))?;
        }
        csv_util::flush(&mut w, "features")
    }

    pub fn read_csv<R: Read>(input: R, name: &str) -> Result<FeatureTable> {
        let mut rdr = csv_util::reader(input);
        let headers = rdr.headers().map_err(csv_err(name))?.clone();
        let pos = |col: &str| headers.iter().position(|h| h == col);
        let label_idx = pos("label");
        let Some(date_idx) = pos("date") else {
            return Err(Error::Schema {
                file: name.to_string(),
                message: "missing required column: date".into(),
            });
        };
        let synthetic_idx = pos("synthetic");
        let feature_idx: Vec<usize> = (0..headers.len())
            .filter(|i| Some(*i) != label_idx && *i != date_idx && Some(*i) != synthetic_idx)
            .collect();
        let feature_names = feature_idx.iter().map(|&i| headers[i].to_string()).collect();

        let mut table = FeatureTable {
            feature_names,
            rows: Vec::new(),
            labels: Vec::new(),
            dates: Vec::new(),
            synthetic: Vec::new(),
        };
        let mut errors: Vec<RowError> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err(name))?;
            let parsed = (|| {
                let row = feature_idx
                    .iter()
                    .map(|&i| csv_util::parse_f64(&rec[i], &headers[i]))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let flag = |idx: Option<usize>, col: &str| match idx.map(|i| &rec[i]) {
                    None | Some("0") | Some("") => Ok(false),
                    Some("1") => Ok(true),
                    Some(other) => Err(format!("{col} must be 0 or 1, got '{other}'")),
                };
                Ok((
                    row,
                    flag(label_idx, "label")?,
                    csv_util::parse_date(&rec[date_idx])?,
                    flag(synthetic_idx, "synthetic")?,
                ))
            })();
            match parsed {
                Ok((row, label, date, synthetic)) => {
                    table.rows.push(row);
                    table.labels.push(label);
                    table.dates.push(date);
                    table.synthetic.push(synthetic);
                }
                Err(msg) => errors.push(row_error(&rec, msg)),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Rows {
                file: name.to_string(),
                errors,
            });
        }
        table.validate()?;
        Ok(table)
    }

    pub fn read_csv_path(path: &Path) -> Result<FeatureTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }
}

// ---------------------------------------------------------------------------
// Bins and grouped outage rates
// ---------------------------------------------------------------------------

/// Ordered bin edges. Bin `i` is `[edges[i], edges[i+1])`; the last bin is
/// open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinSpec {
    edges: Vec<f64>,
}

impl BinSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Validation("bin spec needs at least one edge".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Validation("bin edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "bin edges must be strictly increasing: {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    /// 0–5, 5–10, 10–15, 15–20, 20–25, 25+ m/s.
    pub fn wind_default() -> Self {
        Self {
            edges: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
        }
    }

    /// `count` equal-width bins starting at `min` and spanning to `max`; the
    /// last bin is open so `max` itself is included. Collapses to a single
    /// bin when the range is empty.
    pub fn equal_width(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min || count == 0 {
            return Err(Error::Validation(format!(
                "cannot build {count} equal-width bins over [{min}, {max}]"
            )));
        }
        let width = (max - min) / count as f64;
        if width <= 0.0 {
            return Self::new(vec![min]);
        }
        Self::new((0..count).map(|i| min + width * i as f64).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Bin index for `x`, or `None` when `x` lies below the first edge.
    pub fn assign(&self, x: f64) -> Option<usize> {
        if x.is_nan() || x < self.edges[0] {
            return None;
        }
        Some(self.edges.partition_point(|e| *e <= x) - 1)
    }

    pub fn labels(&self) -> Vec<String> {
        let n = self.edges.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    format!("{}-{}", fmt_edge(self.edges[i]), fmt_edge(self.edges[i + 1]))
                } else {
                    format!("{}+", fmt_edge(self.edges[i]))
                }
            })
            .collect()
    }
}

fn fmt_edge(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x}")
    } else {
        format!("{x:.3}")
    }
}

impl TryFrom<Vec<f64>> for BinSpec {
    type Error = Error;

    /// A trailing `inf` edge is accepted and dropped, since the last bin is
    /// open anyway.
    fn try_from(mut edges: Vec<f64>) -> Result<Self> {
        if edges.len() > 1 && edges.last() == Some(&f64::INFINITY) {
            edges.pop();
        }
        BinSpec::new(edges)
    }
}

impl From<BinSpec> for Vec<f64> {
    fn from(b: BinSpec) -> Self {
        b.edges
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    WindSpeed(BinSpec),
    Evi(BinSpec),
    SnowType,
    Season,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub group: String,
    pub total: usize,
    pub outages: usize,
    /// `None` for empty groups.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedRateReport {
    pub groups: Vec<GroupRate>,
}

impl GroupedRateReport {
    /// Tally `(group index, outage)` pairs into per-group outage rates.
    pub fn tally(labels: Vec<String>, members: impl IntoIterator<Item = (usize, bool)>) -> Self {
        let mut counts = vec![(0usize, 0usize); labels.len()];
        for (g, outage) in members {
            counts[g].0 += 1;
            counts[g].1 += usize::from(outage);
        }
        let groups = labels
            .into_iter()
            .zip(counts)
            .map(|(group, (total, outages))| GroupRate {
                group,
                total,
                outages,
                rate: (total > 0).then(|| outages as f64 / total as f64),
            })
            .collect();
        Self { groups }
    }

    pub fn get(&self, group: &str) -> Option<&GroupRate> {
        self.groups.iter().find(|g| g.group == group)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "total", "outages", "rate"])
            .map_err(csv_err("rates"))?;
        for g in &self.groups {
            w.write_record([
                g.group.clone(),
                g.total.to_string(),
                g.outages.to_string(),
                g.rate.map_or_else(|| "null".to_string(), |r| r.to_string()),
            ])
            .map_err(csv_err("rates"))?;
        }
        csv_util::flush(&mut w, "rates")
    }
}

/// Outage rate per group: outage days in the group over days in the group.
pub fn grouped_outage_rate(samples: &[DailySample], grouping: &Grouping) -> Result<GroupedRateReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to group".into()));
    }
    let (labels, keys): (Vec<String>, Vec<Option<usize>>) = match grouping {
        Grouping::WindSpeed(bins) => (bins.labels(), samples.iter().map(|s| bins.assign(s.wspd)).collect()),
        Grouping::Evi(bins) => (bins.labels(), samples.iter().map(|s| bins.assign(s.evi)).collect()),
        Grouping::SnowType => (
            SnowType::ALL.iter().map(|t| t.to_string()).collect(),
            samples
                .iter()
                .map(|s| {
                    classify_snow(s.prcp, s.tavg)
                        .ok()
                        .map(|t| SnowType::ALL.iter().position(|x| *x == t).expect("listed"))
                })
                .collect(),
        ),
        Grouping::Season => (
            Season::ALL.iter().map(|t| t.to_string()).collect(),
            samples
                .iter()
                .map(|s| Season::ALL.iter().position(|x| *x == derive_season(s.date)))
                .collect(),
        ),
    };
    if let Some(i) = keys.iter().position(Option::is_none) {
        return Err(Error::Validation(format!(
            "sample on {} does not fall in any group",
            samples[i].date
        )));
    }
    Ok(GroupedRateReport::tally(
        labels,
        keys.into_iter().flatten().zip(samples.iter().map(|s| s.outage)),
    ))
}

// ---------------------------------------------------------------------------
// Standard scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParam {
    pub mu: f64,
    pub sigma: f64,
}

impl ScaleParam {
    pub fn scale(&self, x: f64) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            (x - self.mu) / self.sigma
        }
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.sigma + self.mu
    }
}

/// Per-feature mean and population standard deviation, fitted on training rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalingParams {
    pub params: IndexMap<String, ScaleParam>,
}

impl ScalingParams {
    pub fn get(&self, name: &str) -> Option<&ScaleParam> {
        self.params.get(name)
    }

    /// Features whose training standard deviation is zero; they scale to 0.
    pub fn zero_variance(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|(_, p)| p.sigma == 0.0)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Map a single named raw row into scaled space.
    pub fn scale_row(&self, names: &[String], row: &[f64]) -> Result<Vec<f64>> {
        let mut missing = Vec::new();
        let out = names
            .iter()
            .zip(row)
            .map(|(n, &x)| match self.params.get(n) {
                Some(p) => p.scale(x),
                None => {
                    if !is_one_hot(n) {
                        missing.push(n.clone());
                    }
                    x
                }
            })
            .collect();
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::FeatureMismatch { missing })
        }
    }
}

pub fn fit_scaling<S: AsRef<str>>(table: &FeatureTable, continuous: &[S]) -> Result<ScalingParams> {
    if table.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scaling needs at least 2 rows, got {}",
            table.len()
        )));
    }
    let missing: Vec<String> = continuous
        .iter()
        .filter(|n| table.column_index(n.as_ref()).is_none())
        .map(|n| n.as_ref().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::FeatureMismatch { missing });
    }
    let n = table.len() as f64;
    let mut params = IndexMap::new();
    for name in continuous {
        let j = table.column_index(name.as_ref()).expect("checked above");
        let mu = table.rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = table.rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma == 0.0 {
            log::warn!("feature {} has zero variance; it will scale to 0", name.as_ref());
        }
        params.insert(name.as_ref().to_string(), ScaleParam { mu, sigma });
    }
    Ok(ScalingParams { params })
}

/// Apply `(x - mu) / sigma` to every scaled column. One-hot columns pass
/// through; any other column without parameters is an error.
pub fn apply_scaling(table: &FeatureTable, params: &ScalingParams) -> Result<FeatureTable> {
    let missing: Vec<String> = table
        .feature_names
        .iter()
        .filter(|n| params.get(n).is_none() && !is_one_hot(n))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::FeatureMismatch { missing });
    }
    let column_params: Vec<Option<ScaleParam>> =
        table.feature_names.iter().map(|n| params.get(n).copied()).collect();
    let mut out = table.clone();
    for row in &mut out.rows {
        for (x, p) in row.iter_mut().zip(&column_params) {
            if let Some(p) = p {
                *x = p.scale(*x);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`apply_scaling`] for features with non-zero sigma.
pub fn unapply_scaling(table: &FeatureTable, params: &ScalingParams) -> FeatureTable {
    let column_params: Vec<Option<ScaleParam>> =
        table.feature_names.iter().map(|n| params.get(n).copied()).collect();
    let mut out = table.clone();
    for row in &mut out.rows {
        for (x, p) in row.iter_mut().zip(&column_params) {
            if let Some(p) = p {
                *x = p.unscale(*x);
            }
        }
    }
    out
}
