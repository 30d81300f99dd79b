//! Synthetic outage/weather/EVI datasets with a known logistic ground truth.
//!
//! Weather follows a seasonal cycle with AR(1) temperature noise, gamma
//! precipitation and a calm/storm wind mixture whose calm mode sits near
//! 5 m/s. EVI composites every 16 days trace a summer-peaking sinusoid.
//! Outage days are drawn from a logistic model over the standardized feature
//! columns with the planted coefficients; the intercept is solved so the
//! expected count equals the target, and the draw is then thinned or boosted
//! to hit it exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Months, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureOptions, CONTINUOUS_FEATURES};
use crate::ingest::{self, DailySample, DateRange, RawEviRecord, RawOutageRecord, RawWeatherRecord};
use crate::model::sigmoid;

pub const EVI_COMPOSITE_DAYS: u64 = 16;

const VEGETATION_CAUSES: [&str; 2] = ["Tree Fall", "Branch Contact"];
const OTHER_CAUSES: [&str; 3] = ["Equipment Failure", "Lightning", "Animal Contact"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub years: u32,
    pub start_date: NaiveDate,
    /// Exact number of outage days; `None` draws plain Bernoulli labels with
    /// intercept `logit(base_rate)`.
    pub target_outages: Option<usize>,
    /// Effects on standardized features (one-hot columns stay 0/1).
    pub planted_coefficients: BTreeMap<String, f64>,
    pub base_rate: f64,
    /// Fraction of weather cells blanked to exercise imputation.
    pub missing_fraction: f64,
    /// Trailing days left without EVI composites.
    pub evi_tail_days: u32,
    /// Daily probability of a non-vegetation outage record.
    pub other_outage_rate: f64,
}

pub fn default_planted_coefficients() -> BTreeMap<String, f64> {
    [
        ("wspd", 1.5),
        ("EVI", 0.8),
        ("ws_evi", -0.5),
        ("snow_type_Wet_Snow", 3.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            years: 10,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            target_outages: Some(149),
            planted_coefficients: default_planted_coefficients(),
            base_rate: 0.04,
            missing_fraction: 0.005,
            evi_tail_days: 45,
            other_outage_rate: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.years == 0 {
            return Err(Error::Validation("years must be >= 1".into()));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::Validation(format!("base_rate must be in (0, 1), got {}", self.base_rate)));
        }
        if !(0.0..=0.01).contains(&self.missing_fraction) {
            return Err(Error::Validation(format!(
                "missing_fraction must be in [0, 0.01], got {}",
                self.missing_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.other_outage_rate) {
            return Err(Error::Validation("other_outage_rate must be in [0, 1)".into()));
        }
        let names = features::feature_names();
        if let Some(bad) = self.planted_coefficients.keys().find(|k| !names.contains(k)) {
            return Err(Error::UnknownCategory {
                kind: "feature",
                value: bad.clone(),
            });
        }
        if self.planted_coefficients.values().any(|v| !v.is_finite()) {
            return Err(Error::Validation("planted coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> Result<DateRange> {
        let end = self
            .start_date
            .checked_add_months(Months::new(12 * self.years))
            .and_then(|d| d.pred_opt())
            .ok_or_else(|| Error::Validation("synthetic date range overflows".into()))?;
        DateRange::new(self.start_date, end)
    }
}

/// Generated files plus the ground truth behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub weather: Vec<RawWeatherRecord>,
    pub evi: Vec<RawEviRecord>,
    pub outages: Vec<RawOutageRecord>,
    /// Complete daily samples the labels were drawn from.
    pub truth: Vec<DailySample>,
    pub intercept: f64,
    /// Outage probability per day under the planted model.
    pub probabilities: Vec<f64>,
}

impl SynthData {
    pub fn positive_days(&self) -> usize {
        self.truth.iter().filter(|s| s.outage).count()
    }
}

fn seasonal(date: NaiveDate) -> f64 {
    // Peaks mid-July, bottoms mid-January.
    (2.0 * PI * (date.ordinal() as f64 - 105.0) / 365.25).sin()
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let range = config.range()?;
    let n = range.len();
    if let Some(t) = config.target_outages {
        if t > n {
            return Err(Error::Validation(format!(
                "target_outages = {t} exceeds the {n} days generated"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let rain = Gamma::new(0.8, 8.0).expect("valid gamma");
    let calm = Gamma::new(5.0, 1.1).expect("valid gamma");
    let gust = Gamma::new(2.0, 5.0).expect("valid gamma");

    // Weather.
    let mut truth = Vec::with_capacity(n);
    let mut temp_noise = 0.0;
    for date in range.days() {
        temp_noise = 0.7 * temp_noise + 2.5 * unit.sample(&mut rng);
        let tavg = round_to(10.0 + 12.0 * seasonal(date) + temp_noise, 1);
        let prcp = if rng.random_bool(0.33) {
            round_to(rain.sample(&mut rng), 1)
        } else {
            0.0
        };
        let wspd = if rng.random_bool(0.06) {
            10.0 + gust.sample(&mut rng)
        } else {
            calm.sample(&mut rng)
        };
        let wspd = round_to(wspd, 1);
        let wdir = (270.0 + 70.0 * unit.sample(&mut rng)).rem_euclid(360.0).round();
        let wdir = if wdir >= 360.0 { 0.0 } else { wdir };
        truth.push(DailySample {
            date,
            tavg,
            prcp,
            wspd,
            wdir,
            evi: 0.0,
            outage: false,
        });
    }

    // EVI composites through the first one on or after the last day.
    let mut composites = Vec::new();
    let mut date = range.start;
    loop {
        let v = 0.35 + 0.2 * seasonal(date) + 0.03 * unit.sample(&mut rng);
        composites.push(RawEviRecord {
            date,
            evi: round_to(v.clamp(-1.0, 1.0), 4),
        });
        if date >= range.end {
            break;
        }
        date = date + chrono::Days::new(EVI_COMPOSITE_DAYS);
    }
    let daily_evi = ingest::interpolate_evi(&composites, range)?;
    for s in &mut truth {
        s.evi = daily_evi.get(s.date).expect("composites cover the range");
    }
    let published_until = range.end - chrono::Days::new(u64::from(config.evi_tail_days));
    let evi: Vec<RawEviRecord> = composites.into_iter().filter(|c| c.date <= published_until).collect();

    // Labels from the planted logistic model on standardized features.
    let table = features::build_feature_table(&truth, &FeatureOptions::default())?;
    let scaling = features::fit_scaling(&table, &CONTINUOUS_FEATURES)?;
    let scaled = features::apply_scaling(&table, &scaling)?;
    let planted: Vec<(usize, f64)> = config
        .planted_coefficients
        .iter()
        .map(|(name, b)| (scaled.column_index(name).expect("validated"), *b))
        .collect();
    let signal: Vec<f64> = scaled
        .rows
        .iter()
        .map(|r| planted.iter().map(|(j, b)| b * r[*j]).sum())
        .collect();

    let intercept = match config.target_outages {
        Some(t) => solve_intercept(&signal, t as f64),
        None => (config.base_rate / (1.0 - config.base_rate)).ln(),
    };
    let probabilities: Vec<f64> = signal.iter().map(|s| sigmoid(intercept + s)).collect();
    let mut labels: Vec<bool> = probabilities.iter().map(|p| rng.random::<f64>() < *p).collect();
    if let Some(t) = config.target_outages {
        adjust_to_target(&mut labels, &probabilities, t, &mut rng);
    }
    for (s, l) in truth.iter_mut().zip(&labels) {
        s.outage = *l;
    }

    // Outage records: one or two vegetation outages per positive day plus
    // unrelated outages that the cause filter must ignore.
    let mut outages = Vec::new();
    for s in &truth {
        if s.outage {
            let count = if rng.random_bool(0.2) { 2 } else { 1 };
            for _ in 0..count {
                outages.push(outage_record(s.date, VEGETATION_CAUSES[rng.random_range(0..2)], &mut rng));
            }
        }
        if rng.random_bool(config.other_outage_rate) {
            outages.push(outage_record(s.date, OTHER_CAUSES[rng.random_range(0..3)], &mut rng));
        }
    }

    // Weather file with a sprinkle of blank cells, never in the first 3 days.
    let weather = truth
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut blank = |v: f64| {
                let drop = i >= ingest::IMPUTE_WINDOW && rng.random_bool(config.missing_fraction);
                (!drop).then_some(v)
            };
            RawWeatherRecord {
                date: s.date,
                tavg: blank(s.tavg),
                prcp: blank(s.prcp),
                wspd: blank(s.wspd),
                wdir: blank(s.wdir),
            }
        })
        .collect();

    Ok(SynthData {
        weather,
        evi,
        outages,
        truth,
        intercept,
        probabilities,
    })
}

fn outage_record(date: NaiveDate, cause: &str, rng: &mut ChaCha8Rng) -> RawOutageRecord {
    RawOutageRecord {
        date,
        cause: cause.to_string(),
        location: format!("Feeder {}", rng.random_range(1..=4)),
        duration_min: f64::from(rng.random_range(15..=720u32)),
        customers: rng.random_range(1..=600),
    }
}

/// Intercept at which the expected number of positives equals `target`.
fn solve_intercept(signal: &[f64], target: f64) -> f64 {
    let expected = |a: f64| signal.iter().map(|s| sigmoid(a + s)).sum::<f64>();
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Flip labels until exactly `target` are positive: surplus positives are
/// dropped uniformly, missing ones are added from negatives weighted by
/// their probability.
fn adjust_to_target(labels: &mut [bool], probs: &[f64], target: usize, rng: &mut ChaCha8Rng) {
    let count = labels.iter().filter(|l| **l).count();
    if count > target {
        let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
        pos.shuffle(rng);
        for &i in &pos[..count - target] {
            labels[i] = false;
        }
    } else if count < target {
        // Weighted sampling without replacement (largest u^(1/p) keys).
        let mut keyed: Vec<(f64, usize)> = (0..labels.len())
            .filter(|&i| !labels[i])
            .map(|i| (rng.random::<f64>().ln() / probs[i], i))
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &keyed[..target - count] {
            labels[i] = true;
        }
    }
}

pub struct SynthPaths {
    pub weather: PathBuf,
    pub evi: PathBuf,
    pub outages: PathBuf,
}

/// Write `weather.csv`, `evi.csv` and `outages.csv` into `dir`, creating it.
pub fn write_files(data: &SynthData, dir: &Path) -> Result<SynthPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = SynthPaths {
        weather: dir.join("weather.csv"),
        evi: dir.join("evi.csv"),
        outages: dir.join("outages.csv"),
    };
    let create = |p: &Path| std::fs::File::create(p).map_err(|e| Error::io(p, e));
    ingest::write_weather(create(&paths.weather)?, &data.weather)?;
    ingest::write_evi(create(&paths.evi)?, &data.evi)?;
    ingest::write_outages(create(&paths.outages)?, &data.outages)?;
    Ok(paths)
}
