//! Temporal splitting, classification metrics, heatmap rates and match rate.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::csv_util::{self, csv_err, row_error};
use crate::error::{Error, Result};
use crate::features::{BinSpec, FeatureTable};
use crate::model::{predict_label, CoefficientReport, LogisticModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: FeatureTable,
    pub test: FeatureTable,
    /// First date of the test partition.
    pub split_date: NaiveDate,
}

/// First `ceil(train_fraction * N)` rows by date go to training, the rest to
/// testing. Rows must be strictly ascending by date.
pub fn temporal_split(table: &FeatureTable, train_fraction: f64) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if let Some(i) = table.dates.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Validation(format!(
            "rows are not strictly ascending by date at row {} ({} then {})",
            i + 1,
            table.dates[i],
            table.dates[i + 1]
        )));
    }
    let n = table.len();
    // Guard against 0.7 * 10 = 7.000000000000001 rounding up to 8.
    let n_train = ((train_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InsufficientData(format!(
            "a {train_fraction} split of {n} rows leaves an empty partition"
        )));
    }
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n).collect();
    Ok(SplitResult {
        train: table.select(&train_idx),
        test: table.select(&test_idx),
        split_date: table.dates[n_train],
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        if p + r == 0.0 {
            None
        } else {
            Some(2.0 * p * r / (p + r))
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Threshold-based metrics; `None` marks an undefined value (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub confusion: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classification_metrics(labels: &[bool], scores: &[f64], threshold: f64) -> Result<ClassificationMetrics> {
    check_lengths(labels, scores)?;
    let mut c = ConfusionCounts::default();
    for (&y, &s) in labels.iter().zip(scores) {
        match (y, predict_label(s, threshold)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(ClassificationMetrics {
        confusion: c,
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
    })
}

fn check_lengths(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Validation(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("scores contain NaN".into()));
    }
    Ok(())
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, counting ties as one half. `None` when only one class
/// is present.
///
/// Sorts once and counts, per block of tied scores, the negatives ranked below.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<Option<f64>> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the Mann-Whitney U statistic, kept integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(Some(twice_u as f64 / 2.0 / (n_pos as f64 * n_neg as f64)))
}

/// One scored day for heatmap aggregation, on raw feature values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatPoint {
    pub wspd: f64,
    pub evi: f64,
    pub outage: bool,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub wind_bin: String,
    pub evi_bin: String,
    pub wind_index: usize,
    pub evi_index: usize,
    pub count: usize,
    pub outages: usize,
    /// Observed outage rate; `None` for an empty cell.
    pub actual_rate: Option<f64>,
    /// Mean predicted probability; `None` for an empty cell.
    pub predicted_rate: Option<f64>,
}

impl HeatmapCell {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn abs_error(&self) -> Option<f64> {
        Some((self.predicted_rate? - self.actual_rate?).abs())
    }
}

/// Aggregate points into wind × EVI cells, wind-major order.
pub fn heatmap_cells(points: &[HeatPoint], wind_bins: &BinSpec, evi_bins: &BinSpec) -> Result<Vec<HeatmapCell>> {
    let (nw, ne) = (wind_bins.len(), evi_bins.len());
    let mut sums = vec![(0usize, 0usize, 0.0f64); nw * ne];
    for p in points {
        let w = wind_bins.assign(p.wspd).ok_or_else(|| {
            Error::Validation(format!("wind speed {} is below the first wind bin", p.wspd))
        })?;
        let e = evi_bins
            .assign(p.evi)
            .ok_or_else(|| Error::Validation(format!("EVI {} is below the first EVI bin", p.evi)))?;
        let cell = &mut sums[w * ne + e];
        cell.0 += 1;
        cell.1 += usize::from(p.outage);
        cell.2 += p.probability;
    }
    let wind_labels = wind_bins.labels();
    let evi_labels = evi_bins.labels();
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(k, (count, outages, prob_sum))| {
            let (w, e) = (k / ne, k % ne);
            HeatmapCell {
                wind_bin: wind_labels[w].clone(),
                evi_bin: evi_labels[e].clone(),
                wind_index: w,
                evi_index: e,
                count,
                outages,
                actual_rate: (count > 0).then(|| outages as f64 / count as f64),
                predicted_rate: (count > 0).then(|| prob_sum / count as f64),
            }
        })
        .collect())
}

/// Heatmap for a raw (unscaled) test table scored by `model`.
pub fn heatmap_rates(
    test: &FeatureTable,
    model: &LogisticModel,
    wind_bins: &BinSpec,
    evi_bins: &BinSpec,
) -> Result<Vec<HeatmapCell>> {
    let probs = model.predict_raw_table(test)?;
    heatmap_cells(&heat_points(test, &probs)?, wind_bins, evi_bins)
}

fn heat_points(raw: &FeatureTable, probabilities: &[f64]) -> Result<Vec<HeatPoint>> {
    let missing: Vec<String> = ["wspd", "EVI"]
        .into_iter()
        .filter(|n| raw.column_index(n).is_none())
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::FeatureMismatch { missing });
    }
    let wj = raw.column_index("wspd").expect("checked");
    let ej = raw.column_index("EVI").expect("checked");
    Ok(raw
        .rows
        .iter()
        .zip(&raw.labels)
        .zip(probabilities)
        .map(|((r, &outage), &probability)| HeatPoint {
            wspd: r[wj],
            evi: r[ej],
            outage,
            probability,
        })
        .collect())
}

/// `count` equal-width bins over the observed EVI range.
pub fn default_evi_bins(evi: &[f64], count: usize) -> Result<BinSpec> {
    let min = evi.iter().copied().fold(f64::INFINITY, f64::min);
    let max = evi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    BinSpec::equal_width(min, max, count)
}

/// Fraction of non-empty cells whose predicted and actual rates differ by at
/// most `tolerance`.
pub fn match_rate(cells: &[HeatmapCell], tolerance: f64) -> Result<f64> {
    match_rate_min_count(cells, tolerance, 1)
}

/// [`match_rate`] restricted to cells with at least `min_count` members.
pub fn match_rate_min_count(cells: &[HeatmapCell], tolerance: f64, min_count: usize) -> Result<f64> {
    let eligible: Vec<f64> = cells
        .iter()
        .filter(|c| c.count >= min_count.max(1))
        .filter_map(HeatmapCell::abs_error)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no heatmap cell has at least {} member(s)",
            min_count.max(1)
        )));
    }
    let hits = eligible.iter().filter(|e| **e <= tolerance).count();
    Ok(hits as f64 / eligible.len() as f64)
}

/// Fraction of samples whose probability is within `tolerance` of its 0/1 label.
pub fn per_sample_match_rate(labels: &[bool], scores: &[f64], tolerance: f64) -> Option<f64> {
    if labels.is_empty() || labels.len() != scores.len() {
        return None;
    }
    let hits = labels
        .iter()
        .zip(scores)
        .filter(|(y, s)| (**s - if **y { 1.0 } else { 0.0 }).abs() <= tolerance)
        .count();
    Some(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub threshold: f64,
    pub tolerance: f64,
    pub wind_bins: BinSpec,
    /// Explicit EVI edges; when absent, `evi_bin_count` equal-width bins over
    /// the test-set EVI range.
    pub evi_bins: Option<BinSpec>,
    pub evi_bin_count: usize,
    /// Cells with fewer members are left out of the match rate.
    pub min_cell_count: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            tolerance: 0.05,
            wind_bins: BinSpec::wind_default(),
            evi_bins: None,
            evi_bin_count: 4,
            min_cell_count: 1,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Validation(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Validation(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        if self.evi_bin_count == 0 {
            return Err(Error::Validation("evi_bin_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// A test-set day with its raw wind speed/EVI, label and score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDay {
    pub date: NaiveDate,
    pub wspd: f64,
    pub evi: f64,
    pub outage: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub source: String,
    pub test_size: usize,
    pub test_start: Option<NaiveDate>,
    pub threshold: f64,
    pub tolerance: f64,
    pub confusion: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub match_rate: Option<f64>,
    pub match_rate_per_sample: Option<f64>,
    pub min_cell_count: usize,
    pub heatmap: Vec<HeatmapCell>,
    pub coefficients: Option<CoefficientReport>,
}

/// Build the full report for scored test days.
pub fn evaluate(
    days: &[ScoredDay],
    options: &EvalOptions,
    source: &str,
    coefficients: Option<CoefficientReport>,
) -> Result<EvaluationReport> {
    options.validate()?;
    if days.is_empty() {
        return Err(Error::InsufficientData("test split is empty".into()));
    }
    let labels: Vec<bool> = days.iter().map(|d| d.outage).collect();
    let scores: Vec<f64> = days.iter().map(|d| d.score).collect();
    let metrics = classification_metrics(&labels, &scores, options.threshold)?;
    let auc = roc_auc(&labels, &scores)?;

    let evi_bins = match &options.evi_bins {
        Some(b) => b.clone(),
        None => default_evi_bins(&days.iter().map(|d| d.evi).collect::<Vec<_>>(), options.evi_bin_count)?,
    };
    let points: Vec<HeatPoint> = days
        .iter()
        .map(|d| HeatPoint {
            wspd: d.wspd,
            evi: d.evi,
            outage: d.outage,
            probability: d.score,
        })
        .collect();
    let heatmap = heatmap_cells(&points, &options.wind_bins, &evi_bins)?;
    let match_rate = match match_rate_min_count(&heatmap, options.tolerance, options.min_cell_count) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("match rate undefined: {e}");
            None
        }
    };
    Ok(EvaluationReport {
        source: source.to_string(),
        test_size: days.len(),
        test_start: days.first().map(|d| d.date),
        threshold: options.threshold,
        tolerance: options.tolerance,
        confusion: metrics.confusion,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        roc_auc: auc,
        match_rate,
        match_rate_per_sample: per_sample_match_rate(&labels, &scores, options.tolerance),
        min_cell_count: options.min_cell_count,
        heatmap,
        coefficients,
    })
}

/// Scored days for a raw test table under `model`.
pub fn score_table(test: &FeatureTable, model: &LogisticModel) -> Result<Vec<ScoredDay>> {
    let probs = model.predict_raw_table(test)?;
    let points = heat_points(test, &probs)?;
    Ok(points
        .iter()
        .zip(&test.dates)
        .map(|(p, &date)| ScoredDay {
            date,
            wspd: p.wspd,
            evi: p.evi,
            outage: p.outage,
            score: p.probability,
        })
        .collect())
}

/// Scored days for a raw test table using external `date,score` predictions.
pub fn score_table_external(test: &FeatureTable, predictions: &[(NaiveDate, f64)]) -> Result<Vec<ScoredDay>> {
    let by_date: HashMap<NaiveDate, f64> = predictions.iter().copied().collect();
    let probs = test
        .dates
        .iter()
        .map(|d| {
            by_date.get(d).copied().ok_or_else(|| Error::MissingData {
                what: "external prediction".into(),
                date: *d,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = heat_points(test, &probs)?;
    Ok(points
        .iter()
        .zip(&test.dates)
        .map(|(p, &date)| ScoredDay {
            date,
            wspd: p.wspd,
            evi: p.evi,
            outage: p.outage,
            score: p.probability,
        })
        .collect())
}

pub fn read_predictions<R: Read>(input: R, name: &str) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv_util::reader(input);
    let cols = csv_util::locate_columns(&mut rdr, name, &["date", "score"])?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(name))?;
        let parsed = csv_util::parse_date(&rec[cols[0]]).and_then(|d| {
            let s = csv_util::parse_f64(&rec[cols[1]], "score")?;
            if (0.0..=1.0).contains(&s) {
                Ok((d, s))
            } else {
                Err(format!("score must be in [0, 1], got {s}"))
            }
        });
        match parsed {
            Ok(p) => out.push(p),
            Err(msg) => errors.push(row_error(&rec, msg)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows {
            file: name.to_string(),
            errors,
        });
    }
    Ok(out)
}

pub fn parse_predictions(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(file, &path.display().to_string())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

impl EvaluationReport {
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = csv_err("metrics");
        let c = &self.confusion;
        let rows: [(&str, String); 14] = [
            ("source", self.source.clone()),
            ("test_size", self.test_size.to_string()),
            ("threshold", self.threshold.to_string()),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("tn", c.tn.to_string()),
            ("fn", c.fn_.to_string()),
            ("precision", fmt_metric(self.precision)),
            ("recall", fmt_metric(self.recall)),
            ("f1", fmt_metric(self.f1)),
            ("roc_auc", fmt_metric(self.roc_auc)),
            ("tolerance", self.tolerance.to_string()),
            ("match_rate", fmt_metric(self.match_rate)),
            ("match_rate_per_sample", fmt_metric(self.match_rate_per_sample)),
        ];
        w.write_record(["metric", "value"]).map_err(&err)?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()]).map_err(&err)?;
        }
        csv_util::flush(&mut w, "metrics")
    }

    pub fn write_heatmap_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = csv_err("heatmap");
        w.write_record(["wind_bin", "evi_bin", "count", "actual_rate", "predicted_rate"])
            .map_err(&err)?;
        for c in &self.heatmap {
            w.write_record([
                c.wind_bin.clone(),
                c.evi_bin.clone(),
                c.count.to_string(),
                fmt_metric(c.actual_rate),
                fmt_metric(c.predicted_rate),
            ])
            .map_err(&err)?;
        }
        csv_util::flush(&mut w, "heatmap")
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            file: "report".into(),
            source,
        })
    }

    /// Fixed-width console summary.
    pub fn summary(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "   n/a".to_string(), |x| format!("{x:>6.3}"));
        let c = &self.confusion;
        let mut s = String::new();
        s.push_str(&format!("source        {}\n", self.source));
        s.push_str(&format!("test days     {}\n", self.test_size));
        s.push_str(&format!("confusion     tp={} fp={} tn={} fn={}\n", c.tp, c.fp, c.tn, c.fn_));
        s.push_str(&format!("precision     {}\n", f(self.precision)));
        s.push_str(&format!("recall        {}\n", f(self.recall)));
        s.push_str(&format!("f1            {}\n", f(self.f1)));
        s.push_str(&format!("roc_auc       {}\n", f(self.roc_auc)));
        s.push_str(&format!("match rate    {} (cells, ±{})\n", f(self.match_rate), self.tolerance));
        s.push_str(&format!("match rate    {} (per sample)\n", f(self.match_rate_per_sample)));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().iter_days().take(n).collect()
    }

    fn seq_table(n: usize) -> FeatureTable {
        FeatureTable::new(
            vec!["x".into()],
            (0..n).map(|i| vec![i as f64]).collect(),
            vec![false; n],
            dates(n),
        )
        .unwrap()
    }

    #[test]
    fn exact_split() {
        let s = temporal_split(&seq_table(10), 0.8).unwrap();
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.test.len(), 2);
        assert_eq!(s.split_date, dates(10)[8]);
        assert!(s.train.dates.iter().max() < s.test.dates.iter().min());
    }

    #[test]
    fn split_rounds_up_without_float_noise() {
        assert_eq!(temporal_split(&seq_table(10), 0.7).unwrap().train.len(), 7);
        assert_eq!(temporal_split(&seq_table(11), 0.8).unwrap().train.len(), 9);
        assert_eq!(temporal_split(&seq_table(3653), 0.8).unwrap().test.len(), 730);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(temporal_split(&seq_table(10), 1.0).is_err());
        assert!(temporal_split(&seq_table(10), 0.0).is_err());
        let mut t = seq_table(4);
        t.dates.swap(1, 2);
        assert!(matches!(temporal_split(&t, 0.5), Err(Error::Validation(_))));
    }

    #[test]
    fn precision_recall_f1() {
        // tp=3, fp=1, fn=1, tn=2
        let labels = [true, true, true, false, true, false, false];
        let scores = [0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3];
        let m = classification_metrics(&labels, &scores, 0.5).unwrap();
        assert_eq!(m.confusion, ConfusionCounts { tp: 3, fp: 1, tn: 2, fn_: 1 });
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.75));
        assert_eq!(m.f1, Some(0.75));
    }

    #[test]
    fn no_positive_predictions() {
        let m = classification_metrics(&[true, false], &[0.1, 0.2], 0.5).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn perfect_predictions() {
        let m = classification_metrics(&[true, false, true], &[1.0, 0.0, 0.9], 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn length_mismatch() {
        assert!(classification_metrics(&[true], &[0.1, 0.2], 0.5).is_err());
        assert!(roc_auc(&[true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[false, false, true, true], &[0.1, 0.2, 0.3, 0.4]).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[false, true, true, false], &[0.5; 4]).unwrap(), Some(0.5));
        assert_eq!(
            roc_auc(&[true, false, true, false], &[0.9, 0.8, 0.3, 0.1]).unwrap(),
            Some(0.75)
        );
        assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]).unwrap(), None);
    }

    fn cell(pred: f64, actual: f64, count: usize) -> HeatmapCell {
        HeatmapCell {
            wind_bin: "0-5".into(),
            evi_bin: "0-1".into(),
            wind_index: 0,
            evi_index: 0,
            count,
            outages: 0,
            actual_rate: (count > 0).then_some(actual),
            predicted_rate: (count > 0).then_some(pred),
        }
    }

    #[test]
    fn match_rate_counts_cells() {
        let cells = [cell(0.01, 0.0, 5), cell(0.54, 0.5, 5), cell(0.3, 0.2, 5), cell(0.0, 0.0, 0)];
        assert!((match_rate(&cells, 0.05).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let exact = [cell(0.2, 0.2, 3), cell(0.0, 0.0, 1)];
        assert_eq!(match_rate(&exact, 0.05).unwrap(), 1.0);
        assert_eq!(match_rate(&[cell(0.2, 0.2, 3), cell(0.21, 0.2, 3)], 0.0).unwrap(), 0.5);
        assert!(match_rate(&[cell(0.0, 0.0, 0)], 0.05).is_err());
        assert_eq!(match_rate_min_count(&cells, 0.05, 6).ok(), None);
    }

    #[test]
    fn single_cell_heatmap() {
        let points: Vec<HeatPoint> = (0..4)
            .map(|i| HeatPoint {
                wspd: 1.0,
                evi: 0.3,
                outage: i == 0,
                probability: 0.1 * i as f64,
            })
            .collect();
        let cells = heatmap_cells(&points, &BinSpec::new(vec![0.0]).unwrap(), &BinSpec::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].actual_rate, Some(0.25));
        assert!((cells[0].predicted_rate.unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn heatmap_partitions_and_marks_empty() {
        let points: Vec<HeatPoint> = (0..30)
            .map(|i| HeatPoint {
                wspd: (i % 7) as f64 * 4.0,
                evi: 0.1 + 0.01 * i as f64,
                outage: i % 5 == 0,
                probability: 0.2,
            })
            .collect();
        let evi = default_evi_bins(&points.iter().map(|p| p.evi).collect::<Vec<_>>(), 4).unwrap();
        let cells = heatmap_cells(&points, &BinSpec::wind_default(), &evi).unwrap();
        assert_eq!(cells.len(), 24);
        assert_eq!(cells.iter().map(|c| c.count).sum::<usize>(), 30);
        assert!(cells.iter().any(|c| c.is_empty() && c.actual_rate.is_none()));
    }

    #[test]
    fn report_rejects_empty_test() {
        assert!(matches!(
            evaluate(&[], &EvalOptions::default(), "model", None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn predictions_csv() {
        let p = read_predictions("date,score\n2020-01-01,0.25\n".as_bytes(), "p.csv").unwrap();
        assert_eq!(p, vec![(dates(1)[0], 0.25)]);
        assert!(read_predictions("date,score\n2020-01-01,1.5\n".as_bytes(), "p.csv").is_err());
    }
}
