//! Stage orchestration shared by the CLI and the integration tests.
//!
//! Training order is fixed: features, temporal split, scaling fitted on the
//! training rows, scaling applied to both partitions, resampling of the
//! training partition, gradient descent. The test partition never reaches
//! the scaler fit or the resampler.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{self, EvaluationReport, ScoredDay};
use crate::features::{
    self, FeatureOptions, FeatureTable, Grouping, GroupedRateReport, CONTINUOUS_FEATURES,
};
use crate::ingest::{self, DailySample, DateRange, ImputeReport, RawWeatherRecord};
use crate::model::{self, coefficient_report, LogisticModel};
use crate::resample;
use crate::synth::{self, SynthPaths};

pub const DAILY_FILE: &str = "daily.csv";
pub const MODEL_FILE: &str = "model.json";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";

/// Create `path` (and its parent directories) and hand a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().inspect_err(|_| log::error!("stage {stage} failed"))?;
    log::info!("stage {stage} done in {:.3}s", start.elapsed().as_secs_f64());
    Ok(out)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn run_synth(config: &PipelineConfig) -> Result<SynthPaths> {
    let synth_config = config.synth_config();
    let data = timed("synth", || synth::generate(&synth_config))?;
    log::info!(
        "generated {} days, {} outage days, {} outage records",
        data.truth.len(),
        data.positive_days(),
        data.outages.len()
    );
    let paths = synth::write_files(&data, &config.paths.output_dir)?;
    // Keep explicitly configured input paths in sync with what was written.
    for (configured, written) in [
        (&config.paths.weather, &paths.weather),
        (&config.paths.evi, &paths.evi),
        (&config.paths.outages, &paths.outages),
    ] {
        if let Some(p) = configured {
            if p != written {
                std::fs::copy(written, p).map_err(|e| Error::io(p, e))?;
            }
        }
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub samples: Vec<DailySample>,
    pub imputed: ImputeReport,
    pub evi_cutoff: NaiveDate,
    pub evi_filled_days: usize,
    pub dropped_outages: usize,
}

fn restrict(records: Vec<RawWeatherRecord>, config: &PipelineConfig) -> Vec<RawWeatherRecord> {
    let (start, end) = (config.dates.start, config.dates.end);
    records
        .into_iter()
        .filter(|r| start.is_none_or(|s| r.date >= s) && end.is_none_or(|e| r.date <= e))
        .collect()
}

/// Read the three input files and join them into one sample per day.
pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    let weather = restrict(ingest::parse_weather(&config.weather_path())?, config);
    let evi = ingest::parse_evi(&config.evi_path())?;
    let outages = ingest::parse_outages(&config.outages_path())?;

    let (days, imputed) = ingest::impute_weather(&weather)?;
    if imputed.total() > 0 {
        log::info!(
            "imputed weather cells: tavg={} prcp={} wspd={} wdir={}",
            imputed.tavg,
            imputed.prcp,
            imputed.wspd,
            imputed.wdir
        );
    }
    let (Some(first), Some(last)) = (days.first(), days.last()) else {
        return Err(Error::InsufficientData("no weather days in the configured range".into()));
    };
    let range = DateRange::new(first.date, last.date)?;
    let series = ingest::interpolate_evi(&evi, range)?;
    let last_composite = evi.last().map(|r| r.date).expect("interpolation needs records");
    let cutoff = config.dates.evi_cutoff.unwrap_or(last_composite);
    let history: BTreeSet<i32> = match &config.dates.history_years {
        Some(years) => years.iter().copied().collect(),
        None => ingest::default_history_years(&series, cutoff),
    };
    let missing_before = series.values.iter().filter(|v| v.is_none()).count();
    let needs_fill = series.dates().any(|d| d > cutoff);
    let series = if needs_fill {
        if history.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no full calendar year of EVI on or before {cutoff} to fill later days"
            )));
        }
        ingest::fill_evi_seasonal(&series, cutoff, &history)?
    } else {
        series
    };
    let evi_filled_days = if needs_fill {
        series.dates().filter(|d| *d > cutoff).count()
    } else {
        0
    };
    log::debug!("{missing_before} EVI day(s) had no interpolated value");

    let joined = ingest::join_daily(&days, &series, &outages, &config.ingest.vegetation_causes)?;
    log::info!(
        "joined {} days ({} outage days)",
        joined.samples.len(),
        joined.samples.iter().filter(|s| s.outage).count()
    );
    Ok(Prepared {
        samples: joined.samples,
        imputed,
        evi_cutoff: cutoff,
        evi_filled_days,
        dropped_outages: joined.dropped_outages,
    })
}

pub struct PrepareOutputs {
    pub prepared: Prepared,
    pub by_wind: GroupedRateReport,
    pub by_snow: GroupedRateReport,
}

/// Write `daily.csv`, `rates_by_wind.csv` and `rates_by_snow.csv`.
pub fn run_prepare(config: &PipelineConfig) -> Result<PrepareOutputs> {
    let prepared = timed("prepare", || prepare(config))?;
    let by_wind = features::grouped_outage_rate(
        &prepared.samples,
        &Grouping::WindSpeed(config.features.wind_bins.clone()),
    )?;
    let by_snow = features::grouped_outage_rate(&prepared.samples, &Grouping::SnowType)?;
    write_file(&config.output_path(DAILY_FILE), |w| ingest::write_daily(w, &prepared.samples))?;
    write_file(&config.output_path("rates_by_wind.csv"), |w| by_wind.write_csv(w))?;
    write_file(&config.output_path("rates_by_snow.csv"), |w| by_snow.write_csv(w))?;
    Ok(PrepareOutputs {
        prepared,
        by_wind,
        by_snow,
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Features,
    Split,
    FitScaling,
    ApplyScaling,
    Resample,
    Fit,
}

/// Rows and dates each stage consumed, kept for leakage checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

impl StageRecord {
    fn of(stage: Stage, table: &FeatureTable) -> Self {
        Self {
            stage,
            rows: table.len(),
            first_date: table.dates.iter().min().copied(),
            last_date: table.dates.iter().max().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    pub split_date: NaiveDate,
    pub stages: Vec<StageRecord>,
    /// Scaled test partition, untouched by the scaler fit and the resampler.
    pub scaled_test: FeatureTable,
    /// Table the model was fitted on.
    pub fitted_on: FeatureTable,
}

impl TrainOutcome {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Train from joined daily samples without touching the filesystem.
pub fn train_from_samples(samples: &[DailySample], config: &PipelineConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let options = config.features.options();
    let mut stages = Vec::new();

    let table = timed("features", || features::build_feature_table(samples, &options))?;
    stages.push(StageRecord::of(Stage::Features, &table));

    let split = timed("split", || eval::temporal_split(&table, config.train.train_fraction))?;
    log::info!(
        "split at {}: {} train rows, {} test rows",
        split.split_date,
        split.train.len(),
        split.test.len()
    );
    stages.push(StageRecord::of(Stage::Split, &split.test));

    let scaling = timed("fit_scaling", || features::fit_scaling(&split.train, &CONTINUOUS_FEATURES))?;
    stages.push(StageRecord::of(Stage::FitScaling, &split.train));
    for name in scaling.zero_variance() {
        log::warn!("feature {name} has zero variance on the training rows");
    }

    let (train, test) = timed("apply_scaling", || {
        Ok((
            features::apply_scaling(&split.train, &scaling)?,
            features::apply_scaling(&split.test, &scaling)?,
        ))
    })?;
    stages.push(StageRecord::of(Stage::ApplyScaling, &train));

    let fitted_on = if config.resample.enabled {
        let rc = config.resample_config();
        let before = train.positives();
        let out = timed("resample", || resample::smoteenn(&train, &rc))?;
        log::info!(
            "resampled training rows: {} ({} positive) -> {} ({} positive)",
            train.len(),
            before,
            out.len(),
            out.positives()
        );
        stages.push(StageRecord::of(Stage::Resample, &train));
        out
    } else {
        log::info!("resampling disabled");
        train
    };

    let mut model = timed("fit", || model::fit(&fitted_on, &config.train_config()))?;
    stages.push(StageRecord::of(Stage::Fit, &fitted_on));
    log::info!(
        "fit: {} iterations, loss {:.6} -> {:.6}, converged={}",
        model.metadata.iterations,
        model.metadata.initial_loss,
        model.metadata.final_loss,
        model.metadata.converged
    );
    model.scaling = scaling;
    model.metadata.feature_options = options;

    Ok(TrainOutcome {
        model,
        split_date: split.split_date,
        stages,
        scaled_test: test,
        fitted_on,
    })
}

/// Train from `daily.csv` and write `model.json` and `coefficients.csv`.
pub fn run_train(config: &PipelineConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let samples = ingest::parse_daily(&config.output_path(DAILY_FILE))?;
    let outcome = train_from_samples(&samples, config)?;
    outcome.model.save(&config.output_path(MODEL_FILE))?;
    let report = coefficient_report(&outcome.model);
    write_file(&config.output_path(COEFFICIENTS_FILE), |w| report.write_csv(w))?;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Raw test partition of `samples` under the configured split.
pub fn test_partition(samples: &[DailySample], options: &FeatureOptions, train_fraction: f64) -> Result<FeatureTable> {
    let table = features::build_feature_table(samples, options)?;
    Ok(eval::temporal_split(&table, train_fraction)?.test)
}

/// Evaluate `model` on the temporal test partition of `samples`.
pub fn evaluate_model(samples: &[DailySample], model: &LogisticModel, config: &PipelineConfig) -> Result<EvaluationReport> {
    let test = test_partition(samples, &model.metadata.feature_options, config.train.train_fraction)?;
    let scored = eval::score_table(&test, model)?;
    eval::evaluate(&scored, &config.evaluate, "model", Some(coefficient_report(model)))
}

/// Evaluate external `date,score` predictions on the same test partition.
pub fn evaluate_predictions(
    samples: &[DailySample],
    predictions: &[(NaiveDate, f64)],
    config: &PipelineConfig,
    source: &str,
) -> Result<EvaluationReport> {
    let test = test_partition(samples, &config.features.options(), config.train.train_fraction)?;
    let scored: Vec<ScoredDay> = eval::score_table_external(&test, predictions)?;
    eval::evaluate(&scored, &config.evaluate, source, None)
}

pub enum EvalSource<'a> {
    Model(&'a Path),
    Predictions(&'a Path),
}

pub struct EvaluateOutputs {
    pub report: EvaluationReport,
    pub files: Vec<PathBuf>,
}

/// Write `metrics.csv`, `heatmap.csv` and `report.json`.
pub fn run_evaluate(config: &PipelineConfig, source: EvalSource<'_>) -> Result<EvaluateOutputs> {
    config.validate()?;
    let samples = ingest::parse_daily(&config.output_path(DAILY_FILE))?;
    let report = timed("evaluate", || match source {
        EvalSource::Model(path) => {
            let model = LogisticModel::load(path)?;
            evaluate_model(&samples, &model, config)
        }
        EvalSource::Predictions(path) => {
            let preds = eval::parse_predictions(path)?;
            evaluate_predictions(&samples, &preds, config, &path.display().to_string())
        }
    })?;
    let metrics = config.output_path("metrics.csv");
    let heatmap = config.output_path("heatmap.csv");
    let json = config.output_path("report.json");
    write_file(&metrics, |w| report.write_metrics_csv(w))?;
    write_file(&heatmap, |w| report.write_heatmap_csv(w))?;
    let text = report.to_json()?;
    write_file(&json, |w| {
        writeln!(w, "{text}").map_err(|e| Error::io(&json, e))
    })?;
    if let Some(cr) = &report.coefficients {
        write_file(&config.output_path(COEFFICIENTS_FILE), |w| cr.write_csv(w))?;
    }
    Ok(EvaluateOutputs {
        report,
        files: vec![metrics, heatmap, json],
    })
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

/// One day of raw inputs for scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDay {
    pub date: NaiveDate,
    pub wspd: f64,
    pub prcp: f64,
    pub tavg: f64,
    pub wdir: f64,
    pub evi: f64,
}

/// Probability for one raw day through the same feature path as training.
pub fn score_raw(model: &LogisticModel, day: &RawDay) -> Result<f64> {
    if !(day.prcp >= 0.0) || !day.tavg.is_finite() || !day.prcp.is_finite() {
        return Err(Error::Validation(format!(
            "precipitation must be >= 0 and temperature finite (prcp={}, tavg={})",
            day.prcp, day.tavg
        )));
    }
    let sample = DailySample {
        date: day.date,
        tavg: day.tavg,
        prcp: day.prcp,
        wspd: day.wspd,
        wdir: day.wdir,
        evi: day.evi,
        outage: false,
    };
    let row = features::feature_row(&sample, &model.metadata.feature_options)?;
    model.predict_proba_raw(&features::feature_names(), &row)
}

/// Probabilities for every row of a raw feature table.
pub fn score_features(model: &LogisticModel, table: &FeatureTable) -> Result<Vec<f64>> {
    model.predict_raw_table(table)
}

/// `date,probability` rows.
pub fn write_scores<W: Write>(out: W, dates: &[NaiveDate], probabilities: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = crate::csv_util::csv_err("scores");
    w.write_record(["date", "probability"]).map_err(&err)?;
    for (d, p) in dates.iter().zip(probabilities) {
        w.write_record([d.format(crate::csv_util::DATE_FORMAT).to_string(), p.to_string()])
            .map_err(&err)?;
    }
    crate::csv_util::flush(&mut w, "scores")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_in(dir: &Path) -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.paths.output_dir = dir.to_path_buf();
        c.synth.years = 4;
        c.synth.target_outages = Some(60);
        c
    }

    #[test]
    fn stages_run_in_order_without_leakage() {
        let dir = tempfile::tempdir().unwrap();
        let c = config_in(dir.path());
        run_synth(&c).unwrap();
        let prep = run_prepare(&c).unwrap();
        assert_eq!(prep.prepared.samples.len(), 1461);
        assert!(prep.prepared.evi_filled_days > 0);
        let out = run_train(&c).unwrap();
        let order: Vec<Stage> = out.stages.iter().map(|s| s.stage).collect();
        assert_eq!(
            order,
            [Stage::Features, Stage::Split, Stage::FitScaling, Stage::ApplyScaling, Stage::Resample, Stage::Fit]
        );
        let fit_scaling = out.stage(Stage::FitScaling).unwrap();
        let resample = out.stage(Stage::Resample).unwrap();
        assert!(fit_scaling.last_date.unwrap() < out.split_date);
        assert!(resample.last_date.unwrap() < out.split_date);
        assert!(out.fitted_on.dates.iter().all(|d| *d < out.split_date));
        assert!(out.scaled_test.dates.iter().all(|d| *d >= out.split_date));
        assert!(dir.path().join(MODEL_FILE).exists());
        let report = run_evaluate(&c, EvalSource::Model(&dir.path().join(MODEL_FILE))).unwrap().report;
        assert_eq!(report.heatmap.iter().map(|c| c.count).sum::<usize>(), report.test_size);
    }

    #[test]
    fn prepare_surfaces_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = prepare(&config_in(dir.path())).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
    }

    #[test]
    fn external_predictions_share_the_schema() {
        let dir = tempfile::tempdir().unwrap();
        let c = config_in(dir.path());
        run_synth(&c).unwrap();
        let samples = run_prepare(&c).unwrap().prepared.samples;
        let preds: Vec<(NaiveDate, f64)> = samples.iter().map(|s| (s.date, 0.1)).collect();
        let r = evaluate_predictions(&samples, &preds, &c, "constant").unwrap();
        assert_eq!(r.roc_auc, Some(0.5));
        assert!(r.coefficients.is_none());
    }
}
