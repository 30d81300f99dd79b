//! Acceptance run: one pass/fail line per criterion, nonzero exit on failure.

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use outage_risk::config::PipelineConfig;
use outage_risk::eval::{self, HeatmapCell};
use outage_risk::features::{self, BinSpec, Grouping};
use outage_risk::ingest::DailySample;
use outage_risk::model::{self, coefficient_report, LogisticModel};
use outage_risk::pipeline::{self, EvalSource, Stage, TrainOutcome};
use outage_risk::resample::{self, ResampleConfig};
use outage_risk::synth::{self, SynthConfig};
use outage_risk::FeatureTable;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> std::result::Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 1).unwrap()
}

fn dates(n: usize) -> Vec<NaiveDate> {
    day0().iter_days().take(n).collect()
}

// ---------------------------------------------------------------------------
// 1. Grouped outage rate vs brute-force tally
// ---------------------------------------------------------------------------

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<DailySample> {
    let outage_rate = rng.random_range(0.0..0.5);
    dates(n)
        .into_iter()
        .map(|date| DailySample {
            date,
            tavg: rng.random_range(-15.0..30.0),
            prcp: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..40.0) },
            // Integer speeds land exactly on bin edges.
            wspd: if rng.random_bool(0.3) {
                f64::from(rng.random_range(0..35u32))
            } else {
                rng.random_range(0.0..35.0)
            },
            wdir: rng.random_range(0.0..360.0),
            evi: rng.random_range(-0.2..0.9),
            outage: rng.random_bool(outage_rate),
        })
        .collect()
}

/// Group label of each sample by direct interval and rule checks.
fn oracle_key(s: &DailySample, grouping: &str) -> String {
    match grouping {
        "wind" => {
            let edges = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, f64::INFINITY];
            let names = ["0-5", "5-10", "10-15", "15-20", "20-25", "25+"];
            let i = (0..6).find(|&i| edges[i] <= s.wspd && s.wspd < edges[i + 1]).unwrap();
            names[i].to_string()
        }
        "snow" => {
            if s.prcp > 0.0 && s.tavg < 0.0 {
                "Dry_Snow".into()
            } else if s.prcp > 0.0 && s.tavg <= 2.0 {
                "Wet_Snow".into()
            } else {
                "No_Snow".into()
            }
        }
        "season" => {
            use chrono::Datelike;
            match s.date.month() {
                3 | 4 | 5 => "spring",
                6 | 7 | 8 => "summer",
                9 | 10 | 11 => "autumn",
                _ => "winter",
            }
            .into()
        }
        _ => unreachable!(),
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut groups_checked = 0;
    for fixture in 0..50 {
        let n = rng.random_range(1..=1000);
        let samples = random_samples(&mut rng, n);
        for (name, grouping) in [
            ("wind", Grouping::WindSpeed(BinSpec::wind_default())),
            ("snow", Grouping::SnowType),
            ("season", Grouping::Season),
        ] {
            let report = features::grouped_outage_rate(&samples, &grouping).map_err(|e| e.to_string())?;
            ensure(
                report.groups.iter().map(|g| g.total).sum::<usize>() == n,
                format!("fixture {fixture}/{name}: group totals do not partition"),
            )?;
            for g in &report.groups {
                let members: Vec<&DailySample> =
                    samples.iter().filter(|s| oracle_key(s, name).eq_ignore_ascii_case(&g.group)).collect();
                let outages = members.iter().filter(|s| s.outage).count();
                let rate = (!members.is_empty()).then(|| outages as f64 / members.len() as f64);
                ensure(
                    g.total == members.len() && g.outages == outages && g.rate == rate,
                    format!(
                        "fixture {fixture}/{name}/{}: got {}/{} {:?}, oracle {}/{} {:?}",
                        g.group,
                        g.outages,
                        g.total,
                        g.rate,
                        outages,
                        members.len(),
                        rate
                    ),
                )?;
                groups_checked += 1;
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("50 fixtures, {groups_checked} groups exact"))
}

// ---------------------------------------------------------------------------
// 2. Gradient vs central finite differences
// ---------------------------------------------------------------------------

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let names: Vec<String> = (0..20).map(|j| format!("f{j}")).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for point in 0..100 {
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..20).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let table = FeatureTable::new(names.clone(), rows, labels, dates(n)).map_err(|e| e.to_string())?;
        let l2 = if point % 2 == 0 { 0.0 } else { rng.random_range(0.0..2.0) };
        let coefs: IndexMap<String, f64> = names.iter().map(|k| (k.clone(), rng.random_range(-1.0..1.0))).collect();
        let m = LogisticModel::new(rng.random_range(-2.0..2.0), coefs);

        let analytic = model::loss_and_gradient(&m, &table, l2).map_err(|e| e.to_string())?;
        let loss_at = |m: &LogisticModel| model::loss_and_gradient(m, &table, l2).unwrap().loss;
        let mut numeric = Vec::with_capacity(21);
        let (mut up, mut down) = (m.clone(), m.clone());
        up.alpha += h;
        down.alpha -= h;
        numeric.push((loss_at(&up) - loss_at(&down)) / (2.0 * h));
        for name in &names {
            let (mut up, mut down) = (m.clone(), m.clone());
            up.coefficients[name] += h;
            down.coefficients[name] -= h;
            numeric.push((loss_at(&up) - loss_at(&down)) / (2.0 * h));
        }
        let mut exact = vec![analytic.d_alpha];
        exact.extend(&analytic.d_beta);
        let diff: f64 = exact.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm_a: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / norm_a.max(norm_n).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure(rel < 1e-6, format!("point {point}: relative error {rel:e}"))?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("100 points x 20 features, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 3. ROC-AUC vs O(n^2) pair counting
// ---------------------------------------------------------------------------

fn pairwise_auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut tied_fixtures = 0;
    for fixture in 0..50 {
        let n = rng.random_range(2..400);
        let levels = if fixture % 3 == 0 { 0 } else { rng.random_range(1..12) };
        let labels: Vec<bool> = (0..n).map(|i| i < 1 || (i > 1 && rng.random_bool(0.3))).collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                if levels == 0 {
                    x
                } else {
                    (x * levels as f64).floor() / levels as f64
                }
            })
            .collect();
        if levels > 0 {
            tied_fixtures += 1;
        }
        let got = eval::roc_auc(&labels, &scores).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&labels, &scores);
        match (got, want) {
            (Some(g), Some(w)) => {
                worst = worst.max((g - w).abs());
                ensure((g - w).abs() <= 1e-12, format!("fixture {fixture}: {g} vs {w}"))?;
            }
            (None, None) => {}
            _ => return Err(format!("fixture {fixture}: definedness differs ({got:?} vs {want:?})")),
        }
    }
    Ok(format!("50 fixtures ({tied_fixtures} with tied scores), max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. SMOTE segment property
// ---------------------------------------------------------------------------

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Distance from `p` to the segment `[a, b]`.
fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(a, d)| a + t * d).collect();
    dist2(p, &proj).sqrt()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 200;
    let k = 5;
    let labels: Vec<bool> = (0..n).map(|i| i % 5 == 0).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            let shift = if l { 1.5 } else { 0.0 };
            (0..4).map(|_| rng.random_range(-1.0..1.0) + shift).collect()
        })
        .collect();
    let names: Vec<String> = (0..4).map(|j| format!("x{j}")).collect();
    let table = FeatureTable::new(names, rows, labels, dates(n)).map_err(|e| e.to_string())?;
    let config = ResampleConfig {
        smote_k: k,
        seed: 44,
        ..Default::default()
    };
    let out = resample::smote(&table, &config).map_err(|e| e.to_string())?;

    let minority: Vec<&Vec<f64>> = (0..n).filter(|&i| table.labels[i]).map(|i| &table.rows[i]).collect();
    // k nearest minority neighbours of each minority row, by full sort.
    let knn: Vec<Vec<usize>> = (0..minority.len())
        .map(|a| {
            let mut others: Vec<usize> = (0..minority.len()).filter(|&b| b != a).collect();
            others.sort_by(|&x, &y| dist2(minority[a], minority[x]).total_cmp(&dist2(minority[a], minority[y])));
            others.truncate(k);
            others
        })
        .collect();

    ensure(out.rows[..n] == table.rows[..], "original rows changed")?;
    let synthetic: Vec<usize> = (0..out.len()).filter(|&i| out.synthetic[i]).collect();
    ensure(synthetic.len() == 160 - 40, format!("expected 120 synthetic rows, got {}", synthetic.len()))?;
    for &i in &synthetic {
        ensure(out.labels[i], format!("synthetic row {i} is not minority"))?;
        let p = &out.rows[i];
        let found = (0..minority.len())
            .any(|a| knn[a].iter().any(|&b| segment_distance(p, minority[a], minority[b]) <= 1e-9));
        ensure(found, format!("synthetic row {i} lies on no minority k-NN segment"))?;
    }
    Ok(format!("{} synthetic points each on a k-NN segment", synthetic.len()))
}

// ---------------------------------------------------------------------------
// 5. ENN property
// ---------------------------------------------------------------------------

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut points: Vec<(Vec<f64>, bool)> = Vec::new();
    for _ in 0..60 {
        points.push((vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], false));
    }
    for _ in 0..20 {
        points.push((vec![10.0 + rng.random_range(-1.0..1.0), 10.0 + rng.random_range(-1.0..1.0)], true));
    }
    let build = |pts: &[(Vec<f64>, bool)]| {
        FeatureTable::new(
            vec!["x".into(), "y".into()],
            pts.iter().map(|p| p.0.clone()).collect(),
            pts.iter().map(|p| p.1).collect(),
            dates(pts.len()),
        )
        .unwrap()
    };
    let config = ResampleConfig::default();
    let clean = build(&points);
    let out = resample::enn(&clean, &config).map_err(|e| e.to_string())?;
    ensure(out == clean, format!("separated clusters lost {} rows", clean.len() - out.len()))?;

    points.push((vec![10.0, 10.0], false));
    let noisy = build(&points);
    let out = resample::enn(&noisy, &config).map_err(|e| e.to_string())?;
    ensure(out.len() == noisy.len() - 1, format!("removed {} rows, expected 1", noisy.len() - out.len()))?;
    ensure(
        !out.rows.contains(&vec![10.0, 10.0]),
        "planted noisy majority point survived",
    )?;
    Ok("0 removals on clean clusters; planted point removed alone".into())
}

// ---------------------------------------------------------------------------
// Shared synthetic pipeline run (criteria 6, 7, 9)
// ---------------------------------------------------------------------------

struct PipelineRun {
    config: PipelineConfig,
    train: TrainOutcome,
    train_time: Duration,
    by_wind: features::GroupedRateReport,
    heatmap: Vec<HeatmapCell>,
}

fn pipeline_run(dir: &Path) -> std::result::Result<PipelineRun, String> {
    let mut config = PipelineConfig::default();
    config.paths.output_dir = dir.to_path_buf();
    let e = |e: outage_risk::Error| e.to_string();
    pipeline::run_synth(&config).map_err(e)?;
    let prepared = pipeline::run_prepare(&config).map_err(e)?;
    let start = Instant::now();
    let train = pipeline::run_train(&config).map_err(e)?;
    let train_time = start.elapsed();
    let report = pipeline::run_evaluate(&config, EvalSource::Model(&config.output_path(pipeline::MODEL_FILE)))
        .map_err(e)?
        .report;
    Ok(PipelineRun {
        config,
        train,
        train_time,
        by_wind: prepared.by_wind,
        heatmap: report.heatmap,
    })
}

const PLANTED: [(&str, f64); 4] = [("wspd", 1.5), ("EVI", 0.8), ("ws_evi", -0.5), ("snow_type_Wet_Snow", 3.0)];

fn criterion_6(run: &PipelineRun) -> Check {
    let synth = run.config.synth_config();
    ensure(synth.years == 10, "synthetic run is not 10 years")?;
    for (name, planted) in PLANTED {
        ensure(
            synth.planted_coefficients.get(name) == Some(&planted),
            format!("planted {name} is not {planted}"),
        )?;
    }
    let m = &run.train.model;
    let mut fitted = Vec::new();
    for (name, planted) in PLANTED {
        let b = m.coefficients[name];
        ensure(b.signum() == planted.signum(), format!("{name}: fitted {b:+.3}, planted {planted:+}"))?;
        fitted.push(format!("{name} {b:+.3}"));
    }
    let report = coefficient_report(m);
    ensure(
        report.rows[0].feature == "snow_type_Wet_Snow",
        format!("top-ranked feature is {}", report.rows[0].feature),
    )?;
    within(run.train_time, 60.0)?;
    Ok(format!(
        "{}; Wet_Snow ranked first; train {:.1}s",
        fitted.join(", "),
        run.train_time.as_secs_f64()
    ))
}

fn non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0])
}

fn criterion_7(run: &PipelineRun) -> Check {
    let rates: Vec<f64> = run.by_wind.groups.iter().filter_map(|g| g.rate).collect();
    ensure(rates.len() == 6, format!("{} of 6 wind bins populated", rates.len()))?;
    ensure(non_decreasing(&rates), format!("empirical wind-bin rates not monotone: {rates:.3?}"))?;
    let bands = run.heatmap.iter().map(|c| c.evi_index).max().unwrap_or(0) + 1;
    for band in 0..bands {
        let mut cells: Vec<&HeatmapCell> = run.heatmap.iter().filter(|c| c.evi_index == band).collect();
        cells.sort_by_key(|c| c.wind_index);
        let predicted: Vec<f64> = cells.iter().filter_map(|c| c.predicted_rate).collect();
        ensure(
            non_decreasing(&predicted),
            format!("predicted rates in EVI band {band} not monotone: {predicted:.3?}"),
        )?;
    }
    Ok(format!("empirical rates {rates:.3?}; predicted monotone in {bands} EVI bands"))
}

// ---------------------------------------------------------------------------
// 8. Match rate on in-family data
// ---------------------------------------------------------------------------

fn criterion_8() -> Check {
    let e = |e: outage_risk::Error| e.to_string();
    let synth_config = SynthConfig {
        seed: 808,
        years: 28,
        target_outages: None,
        ..Default::default()
    };
    let data = synth::generate(&synth_config).map_err(e)?;
    let n = data.truth.len();
    ensure(n >= 10_000, format!("only {n} days"))?;

    // Same logistic family as the generator; no resampling, so the fitted
    // probabilities keep the data's base rate.
    let mut config = PipelineConfig::default();
    config.resample.enabled = false;
    let train = pipeline::train_from_samples(&data.truth, &config).map_err(e)?;
    let test = pipeline::test_partition(&data.truth, &train.model.metadata.feature_options, config.train.train_fraction)
        .map_err(e)?;
    let scored = eval::score_table(&test, &train.model).map_err(e)?;
    let options = eval::EvalOptions {
        min_cell_count: 30,
        ..Default::default()
    };
    let report = eval::evaluate(&scored, &options, "model", None).map_err(e)?;
    let rate = report.match_rate.ok_or("match rate undefined")?;
    let eligible = report.heatmap.iter().filter(|c| c.count >= 30).count();
    ensure(rate >= 0.8, format!("match rate {rate:.3} over {eligible} cells with >= 30 members"))?;
    Ok(format!(
        "{n} days, {} test days, match rate {rate:.3} over {eligible} cells with >= 30 members",
        scored.len()
    ))
}

// ---------------------------------------------------------------------------
// 9. Leakage guards
// ---------------------------------------------------------------------------

fn criterion_9(run: &PipelineRun) -> Check {
    let t = &run.train;
    let order: Vec<Stage> = t.stages.iter().map(|s| s.stage).collect();
    ensure(
        order
            == [
                Stage::Features,
                Stage::Split,
                Stage::FitScaling,
                Stage::ApplyScaling,
                Stage::Resample,
                Stage::Fit,
            ],
        format!("stage order {order:?}"),
    )?;
    let split = t.split_date;
    let test_min = t.scaled_test.dates.iter().min().copied().ok_or("empty test split")?;
    let train_max = t.stage(Stage::FitScaling).and_then(|s| s.last_date).ok_or("no scaling stage")?;
    ensure(train_max < test_min && test_min == split, "train and test dates overlap")?;
    ensure(
        t.stage(Stage::Resample).and_then(|s| s.last_date).is_some_and(|d| d < split),
        "resampler saw test rows",
    )?;
    ensure(t.fitted_on.dates.iter().all(|d| *d < split), "fit saw test rows")?;

    // Scaling was fitted on train rows only: the training partition has zero
    // column means, the test partition in general does not.
    let samples = outage_risk::ingest::parse_daily(&run.config.output_path(pipeline::DAILY_FILE)).map_err(|e| e.to_string())?;
    let table = features::build_feature_table(&samples, &run.config.features.options()).map_err(|e| e.to_string())?;
    let split_rows = eval::temporal_split(&table, run.config.train.train_fraction).map_err(|e| e.to_string())?;
    let scaled_train = features::apply_scaling(&split_rows.train, &t.model.scaling).map_err(|e| e.to_string())?;
    let mean = |tab: &FeatureTable, j: usize| tab.rows.iter().map(|r| r[j]).sum::<f64>() / tab.len() as f64;
    let mut shifted = 0;
    for name in features::CONTINUOUS_FEATURES {
        let j = table.column_index(name).unwrap();
        ensure(mean(&scaled_train, j).abs() < 1e-9, format!("train mean of {name} is not 0"))?;
        if mean(&t.scaled_test, j).abs() > 1e-3 {
            shifted += 1;
        }
    }
    ensure(shifted > 0, "test column means are all 0; scaler may have seen test rows")?;
    Ok(format!(
        "split {split}; scaler and resampler saw rows up to {train_max}; {shifted}/10 test means nonzero"
    ))
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

fn criterion_10(first: &Path) -> Check {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline_run(second.path())?;
    let files = [
        "weather.csv",
        "evi.csv",
        "outages.csv",
        "daily.csv",
        "rates_by_wind.csv",
        "rates_by_snow.csv",
        "model.json",
        "coefficients.csv",
        "metrics.csv",
        "heatmap.csv",
        "report.json",
    ];
    for f in files {
        let a = std::fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(second.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, format!("{f} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", files.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = pipeline_run(dir.path());
    let shared = |f: fn(&PipelineRun) -> Check| -> Check {
        match &run {
            Ok(r) => f(r),
            Err(e) => Err(format!("pipeline run failed: {e}")),
        }
    };
    let results: Vec<(usize, &str, Check)> = vec![
        (1, "grouped outage rate = brute-force tally", criterion_1()),
        (2, "gradient = central differences", criterion_2()),
        (3, "ROC-AUC = pair counting", criterion_3()),
        (4, "SMOTE points on k-NN segments", criterion_4()),
        (5, "ENN removes only planted noise", criterion_5()),
        (6, "planted sign recovery", shared(criterion_6)),
        (7, "monotone wind trend", shared(criterion_7)),
        (8, "match rate >= 0.8 in family", criterion_8()),
        (9, "no train/test leakage", shared(criterion_9)),
        (10, "byte-identical reruns", criterion_10(dir.path())),
    ];
    let mut failed = 0;
    for (i, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {i:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {i:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
