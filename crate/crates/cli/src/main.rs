use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use outage_risk::pipeline::{self, EvalSource, RawDay};
use outage_risk::{Error, FeatureTable, LogisticModel, PipelineConfig};

/// Vegetation-related outage risk pipeline.
#[derive(Debug, Parser)]
#[command(name = "outage-risk", version)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed; overrides the config file.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic weather.csv, evi.csv and outages.csv.
    Synth,
    /// Join inputs into daily.csv and write grouped outage rates.
    Prepare,
    /// Fit the model on daily.csv and write model.json and coefficients.csv.
    Train,
    /// Write metrics.csv, heatmap.csv and report.json for the test split.
    Evaluate(EvaluateArgs),
    /// Score days with a trained model.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Model to evaluate; defaults to <output>/model.json.
    #[arg(long, value_name = "PATH", conflicts_with = "predictions")]
    model: Option<PathBuf>,

    /// External `date,score` predictions to evaluate instead of a model.
    #[arg(long, value_name = "PATH")]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Defaults to <output>/model.json.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,

    /// Raw feature table CSV (date, features..., optional outage).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["date", "wspd", "prcp", "tavg", "wdir", "evi"])]
    features: Option<PathBuf>,

    /// Write `date,probability` here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, requires_all = ["wspd", "prcp", "tavg", "wdir", "evi"])]
    date: Option<NaiveDate>,
    /// Wind speed, m/s.
    #[arg(long, allow_negative_numbers = true)]
    wspd: Option<f64>,
    /// Precipitation, mm.
    #[arg(long, allow_negative_numbers = true)]
    prcp: Option<f64>,
    /// Mean temperature, °C.
    #[arg(long, allow_negative_numbers = true)]
    tavg: Option<f64>,
    /// Wind direction, degrees in [0, 360).
    #[arg(long, allow_negative_numbers = true)]
    wdir: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    evi: Option<f64>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.output {
        config.paths.output_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn model_path(config: &PipelineConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| config.output_path(pipeline::MODEL_FILE))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Synth => {
            let paths = pipeline::run_synth(&config)?;
            for p in [&paths.weather, &paths.evi, &paths.outages] {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Prepare => {
            let out = pipeline::run_prepare(&config)?;
            if out.prepared.evi_filled_days > 0 {
                log::info!(
                    "EVI after {} filled seasonally for {} day(s)",
                    out.prepared.evi_cutoff,
                    out.prepared.evi_filled_days
                );
            }
            log::info!("wrote {}", config.output_path(pipeline::DAILY_FILE).display());
        }
        Command::Train => {
            let out = pipeline::run_train(&config)?;
            for s in &out.stages {
                log::info!(
                    "stage {:?}: {} rows, {} to {}",
                    s.stage,
                    s.rows,
                    s.first_date.map_or("-".into(), |d| d.to_string()),
                    s.last_date.map_or("-".into(), |d| d.to_string())
                );
            }
            log::info!("wrote {}", config.output_path(pipeline::MODEL_FILE).display());
        }
        Command::Evaluate(args) => {
            let model;
            let source = match &args.predictions {
                Some(p) => EvalSource::Predictions(p),
                None => {
                    model = model_path(&config, &args.model);
                    EvalSource::Model(&model)
                }
            };
            let out = pipeline::run_evaluate(&config, source)?;
            print!("{}", out.report.summary());
        }
        Command::Score(args) => score(&config, args)?,
    }
    Ok(())
}

fn score(config: &PipelineConfig, args: &ScoreArgs) -> Result<(), Error> {
    let model = LogisticModel::load(&model_path(config, &args.model))?;
    let (dates, probs) = match (&args.features, args.date) {
        (Some(path), _) => {
            let table = FeatureTable::read_csv_path(path)?;
            let probs = pipeline::score_features(&model, &table)?;
            (table.dates, probs)
        }
        (None, Some(date)) => {
            let day = RawDay {
                date,
                wspd: args.wspd.expect("required by clap"),
                prcp: args.prcp.expect("required by clap"),
                tavg: args.tavg.expect("required by clap"),
                wdir: args.wdir.expect("required by clap"),
                evi: args.evi.expect("required by clap"),
            };
            (vec![date], vec![pipeline::score_raw(&model, &day)?])
        }
        (None, None) => {
            return Err(Error::Validation(
                "score needs --features PATH or --date with --wspd --prcp --tavg --wdir --evi".into(),
            ))
        }
    };
    match &args.out {
        Some(path) => pipeline::write_file(path, |w| pipeline::write_scores(w, &dates, &probs)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            pipeline::write_scores(&mut lock, &dates, &probs)?;
            lock.flush().map_err(|e| Error::Validation(format!("stdout: {e}")))
        }
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Stderr)
        .init();
}

fn command_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Synth => "synth",
        Command::Prepare => "prepare",
        Command::Train => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Score(_) => "score",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}: {e}", command_name(&cli));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
