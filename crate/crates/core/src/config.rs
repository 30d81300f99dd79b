//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! output_dir = "out"
//!
//! [train]
//! train_fraction = 0.8
//! ```
//!
//! Every section is optional. Relative paths resolve against the directory of
//! the config file. Stage seeds default to values derived from the root seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::features::{BinSpec, DirectionConvention, FeatureOptions, SeasonRule};
use crate::ingest::{default_vegetation_causes, DateRange};
use crate::model::TrainConfig;
use crate::resample::ResampleConfig;
use crate::seed::derive_seed;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub dates: DatesConfig,
    pub ingest: IngestConfig,
    pub features: FeaturesConfig,
    pub synth: SynthSection,
    pub resample: ResampleSection,
    pub train: TrainSection,
    pub evaluate: EvalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            paths: PathsConfig::default(),
            dates: DatesConfig::default(),
            ingest: IngestConfig::default(),
            features: FeaturesConfig::default(),
            synth: SynthSection::default(),
            resample: ResampleSection::default(),
            train: TrainSection::default(),
            evaluate: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Defaults to `<output_dir>/weather.csv`.
    pub weather: Option<PathBuf>,
    /// Defaults to `<output_dir>/outages.csv`.
    pub outages: Option<PathBuf>,
    /// Defaults to `<output_dir>/evi.csv`.
    pub evi: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            weather: None,
            outages: None,
            evi: None,
            output_dir: PathBuf::from("output"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatesConfig {
    /// Restrict the joined days; defaults to the full weather range.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Last trusted EVI date; defaults to the last composite.
    pub evi_cutoff: Option<NaiveDate>,
    /// Years averaged for the seasonal EVI fill; defaults to the full
    /// calendar years on or before the cutoff.
    pub history_years: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub vegetation_causes: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            vegetation_causes: default_vegetation_causes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub direction_convention: DirectionConvention,
    pub season_rule: SeasonRule,
    /// Bins for `rates_by_wind.csv`.
    pub wind_bins: BinSpec,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            direction_convention: DirectionConvention::default(),
            season_rule: SeasonRule::default(),
            wind_bins: BinSpec::wind_default(),
        }
    }
}

impl FeaturesConfig {
    pub fn options(&self) -> FeatureOptions {
        FeatureOptions {
            direction_convention: self.direction_convention,
            season_rule: self.season_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub seed: Option<u64>,
    pub years: u32,
    pub start_date: NaiveDate,
    pub target_outages: Option<usize>,
    pub planted_coefficients: BTreeMap<String, f64>,
    pub base_rate: f64,
    pub missing_fraction: f64,
    pub evi_tail_days: u32,
    pub other_outage_rate: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            seed: None,
            years: d.years,
            start_date: d.start_date,
            target_outages: d.target_outages,
            planted_coefficients: d.planted_coefficients,
            base_rate: d.base_rate,
            missing_fraction: d.missing_fraction,
            evi_tail_days: d.evi_tail_days,
            other_outage_rate: d.other_outage_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    /// Train on the scaled split directly when false.
    pub enabled: bool,
    pub seed: Option<u64>,
    pub smote_k: usize,
    pub enn_k: usize,
    pub target_ratio: f64,
    pub enn_both_classes: bool,
}

impl Default for ResampleSection {
    fn default() -> Self {
        let d = ResampleConfig::default();
        Self {
            enabled: true,
            seed: None,
            smote_k: d.smote_k,
            enn_k: d.enn_k,
            target_ratio: d.target_ratio,
            enn_both_classes: d.enn_both_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub train_fraction: f64,
    pub seed: Option<u64>,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub l2: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            train_fraction: 0.8,
            seed: None,
            learning_rate: d.learning_rate,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            l2: d.l2,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Make every relative path absolute-ish by prefixing `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.output_dir);
        for p in [&mut self.paths.weather, &mut self.paths.outages, &mut self.paths.evi]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.train.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Validation(format!(
                "train.train_fraction must be in (0, 1), got {f}"
            )));
        }
        if let (Some(s), Some(e)) = (self.dates.start, self.dates.end) {
            DateRange::new(s, e)?;
        }
        if self.ingest.vegetation_causes.is_empty() {
            return Err(Error::Validation("ingest.vegetation_causes is empty".into()));
        }
        self.synth_config().validate()?;
        self.resample_config().validate()?;
        self.train_config().validate()?;
        self.evaluate.validate()
    }

    pub fn weather_path(&self) -> PathBuf {
        self.paths.weather.clone().unwrap_or_else(|| self.paths.output_dir.join("weather.csv"))
    }

    pub fn outages_path(&self) -> PathBuf {
        self.paths.outages.clone().unwrap_or_else(|| self.paths.output_dir.join("outages.csv"))
    }

    pub fn evi_path(&self) -> PathBuf {
        self.paths.evi.clone().unwrap_or_else(|| self.paths.output_dir.join("evi.csv"))
    }

    pub fn output_path(&self, file: &str) -> PathBuf {
        self.paths.output_dir.join(file)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            seed: s.seed.unwrap_or_else(|| derive_seed(self.seed, "synth")),
            years: s.years,
            start_date: s.start_date,
            target_outages: s.target_outages,
            planted_coefficients: s.planted_coefficients.clone(),
            base_rate: s.base_rate,
            missing_fraction: s.missing_fraction,
            evi_tail_days: s.evi_tail_days,
            other_outage_rate: s.other_outage_rate,
        }
    }

    pub fn resample_config(&self) -> ResampleConfig {
        let r = &self.resample;
        ResampleConfig {
            smote_k: r.smote_k,
            enn_k: r.enn_k,
            target_ratio: r.target_ratio,
            seed: r.seed.unwrap_or_else(|| derive_seed(self.seed, "resample")),
            enn_both_classes: r.enn_both_classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            max_iterations: t.max_iterations,
            tolerance: t.tolerance,
            l2: t.l2,
            seed: t.seed.unwrap_or_else(|| derive_seed(self.seed, "train")),
        }
    }
}
