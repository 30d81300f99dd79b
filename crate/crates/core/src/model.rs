//! Logistic-regression risk model: log(P / (1 - P)) = alpha + sum(beta_i * x_i).
//!
//! Fitting is full-batch gradient descent on mean binary cross-entropy with
//! optional L2 on the coefficients. Coefficients live in scaled feature space;
//! the model carries the scaling it was trained with so raw rows can be scored
//! directly.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureOptions, FeatureTable, ScalingParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the absolute loss change between iterations drops below this.
    pub tolerance: f64,
    /// L2 strength; penalty is `l2 / (2N) * |beta|^2`.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_iterations: 20_000,
            tolerance: 1e-8,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Validation(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub l2: f64,
    pub training_rows: usize,
    pub feature_options: FeatureOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub alpha: f64,
    /// Coefficients in training feature order.
    pub coefficients: IndexMap<String, f64>,
    #[serde(default)]
    pub scaling: ScalingParams,
    #[serde(default)]
    pub metadata: TrainingMetadata,
}

/// Mean loss and its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub d_alpha: f64,
    /// In model feature order.
    pub d_beta: Vec<f64>,
}

/// Numerically stable logistic function, kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn new(alpha: f64, coefficients: IndexMap<String, f64>) -> Self {
        Self {
            alpha,
            coefficients,
            scaling: ScalingParams::default(),
            metadata: TrainingMetadata::default(),
        }
    }

    /// Zero-initialized model over `names`.
    pub fn zeros<S: AsRef<str>>(names: &[S]) -> Self {
        Self::new(0.0, names.iter().map(|n| (n.as_ref().to_string(), 0.0)).collect())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.coefficients.keys().cloned().collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.values().copied().collect()
    }

    /// For each model feature, its column index in `names`.
    pub fn align(&self, names: &[String]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let idx: Vec<usize> = self
            .coefficients
            .keys()
            .filter_map(|k| {
                let pos = names.iter().position(|n| n == k);
                if pos.is_none() {
                    missing.push(k.clone());
                }
                pos
            })
            .collect();
        if missing.is_empty() {
            Ok(idx)
        } else {
            Err(Error::FeatureMismatch { missing })
        }
    }

    fn logit_aligned(&self, row: &[f64], idx: &[usize]) -> f64 {
        self.alpha
            + self
                .coefficients
                .values()
                .zip(idx)
                .map(|(b, &j)| b * row[j])
                .sum::<f64>()
    }

    /// Log-odds for a row given in model feature order.
    pub fn logit(&self, row: &[f64]) -> f64 {
        self.alpha + self.coefficients.values().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Probability for a scaled row given in model feature order.
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }

    /// Probability for a scaled row whose columns are named by `names`.
    pub fn predict_proba(&self, names: &[String], row: &[f64]) -> Result<f64> {
        let idx = self.align(names)?;
        Ok(sigmoid(self.logit_aligned(row, &idx)))
    }

    /// Probabilities for every row of an already-scaled table.
    pub fn predict_table(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let idx = self.align(&table.feature_names)?;
        Ok(table
            .rows
            .iter()
            .map(|r| sigmoid(self.logit_aligned(r, &idx)))
            .collect())
    }

    /// Probabilities for a raw (unscaled) table using the stored scaling.
    pub fn predict_raw_table(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let scaled = crate::features::apply_scaling(table, &self.scaling)?;
        self.predict_table(&scaled)
    }

    /// Probability for a raw row named by `names`, using the stored scaling.
    pub fn predict_proba_raw(&self, names: &[String], row: &[f64]) -> Result<f64> {
        let scaled = self.scaling.scale_row(names, row)?;
        self.predict_proba(names, &scaled)
    }

    /// Intercept and coefficients re-expressed for raw (unscaled) inputs.
    pub fn raw_space(&self) -> (f64, Vec<f64>) {
        let mut alpha = self.alpha;
        let beta = self
            .coefficients
            .iter()
            .map(|(name, b)| match self.scaling.get(name) {
                Some(p) if p.sigma == 0.0 => 0.0,
                Some(p) => {
                    alpha -= b * p.mu / p.sigma;
                    b / p.sigma
                }
                None => *b,
            })
            .collect();
        (alpha, beta)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            file: "model".into(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            file: "model".into(),
            source,
        })?;
        if !model.alpha.is_finite() || model.coefficients.values().any(|b| !b.is_finite()) {
            return Err(Error::Validation("model contains non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                file: path.display().to_string(),
                source,
            },
            other => other,
        })
    }
}

/// Mean binary cross-entropy plus `l2 / (2N) * |beta|^2`, and its gradient.
/// The intercept is not penalized.
pub fn loss_and_gradient(model: &LogisticModel, table: &FeatureTable, l2: f64) -> Result<LossGradient> {
    let idx = model.align(&table.feature_names)?;
    if table.is_empty() {
        return Err(Error::InsufficientData("loss over an empty table".into()));
    }
    Ok(loss_grad_aligned(model, table, &idx, l2))
}

fn loss_grad_aligned(model: &LogisticModel, table: &FeatureTable, idx: &[usize], l2: f64) -> LossGradient {
    let n = table.len() as f64;
    let beta = model.beta();
    let mut loss = 0.0;
    let mut d_alpha = 0.0;
    let mut d_beta = vec![0.0; beta.len()];
    for (row, &label) in table.rows.iter().zip(&table.labels) {
        let z = model.alpha + beta.iter().zip(idx).map(|(b, &j)| b * row[j]).sum::<f64>();
        let y = if label { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let r = sigmoid_unclamped(z) - y;
        d_alpha += r;
        for (g, &j) in d_beta.iter_mut().zip(idx) {
            *g += r * row[j];
        }
    }
    let penalty = l2 / (2.0 * n) * beta.iter().map(|b| b * b).sum::<f64>();
    for (g, b) in d_beta.iter_mut().zip(&beta) {
        *g = *g / n + l2 / n * b;
    }
    LossGradient {
        loss: loss / n + penalty,
        d_alpha: d_alpha / n,
        d_beta,
    }
}

fn sigmoid_unclamped(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn fit(table: &FeatureTable, config: &TrainConfig) -> Result<LogisticModel> {
    fit_with_trace(table, config).map(|(m, _)| m)
}

/// Like [`fit`], also returning the loss after every iteration (index 0 is
/// the zero-initialized loss).
pub fn fit_with_trace(table: &FeatureTable, config: &TrainConfig) -> Result<(LogisticModel, Vec<f64>)> {
    config.validate()?;
    if table.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fitting needs at least 2 rows, got {}",
            table.len()
        )));
    }
    let positives = table.positives();
    if positives == 0 || positives == table.len() {
        return Err(Error::DegenerateLabels(format!(
            "all {} training labels are {}",
            table.len(),
            u8::from(positives > 0)
        )));
    }

    let mut model = LogisticModel::zeros(&table.feature_names);
    let idx: Vec<usize> = (0..table.width()).collect();
    let mut current = loss_grad_aligned(&model, table, &idx, config.l2);
    let initial_loss = current.loss;
    let mut trace = vec![initial_loss];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iterations {
        model.alpha -= config.learning_rate * current.d_alpha;
        for (b, g) in model.coefficients.values_mut().zip(&current.d_beta) {
            *b -= config.learning_rate * g;
        }
        let next = loss_grad_aligned(&model, table, &idx, config.l2);
        if !next.loss.is_finite() || !model.alpha.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                loss: next.loss,
                learning_rate: config.learning_rate,
            });
        }
        trace.push(next.loss);
        let delta = current.loss - next.loss;
        current = next;
        iterations = it;
        if delta.abs() < config.tolerance {
            converged = true;
            break;
        }
    }
    if current.loss > initial_loss {
        return Err(Error::Divergence {
            iteration: iterations,
            loss: current.loss,
            learning_rate: config.learning_rate,
        });
    }
    if !converged {
        log::warn!(
            "gradient descent stopped at max_iterations = {} without converging (loss {})",
            config.max_iterations,
            current.loss
        );
    }
    model.metadata = TrainingMetadata {
        seed: config.seed,
        iterations,
        initial_loss,
        final_loss: current.loss,
        converged,
        learning_rate: config.learning_rate,
        tolerance: config.tolerance,
        l2: config.l2,
        training_rows: table.len(),
        feature_options: FeatureOptions::default(),
    };
    Ok((model, trace))
}

/// Positive iff the probability reaches the threshold.
pub fn predict_label(probability: f64, threshold: f64) -> bool {
    probability >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub feature: String,
    pub coefficient: f64,
    pub abs_coefficient: f64,
}

/// Coefficients ranked by magnitude, plus the unranked intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub rows: Vec<CoefficientRow>,
    pub intercept: f64,
}

pub fn coefficient_report(model: &LogisticModel) -> CoefficientReport {
    let mut rows: Vec<CoefficientRow> = model
        .coefficients
        .iter()
        .map(|(f, b)| CoefficientRow {
            feature: f.clone(),
            coefficient: *b,
            abs_coefficient: b.abs(),
        })
        .collect();
    rows.sort_by(|a, b| match b.abs_coefficient.total_cmp(&a.abs_coefficient) {
        Ordering::Equal => a.feature.cmp(&b.feature),
        o => o,
    });
    CoefficientReport {
        rows,
        intercept: model.alpha,
    }
}

impl CoefficientReport {
    /// `feature,coefficient,abs_coefficient`; the intercept is the last row
    /// with an empty magnitude.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = crate::csv_util::csv_err("coefficients");
        w.write_record(["feature", "coefficient", "abs_coefficient"]).map_err(&err)?;
        for r in &self.rows {
            w.write_record([r.feature.clone(), r.coefficient.to_string(), r.abs_coefficient.to_string()])
                .map_err(&err)?;
        }
        w.write_record(["intercept".to_string(), self.intercept.to_string(), String::new()])
            .map_err(&err)?;
        crate::csv_util::flush(&mut w, "coefficients")
    }
}
