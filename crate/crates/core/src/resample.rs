//! SMOTE oversampling followed by Edited Nearest Neighbours cleaning.
//!
//! Neighbour search is exact brute force over Euclidean distance. Equal
//! distances are ordered by row index, so results depend only on the input
//! table and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub smote_k: usize,
    pub enn_k: usize,
    /// Minority/majority ratio reached by SMOTE.
    pub target_ratio: f64,
    pub seed: u64,
    /// Edit both classes instead of the majority class only.
    pub enn_both_classes: bool,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            smote_k: 5,
            enn_k: 3,
            target_ratio: 1.0,
            seed: 0,
            enn_both_classes: false,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smote_k == 0 {
            return Err(Error::Validation("smote_k must be >= 1".into()));
        }
        if self.enn_k == 0 || self.enn_k.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "enn_k must be odd and >= 1, got {}",
                self.enn_k
            )));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Validation(format!(
                "target_ratio must be in (0, 1], got {}",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` rows among `candidates` closest to `rows[query]`, excluding the
/// query itself, nearest first. `candidates` must be in ascending order.
pub fn nearest_neighbors(rows: &[Vec<f64>], candidates: &[usize], query: usize, k: usize) -> Vec<usize> {
    let q = &rows[query];
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for &c in candidates {
        if c == query {
            continue;
        }
        let d = sq_dist(q, &rows[c]);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let at = best.partition_point(|(bd, _)| *bd <= d);
        best.insert(at, (d, c));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// Label of the class with fewer rows, or `None` when the classes are balanced.
fn minority_label(table: &FeatureTable) -> Option<bool> {
    let pos = table.positives();
    let neg = table.len() - pos;
    match pos.cmp(&neg) {
        std::cmp::Ordering::Less => Some(true),
        std::cmp::Ordering::Greater => Some(false),
        std::cmp::Ordering::Equal => None,
    }
}

/// Append synthetic minority rows until the minority/majority ratio reaches
/// `target_ratio`. Each synthetic row is `x + u * (nn - x)` for a random
/// minority row `x`, one of its `smote_k` nearest minority neighbours `nn`
/// and `u ~ U[0, 1)`. Original rows are kept unchanged and come first.
pub fn smote(table: &FeatureTable, config: &ResampleConfig) -> Result<FeatureTable> {
    config.validate()?;
    let Some(minority) = minority_label(table) else {
        return Ok(table.clone());
    };
    let minority_idx: Vec<usize> = (0..table.len()).filter(|&i| table.labels[i] == minority).collect();
    let n_min = minority_idx.len();
    let n_maj = table.len() - n_min;
    let wanted = (config.target_ratio * n_maj as f64).ceil() as usize;
    let n_synthetic = wanted.saturating_sub(n_min);
    if n_synthetic == 0 {
        return Ok(table.clone());
    }
    if n_min < 2 {
        return Err(Error::InsufficientData(format!(
            "SMOTE needs at least 2 minority rows, got {n_min}"
        )));
    }
    let mut k = config.smote_k;
    if k > n_min - 1 {
        log::warn!("smote_k = {k} exceeds minority size - 1; clamping to {}", n_min - 1);
        k = n_min - 1;
    }

    let neighbors: Vec<Vec<usize>> = minority_idx
        .iter()
        .map(|&i| nearest_neighbors(&table.rows, &minority_idx, i, k))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = table.clone();
    out.rows.reserve(n_synthetic);
    for _ in 0..n_synthetic {
        let base = rng.random_range(0..n_min);
        let nn = neighbors[base][rng.random_range(0..k)];
        let u: f64 = rng.random();
        let a = &table.rows[minority_idx[base]];
        let b = &table.rows[nn];
        out.rows.push(a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect());
        out.labels.push(minority);
        out.dates.push(table.dates[minority_idx[base]]);
        out.synthetic.push(true);
    }
    log::debug!("SMOTE added {n_synthetic} synthetic rows (k = {k})");
    Ok(out)
}

/// Remove majority-class rows whose `enn_k` nearest neighbours vote for the
/// other class. The majority class is the larger one (negatives on a tie).
pub fn enn(table: &FeatureTable, config: &ResampleConfig) -> Result<FeatureTable> {
    let majority = table.positives() * 2 > table.len();
    enn_with_majority(table, config, majority)
}

fn enn_with_majority(table: &FeatureTable, config: &ResampleConfig, majority: bool) -> Result<FeatureTable> {
    config.validate()?;
    let k = config.enn_k;
    if table.len() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "ENN with k = {k} needs at least {} rows, got {}",
            k + 1,
            table.len()
        )));
    }
    let all: Vec<usize> = (0..table.len()).collect();
    let keep: Vec<bool> = all
        .par_iter()
        .map(|&i| {
            let label = table.labels[i];
            if !config.enn_both_classes && label != majority {
                return true;
            }
            let nn = nearest_neighbors(&table.rows, &all, i, k);
            let positive_votes = nn.iter().filter(|&&j| table.labels[j]).count();
            let voted = if positive_votes * 2 > nn.len() {
                Some(true)
            } else if positive_votes * 2 < nn.len() {
                Some(false)
            } else {
                None
            };
            voted.is_none_or(|v| v == label)
        })
        .collect();
    let kept: Vec<usize> = all.into_iter().filter(|&i| keep[i]).collect();
    log::debug!("ENN removed {} of {} rows", table.len() - kept.len(), table.len());
    Ok(table.select(&kept))
}

/// SMOTE followed by ENN. ENN edits the class that was the majority before
/// oversampling.
pub fn smoteenn(table: &FeatureTable, config: &ResampleConfig) -> Result<FeatureTable> {
    let majority = match minority_label(table) {
        Some(minority) => !minority,
        None => false,
    };
    let oversampled = smote(table, config)?;
    enn_with_majority(&oversampled, config, majority)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn table(points: &[(f64, f64, bool)]) -> FeatureTable {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        FeatureTable::new(
            vec!["x".into(), "y".into()],
            points.iter().map(|(x, y, _)| vec![*x, *y]).collect(),
            points.iter().map(|p| p.2).collect(),
            start.iter_days().take(points.len()).collect(),
        )
        .unwrap()
    }

    fn cfg() -> ResampleConfig {
        ResampleConfig {
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ResampleConfig { enn_k: 2, ..cfg() }.validate().is_err());
        assert!(ResampleConfig { smote_k: 0, ..cfg() }.validate().is_err());
        assert!(ResampleConfig { target_ratio: 1.5, ..cfg() }.validate().is_err());
        assert!(ResampleConfig { target_ratio: 0.0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn neighbors_break_ties_by_index() {
        let rows = vec![vec![0.0], vec![1.0], vec![-1.0], vec![2.0], vec![1.0]];
        let all: Vec<usize> = (0..rows.len()).collect();
        assert_eq!(nearest_neighbors(&rows, &all, 0, 3), vec![1, 2, 4]);
        assert_eq!(nearest_neighbors(&rows, &all, 1, 1), vec![4]);
    }

    #[test]
    fn balanced_table_is_untouched() {
        let t = table(&[(0.0, 0.0, true), (1.0, 1.0, false), (2.0, 2.0, true), (3.0, 3.0, false)]);
        assert_eq!(smote(&t, &cfg()).unwrap(), t);
    }

    #[test]
    fn two_point_minority_lies_on_diagonal() {
        let mut pts = vec![(0.0, 0.0, true), (1.0, 1.0, true)];
        pts.extend((0..10).map(|i| (5.0 + i as f64, -3.0, false)));
        let t = table(&pts);
        let out = smote(&t, &ResampleConfig { smote_k: 1, ..cfg() }).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(&out.rows[..t.len()], &t.rows[..]);
        for i in t.len()..out.len() {
            let r = &out.rows[i];
            assert_eq!(r[0], r[1]);
            assert!((0.0..=1.0).contains(&r[0]));
            assert!(out.labels[i] && out.synthetic[i]);
        }
    }

    #[test]
    fn smote_is_deterministic() {
        let mut pts: Vec<_> = (0..5).map(|i| (i as f64, (i * i) as f64, true)).collect();
        pts.extend((0..30).map(|i| (i as f64, -(i as f64), false)));
        let t = table(&pts);
        assert_eq!(smote(&t, &cfg()).unwrap(), smote(&t, &cfg()).unwrap());
        let other = smote(&t, &ResampleConfig { seed: 8, ..cfg() }).unwrap();
        assert_ne!(smote(&t, &cfg()).unwrap(), other);
    }

    #[test]
    fn smote_needs_two_minority_rows() {
        let t = table(&[(0.0, 0.0, true), (1.0, 1.0, false), (2.0, 2.0, false)]);
        assert!(matches!(smote(&t, &cfg()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn smote_target_ratio_count() {
        let mut pts: Vec<_> = (0..4).map(|i| (i as f64, 0.0, true)).collect();
        pts.extend((0..21).map(|i| (i as f64, 10.0, false)));
        let t = table(&pts);
        let out = smote(&t, &ResampleConfig { target_ratio: 0.5, ..cfg() }).unwrap();
        // ceil(0.5 * 21) - 4 = 7
        assert_eq!(out.len() - t.len(), 7);
    }

    #[test]
    fn enn_removes_planted_noise() {
        let mut pts = vec![
            (10.0, 10.0, true),
            (10.2, 10.0, true),
            (10.0, 10.2, true),
            (9.8, 10.0, true),
            (10.0, 9.8, true),
            (10.05, 10.05, false), // majority point inside the minority cluster
        ];
        pts.extend((0..10).map(|i| (i as f64 * 0.1, 0.0, false)));
        let t = table(&pts);
        let out = enn(&t, &cfg()).unwrap();
        assert_eq!(out.len(), t.len() - 1);
        assert!(!out.rows.contains(&vec![10.05, 10.05]));
    }

    #[test]
    fn enn_keeps_separated_clusters() {
        let mut pts: Vec<_> = (0..6).map(|i| (100.0 + i as f64, 100.0, true)).collect();
        pts.extend((0..12).map(|i| (i as f64, 0.0, false)));
        let t = table(&pts);
        assert_eq!(enn(&t, &cfg()).unwrap(), t);
    }

    #[test]
    fn enn_single_class_unchanged() {
        let t = table(&[(0.0, 0.0, false), (1.0, 0.0, false), (2.0, 0.0, false), (3.0, 0.0, false)]);
        assert_eq!(enn(&t, &cfg()).unwrap(), t);
    }

    #[test]
    fn enn_majority_only_by_default() {
        // Minority point inside the majority cluster survives unless both classes are edited.
        let mut pts: Vec<_> = (0..8).map(|i| (i as f64 * 0.1, 0.0, false)).collect();
        pts.push((0.35, 0.01, true));
        pts.extend((0..3).map(|i| (50.0 + i as f64, 50.0, true)));
        let t = table(&pts);
        assert_eq!(enn(&t, &cfg()).unwrap().len(), t.len());
        let both = enn(&t, &ResampleConfig { enn_both_classes: true, ..cfg() }).unwrap();
        assert_eq!(both.len(), t.len() - 1);
    }

    #[test]
    fn enn_needs_enough_rows() {
        let t = table(&[(0.0, 0.0, false), (1.0, 0.0, true)]);
        assert!(enn(&t, &cfg()).is_err());
    }

    #[test]
    fn smoteenn_balances_and_is_deterministic() {
        let mut pts: Vec<_> = (0..8).map(|i| (5.0 + (i % 3) as f64, 5.0 + (i / 3) as f64, true)).collect();
        pts.extend((0..100).map(|i| ((i % 10) as f64 * 0.3, (i / 10) as f64 * 0.3, false)));
        let t = table(&pts);
        let a = smoteenn(&t, &cfg()).unwrap();
        let frac = a.positives() as f64 / a.len() as f64;
        assert!((0.3..=0.7).contains(&frac), "{frac}");
        assert_eq!(a, smoteenn(&t, &cfg()).unwrap());
    }
}
