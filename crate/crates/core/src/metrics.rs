//! Evaluation metrics for prediction sets and confidence calibration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionSet;
use crate::error::{Error, Result};
use crate::prob::argmax;

/// Default number of equal-width confidence bins for ECE.
pub const DEFAULT_ECE_BINS: usize = 15;

/// Coverage per class, keyed by class index. Classes without test samples
/// are absent.
pub type ClassCoverage = BTreeMap<usize, f64>;

fn check_aligned(sets: &[PredictionSet], labels: &[usize]) -> Result<()> {
    if sets.len() != labels.len() {
        return Err(Error::Schema(format!("{} sets for {} labels", sets.len(), labels.len())));
    }
    Ok(())
}

pub fn avg_set_size(sets: &[PredictionSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no prediction sets".into()));
    }
    Ok(sets.iter().map(PredictionSet::size).sum::<usize>() as f64 / sets.len() as f64)
}

pub fn empty_set_fraction(sets: &[PredictionSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no prediction sets".into()));
    }
    Ok(sets.iter().filter(|s| s.is_empty()).count() as f64 / sets.len() as f64)
}

/// Fraction of samples whose label lies in its set.
pub fn empirical_coverage(sets: &[PredictionSet], labels: &[usize]) -> Result<f64> {
    check_aligned(sets, labels)?;
    if sets.is_empty() {
        return Err(Error::InvalidInput("no prediction sets".into()));
    }
    let hits = sets.iter().zip(labels).filter(|(s, &y)| s.contains(y)).count();
    Ok(hits as f64 / sets.len() as f64)
}

/// Coverage restricted to each class present among `labels`.
pub fn class_conditional_coverage(sets: &[PredictionSet], labels: &[usize], k: usize) -> Result<ClassCoverage> {
    check_aligned(sets, labels)?;
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for (s, &y) in sets.iter().zip(labels) {
        if y >= k {
            return Err(Error::Index { index: y, len: k });
        }
        totals[y] += 1;
        if s.contains(y) {
            hits[y] += 1;
        }
    }
    Ok(totals
        .iter()
        .zip(&hits)
        .enumerate()
        .filter(|(_, (&t, _))| t > 0)
        .map(|(c, (&t, &h))| (c, h as f64 / t as f64))
        .collect())
}

/// Mean absolute deviation of class coverage from `1 - alpha`.
pub fn cov_gap(per_class: &ClassCoverage, alpha: f64) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::InvalidInput("empty class coverage map".into()));
    }
    let target = 1.0 - alpha;
    Ok(per_class.values().map(|c| (c - target).abs()).sum::<f64>() / per_class.len() as f64)
}

/// Minimum class-conditional coverage.
pub fn mccc(per_class: &ClassCoverage) -> Result<f64> {
    per_class
        .values()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidInput("empty class coverage map".into()))
}

/// Class with the lowest coverage, lowest index on ties.
pub fn worst_class(per_class: &ClassCoverage) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (&c, &v) in per_class {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((c, v));
        }
    }
    best
}

/// Top-label expected calibration error over `n_bins` equal-width bins.
///
/// `probs` is a row-major `n x k` probability matrix. Confidence 1.0 falls
/// into the last bin.
pub fn ece(probs: &[f64], k: usize, labels: &[usize], n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("ECE needs at least one bin".into()));
    }
    if k == 0 || probs.len() != labels.len() * k {
        return Err(Error::Schema(format!("{} values for {} labels and {k} classes", probs.len(), labels.len())));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidInput("ECE of an empty sample".into()));
    }
    // per bin: sum of (correct - confidence)
    let mut gap = vec![0.0f64; n_bins];
    for (row, &y) in probs.chunks_exact(k).zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let bin = ((conf * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1);
        gap[bin] += f64::from(u8::from(pred == y)) - conf;
    }
    Ok(gap.iter().map(|g| g.abs()).sum::<f64>() / n as f64)
}

/// Per-sample size differences between two aligned runs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeDelta {
    /// Count of each nonzero `size(a) - size(b)`.
    pub histogram: BTreeMap<i64, usize>,
    pub zeros: usize,
}

impl SizeDelta {
    pub fn total(&self) -> usize {
        self.zeros + self.histogram.values().sum::<usize>()
    }
}

pub fn set_size_delta(sets_a: &[PredictionSet], sets_b: &[PredictionSet]) -> Result<SizeDelta> {
    if sets_a.len() != sets_b.len() {
        return Err(Error::Schema(format!("{} vs {} samples", sets_a.len(), sets_b.len())));
    }
    let mut out = SizeDelta::default();
    for (a, b) in sets_a.iter().zip(sets_b) {
        match a.size() as i64 - b.size() as i64 {
            0 => out.zeros += 1,
            d => *out.histogram.entry(d).or_insert(0) += 1,
        }
    }
    Ok(out)
}

/// One run's per-class coverage together with its sets over a shared test split.
#[derive(Debug, Clone, Copy)]
pub struct RunView<'a> {
    pub per_class: &'a ClassCoverage,
    pub sets: &'a [PredictionSet],
    pub labels: &'a [usize],
}

/// Run A's worst class, and how run B fares on that same class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstClassComparison {
    pub class: usize,
    pub a_coverage: f64,
    pub a_mean_size: f64,
    /// `None` when run B has no entry for the class.
    pub b_coverage: Option<f64>,
    pub b_mean_size: Option<f64>,
    pub b_worst_class: Option<usize>,
    pub b_min_coverage: Option<f64>,
}

fn mean_size_for_class(sets: &[PredictionSet], labels: &[usize], class: usize) -> Option<f64> {
    let sizes: Vec<usize> = sets
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == class)
        .map(|(s, _)| s.size())
        .collect();
    (!sizes.is_empty()).then(|| sizes.iter().sum::<usize>() as f64 / sizes.len() as f64)
}

pub fn worst_class_comparison(a: RunView<'_>, b: RunView<'_>) -> Result<WorstClassComparison> {
    check_aligned(a.sets, a.labels)?;
    check_aligned(b.sets, b.labels)?;
    let (class, a_coverage) =
        worst_class(a.per_class).ok_or_else(|| Error::InvalidInput("run A has no class coverage".into()))?;
    let a_mean_size = mean_size_for_class(a.sets, a.labels, class).unwrap_or(0.0);
    let b_coverage = b.per_class.get(&class).copied();
    let b_mean_size = b_coverage.and_then(|_| mean_size_for_class(b.sets, b.labels, class));
    let b_worst = worst_class(b.per_class);
    Ok(WorstClassComparison {
        class,
        a_coverage,
        a_mean_size,
        b_coverage,
        b_mean_size,
        b_worst_class: b_worst.map(|w| w.0),
        b_min_coverage: b_worst.map(|w| w.1),
    })
}

/// Metrics of one conformal run on a test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_set_size: f64,
    pub coverage: f64,
    pub cov_gap: f64,
    pub mccc: f64,
    pub ece: f64,
    pub per_class_coverage: ClassCoverage,
    pub empty_set_fraction: f64,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Computes every metric. `probs` is the row-major test probability
    /// matrix the sets were built from.
    pub fn compute(
        sets: &[PredictionSet],
        labels: &[usize],
        probs: &[f64],
        k: usize,
        alpha: f64,
        n_bins: usize,
    ) -> Result<Self> {
        let per_class = class_conditional_coverage(sets, labels, k)?;
        let hits = probs
            .chunks_exact(k)
            .zip(labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        Ok(Self {
            avg_set_size: avg_set_size(sets)?,
            coverage: empirical_coverage(sets, labels)?,
            cov_gap: cov_gap(&per_class, alpha)?,
            mccc: mccc(&per_class)?,
            ece: ece(probs, k, labels, n_bins)?,
            empty_set_fraction: empty_set_fraction(sets)?,
            accuracy: hits as f64 / labels.len() as f64,
            per_class_coverage: per_class,
        })
    }
}
