//! Split-conformal calibration and prediction-set construction.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{DataKind, LogitDataset};
use crate::rng::{self, domain};
use crate::scores::{self, ScoreSpec};

/// Calibrated score threshold. `Unbounded` arises when the calibration set
/// is too small for the requested level and admits every label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Finite(f64),
    Unbounded,
}

impl Threshold {
    #[inline]
    pub fn admits(self, score: f64) -> bool {
        match self {
            Threshold::Finite(q) => score <= q,
            Threshold::Unbounded => true,
        }
    }

    /// The threshold as a float, `+inf` for the unbounded sentinel.
    pub fn value(self) -> f64 {
        match self {
            Threshold::Finite(q) => q,
            Threshold::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Threshold::Unbounded)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(q) => write!(f, "{q}"),
            Threshold::Unbounded => f.write_str("inf"),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// 1-indexed order statistic `ceil((n + 1)(1 - alpha))` used as the
/// conformal quantile. May exceed `n`.
///
/// A 1e-9 slack absorbs binary rounding of decimal `alpha` values, so that
/// e.g. `(9 + 1) * (1 - 0.3)` counts as exactly 7.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Threshold from calibration scores: the `quantile_rank`-th smallest score,
/// or the unbounded sentinel when that rank exceeds `n`.
pub fn calibrate(cal_scores: &[f64], alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    if cal_scores.is_empty() {
        return Err(Error::InvalidInput("no calibration scores".into()));
    }
    if cal_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("calibration scores contain NaN".into()));
    }
    let n = cal_scores.len();
    let rank = quantile_rank(n, alpha);
    if rank > n {
        return Ok(Threshold::Unbounded);
    }
    let mut scratch = cal_scores.to_vec();
    let idx = rank.max(1) - 1;
    let (_, kth, _) = scratch.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(Threshold::Finite(*kth))
}

/// A score function bound to a calibrated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalPredictor {
    pub spec: ScoreSpec,
    pub alpha: f64,
    pub q_alpha: Threshold,
    pub n_cal: usize,
}

impl ConformalPredictor {
    pub fn from_scores(spec: ScoreSpec, cal_scores: &[f64], alpha: f64) -> Result<Self> {
        spec.validate()?;
        let q_alpha = calibrate(cal_scores, alpha)?;
        Ok(Self { spec, alpha, q_alpha, n_cal: cal_scores.len() })
    }

    /// Calibrates on the observed-label scores of `cal`, drawing `u` from
    /// the stream keyed by `seed`.
    pub fn fit(spec: ScoreSpec, cal: &LogitDataset, alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        let scores = scores::score_batch(cal, &spec, scores::LabelsMode::Observed, seed)?.into_vec();
        Self::from_scores(spec, &scores, alpha)
    }

    pub fn predict(&self, p: &[f64], u: f64) -> PredictionSet {
        PredictionSet::from_scores(&self.spec.row_scores(p, u), self.q_alpha)
    }

    /// Prediction sets for every row of `ds`, sample `i` using the `u`
    /// keyed by `(seed, i)`.
    pub fn predict_dataset(&self, ds: &LogitDataset, seed: u64) -> Result<Vec<PredictionSet>> {
        let all = scores::score_batch(ds, &self.spec, scores::LabelsMode::AllClasses, seed)?.into_vec();
        Ok(sets_from_score_matrix(&all, ds.num_classes(), self.q_alpha))
    }
}

/// Sorted class indices admitted by a threshold.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    members: Vec<usize>,
}

impl PredictionSet {
    /// Builds a set from arbitrary members; duplicates are dropped.
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn from_scores(scores: &[f64], q: Threshold) -> Self {
        let members = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| q.admits(s))
            .map(|(y, _)| y)
            .collect();
        Self { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, y: usize) -> bool {
        self.members.binary_search(&y).is_ok()
    }

    pub fn is_subset(&self, other: &PredictionSet) -> bool {
        self.members.iter().all(|&y| other.contains(y))
    }
}

/// Applies one threshold to every row of a row-major score matrix.
pub fn sets_from_score_matrix(scores: &[f64], k: usize, q: Threshold) -> Vec<PredictionSet> {
    scores
        .par_chunks(k)
        .map(|row| PredictionSet::from_scores(row, q))
        .collect()
}

/// Prediction set for one probability row.
pub fn predict_set(p: &[f64], predictor: &ConformalPredictor, u: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("u must lie in [0, 1], got {u}")));
    }
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("probability row must be finite and nonnegative".into()));
    }
    Ok(predictor.predict(p, u))
}

/// Seeds of the calibration and test `u` streams derived from a run seed.
pub fn u_seeds(seed: u64) -> (u64, u64) {
    (rng::derive_seed(seed, domain::CAL_U), rng::derive_seed(seed, domain::TEST_U))
}

/// Calibrates on `cal` and builds a prediction set for every row of `test`.
pub fn conformalize(
    cal: &LogitDataset,
    test: &LogitDataset,
    spec: &ScoreSpec,
    alpha: f64,
    seed: u64,
) -> Result<(ConformalPredictor, Vec<PredictionSet>)> {
    if cal.num_classes() != test.num_classes() {
        return Err(Error::Schema(format!(
            "calibration has {} classes, test has {}",
            cal.num_classes(),
            test.num_classes()
        )));
    }
    for ds in [cal, test] {
        if ds.kind() != DataKind::Probabilities {
            return Err(Error::InvalidState("conformalize expects probabilities".into()));
        }
    }
    let (cal_seed, test_seed) = u_seeds(seed);
    let predictor = ConformalPredictor::fit(*spec, cal, alpha, cal_seed)?;
    let sets = predictor.predict_dataset(test, test_seed)?;
    Ok((predictor, sets))
}
