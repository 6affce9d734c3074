//! Non-conformity scores: LAC, APS and RAPS.
//!
//! All three use strict inequality when deciding which classes are "more
//! likely" than the candidate label, so classes tied with the candidate
//! contribute neither accumulated mass nor rank.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{DataKind, LogitDataset};
use crate::rng;

/// Default RAPS penalty weight.
pub const DEFAULT_RAPS_LAMBDA: f64 = 0.1;
/// Default RAPS rank offset before the penalty applies.
pub const DEFAULT_RAPS_K_REG: usize = 2;

/// Keyed-stream domain for `u` draws inside one score batch.
const U_DOMAIN: u64 = 0x75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lac,
    Aps,
    Raps,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lac, Method::Aps, Method::Raps];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lac => "lac",
            Method::Aps => "aps",
            Method::Raps => "raps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lac" | "thr" => Ok(Method::Lac),
            "aps" => Ok(Method::Aps),
            "raps" => Ok(Method::Raps),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// How the tie-breaking draw `u` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UMode {
    /// One uniform draw on [0, 1) per sample, shared by all its candidate labels.
    Uniform,
    Fixed(f64),
}

impl fmt::Display for UMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UMode::Uniform => f.write_str("uniform"),
            UMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for UMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(UMode::Uniform);
        }
        let v = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("bad u-mode {s:?}, expected uniform or fixed:<v>")))?;
        check_u(v)?;
        Ok(UMode::Fixed(v))
    }
}

/// A score function together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub method: Method,
    pub lambda: f64,
    pub k_reg: usize,
    pub u_mode: UMode,
}

impl ScoreSpec {
    pub fn lac() -> Self {
        Self { method: Method::Lac, lambda: 0.0, k_reg: 0, u_mode: UMode::Uniform }
    }

    pub fn aps() -> Self {
        Self { method: Method::Aps, lambda: 0.0, k_reg: 0, u_mode: UMode::Uniform }
    }

    pub fn raps(lambda: f64, k_reg: usize) -> Self {
        Self { method: Method::Raps, lambda, k_reg, u_mode: UMode::Uniform }
    }

    /// Spec for `method` with the default hyperparameters.
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Lac => Self::lac(),
            Method::Aps => Self::aps(),
            Method::Raps => Self::raps(DEFAULT_RAPS_LAMBDA, DEFAULT_RAPS_K_REG),
        }
    }

    pub fn with_u_mode(mut self, u_mode: UMode) -> Self {
        self.u_mode = u_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let UMode::Fixed(v) = self.u_mode {
            check_u(v)?;
        }
        Ok(())
    }

    /// The `u` used for sample `index` of a batch keyed by `seed`.
    pub fn u_for(&self, seed: u64, index: usize) -> f64 {
        match self.u_mode {
            UMode::Fixed(v) => v,
            UMode::Uniform => rng::keyed_uniform(seed, U_DOMAIN, index as u64),
        }
    }

    /// Score of label `y` for probability row `p`.
    pub fn score(&self, p: &[f64], y: usize, u: f64) -> f64 {
        match self.method {
            Method::Lac => 1.0 - p[y],
            _ => {
                let ranked = RankedRow::new(p);
                self.ranked_score(p, &ranked, y, u)
            }
        }
    }

    /// Scores of every label for probability row `p`, written into `out`.
    pub fn row_scores_into(&self, p: &[f64], u: f64, out: &mut [f64]) {
        match self.method {
            Method::Lac => {
                for (o, &py) in out.iter_mut().zip(p) {
                    *o = 1.0 - py;
                }
            }
            _ => {
                let ranked = RankedRow::new(p);
                for (y, o) in out.iter_mut().enumerate() {
                    *o = self.ranked_score(p, &ranked, y, u);
                }
            }
        }
    }

    pub fn row_scores(&self, p: &[f64], u: f64) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.row_scores_into(p, u, &mut out);
        out
    }

    fn ranked_score(&self, p: &[f64], ranked: &RankedRow, y: usize, u: f64) -> f64 {
        let aps = ranked.rho[y] + p[y] * u;
        match self.method {
            Method::Lac => 1.0 - p[y],
            Method::Aps => aps,
            Method::Raps => {
                let rank = ranked.greater[y] + 1;
                aps + self.lambda * rank.saturating_sub(self.k_reg) as f64
            }
        }
    }
}

impl Default for ScoreSpec {
    fn default() -> Self {
        Self::for_method(Method::Raps)
    }
}

/// Accumulated mass and count of strictly more likely classes, per label.
///
/// Mass is accumulated in descending-probability order so every path that
/// scores a label (single or whole-row) produces bit-identical values.
struct RankedRow {
    rho: Vec<f64>,
    greater: Vec<usize>,
}

impl RankedRow {
    fn new(p: &[f64]) -> Self {
        let k = p.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        let mut rho = vec![0.0; k];
        let mut greater = vec![0; k];
        let mut cum = 0.0;
        let mut start = 0;
        while start < k {
            let value = p[order[start]];
            let mut end = start;
            while end < k && p[order[end]] == value {
                rho[order[end]] = cum;
                greater[order[end]] = start;
                end += 1;
            }
            for &idx in &order[start..end] {
                cum += p[idx];
            }
            start = end;
        }
        Self { rho, greater }
    }
}

fn check_u(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("u must lie in [0, 1], got {u}")));
    }
    Ok(())
}

fn check_label(p: &[f64], y: usize) -> Result<()> {
    if y >= p.len() {
        return Err(Error::Index { index: y, len: p.len() });
    }
    Ok(())
}

/// LAC score `1 - p[y]`.
pub fn score_lac(p: &[f64], y: usize) -> Result<f64> {
    check_label(p, y)?;
    Ok(ScoreSpec::lac().score(p, y, 0.0))
}

/// APS score: mass of strictly more likely classes plus `p[y] * u`.
pub fn score_aps(p: &[f64], y: usize, u: f64) -> Result<f64> {
    check_label(p, y)?;
    check_u(u)?;
    Ok(ScoreSpec::aps().score(p, y, u))
}

/// RAPS score: APS plus `lambda * max(0, rank - k_reg)`.
pub fn score_raps(p: &[f64], y: usize, u: f64, lambda: f64, k_reg: usize) -> Result<f64> {
    check_label(p, y)?;
    check_u(u)?;
    let spec = ScoreSpec::raps(lambda, k_reg);
    spec.validate()?;
    Ok(spec.score(p, y, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelsMode {
    Observed,
    AllClasses,
}

/// Output of [`score_batch`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreBatch {
    /// `S(x_i, y_i)` per sample.
    Observed(Vec<f64>),
    /// Row-major `n x K` matrix of `S(x_i, y)`.
    AllClasses { values: Vec<f64>, k: usize },
}

impl ScoreBatch {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            ScoreBatch::Observed(v) => v,
            ScoreBatch::AllClasses { values, .. } => values,
        }
    }
}

fn require_probabilities(ds: &LogitDataset) -> Result<()> {
    if ds.kind() != DataKind::Probabilities {
        return Err(Error::InvalidState(
            "scores need probabilities; apply a temperature first".into(),
        ));
    }
    Ok(())
}

/// Scores a whole dataset. With uniform `u`, sample `i` uses the draw keyed
/// by `(seed, i)`, so results do not depend on the parallel schedule.
pub fn score_batch(ds: &LogitDataset, spec: &ScoreSpec, mode: LabelsMode, seed: u64) -> Result<ScoreBatch> {
    require_probabilities(ds)?;
    spec.validate()?;
    match mode {
        LabelsMode::Observed => observed_scores(ds, spec, seed).map(ScoreBatch::Observed),
        LabelsMode::AllClasses => Ok(ScoreBatch::AllClasses {
            values: all_class_scores(ds, spec, seed),
            k: ds.num_classes(),
        }),
    }
}

pub(crate) fn observed_scores(ds: &LogitDataset, spec: &ScoreSpec, seed: u64) -> Result<Vec<f64>> {
    let labels = ds.labels()?;
    Ok((0..ds.n())
        .into_par_iter()
        .map(|i| spec.score(ds.row(i), labels[i], spec.u_for(seed, i)))
        .collect())
}

pub(crate) fn all_class_scores(ds: &LogitDataset, spec: &ScoreSpec, seed: u64) -> Vec<f64> {
    let k = ds.num_classes();
    let mut out = vec![0.0; ds.n() * k];
    out.par_chunks_mut(k).enumerate().for_each(|(i, chunk)| {
        spec.row_scores_into(ds.row(i), spec.u_for(seed, i), chunk);
    });
    out
}
