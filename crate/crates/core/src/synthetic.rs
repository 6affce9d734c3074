//! Synthetic classifiers with a known accuracy, used as ground truth for
//! coverage, calibration and shift experiments.
//!
//! Each sample draws a true label uniformly, then picks an *intended* class:
//! the true label with probability `target_accuracy`, otherwise a uniformly
//! chosen wrong label. The probability row is a Dirichlet draw whose
//! concentration is boosted on the intended class (and, for misdirected
//! samples, more mildly on the true label); the largest component is then
//! swapped onto the intended class so the row's argmax is exactly the
//! intended class.

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{DataKind, LogitDataset};
use crate::rng::{self, domain, Xoshiro256StarStar};

pub const DEFAULT_SHARPNESS: f64 = 1.0;
pub const DEFAULT_RUNNER_UP: f64 = 0.5;

/// Shifted test distribution relative to calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub accuracy_drop: f64,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k: usize,
    pub n: usize,
    pub target_accuracy: f64,
    /// Concentration boost on the intended class, per competing class.
    pub sharpness: f64,
    /// Boost on the true label of a misdirected sample, relative to `sharpness`.
    pub runner_up: f64,
    pub shift: Option<Shift>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(k: usize, n: usize, target_accuracy: f64, seed: u64) -> Self {
        Self {
            k,
            n,
            target_accuracy,
            sharpness: DEFAULT_SHARPNESS,
            runner_up: DEFAULT_RUNNER_UP,
            shift: None,
            seed,
        }
    }

    pub fn with_sharpness(mut self, sharpness: f64) -> Self {
        self.sharpness = sharpness;
        self
    }

    pub fn with_shift(mut self, accuracy_drop: f64, noise_scale: f64) -> Self {
        self.shift = Some(Shift { accuracy_drop, noise_scale });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.n < 1 {
            return Err(Error::InvalidParameter("synthetic data needs K >= 1 and n >= 1".into()));
        }
        if !(self.target_accuracy > 0.0 && self.target_accuracy <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target accuracy must lie in (0, 1], got {}",
                self.target_accuracy
            )));
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(Error::InvalidParameter("sharpness must be positive".into()));
        }
        if !(self.runner_up.is_finite() && self.runner_up >= 0.0) {
            return Err(Error::InvalidParameter("runner-up boost must be nonnegative".into()));
        }
        if let Some(s) = self.shift {
            if !(s.accuracy_drop >= 0.0 && s.accuracy_drop < self.target_accuracy) {
                return Err(Error::InvalidParameter(format!(
                    "accuracy drop must lie in [0, {}), got {}",
                    self.target_accuracy, s.accuracy_drop
                )));
            }
            if !(s.noise_scale.is_finite() && s.noise_scale >= 0.0) {
                return Err(Error::InvalidParameter("noise scale must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

fn sample_row(spec: &SyntheticSpec, rng: &mut Xoshiro256StarStar, row: &mut [f64]) -> usize {
    let k = spec.k;
    let label = rng.below(k as u64) as usize;
    if k == 1 {
        row[0] = 1.0;
        return label;
    }
    let correct = rng.next_f64() < spec.target_accuracy;
    let intended = if correct {
        label
    } else {
        let j = rng.below(k as u64 - 1) as usize;
        if j >= label { j + 1 } else { j }
    };
    let boost = spec.sharpness * (k - 1) as f64;
    let mut sum = 0.0;
    for (c, v) in row.iter_mut().enumerate() {
        let mut shape = 1.0;
        if c == intended {
            shape += boost;
        } else if c == label {
            shape += spec.runner_up * boost;
        }
        let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        *v = g;
        sum += g;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    let top = crate::prob::argmax(row);
    row.swap(top, intended);
    label
}

/// Draws a probabilities dataset; sample `i` depends only on `(seed, i)`.
pub fn generate(spec: &SyntheticSpec) -> Result<LogitDataset> {
    spec.validate()?;
    let k = spec.k;
    let mut values = vec![0.0; spec.n * k];
    let labels: Vec<usize> = values
        .par_chunks_mut(k)
        .enumerate()
        .map(|(i, row)| {
            let mut rng = Xoshiro256StarStar::keyed(spec.seed, domain::SYNTH, i as u64);
            sample_row(spec, &mut rng, row)
        })
        .collect();
    LogitDataset::new(values, Some(labels), spec.n, k, DataKind::Probabilities)
}

/// Calibration set from the base spec and a test set under `spec.shift`,
/// each with `spec.n` samples and independent seeds.
pub fn generate_pair(spec: &SyntheticSpec) -> Result<(LogitDataset, LogitDataset)> {
    let shift = spec
        .shift
        .ok_or_else(|| Error::InvalidParameter("generate_pair needs a shift".into()))?;
    spec.validate()?;
    let base = SyntheticSpec {
        shift: None,
        seed: rng::derive_seed(spec.seed, domain::SYNTH),
        ..spec.clone()
    };
    let shifted = SyntheticSpec {
        target_accuracy: spec.target_accuracy - shift.accuracy_drop,
        sharpness: spec.sharpness / (1.0 + shift.noise_scale),
        shift: None,
        seed: rng::derive_seed(spec.seed, domain::SYNTH_SHIFT),
        ..spec.clone()
    };
    Ok((generate(&base)?, generate(&shifted)?))
}
