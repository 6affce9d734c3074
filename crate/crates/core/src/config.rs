use serde::{Deserialize, Serialize};

use crate::conformal::check_alpha;
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_ECE_BINS;
use crate::prob::{default_temperature_grid, TemperatureConfig};
use crate::scores::ScoreSpec;

/// Miscoverage level used for every dataset except CIFAR-10.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Miscoverage level of the CIFAR-10 recipe.
pub const CIFAR10_ALPHA: f64 = 0.05;
pub const DEFAULT_CAL_FRACTION: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Default,
    Cifar10,
}

impl Recipe {
    pub fn alpha(self) -> f64 {
        match self {
            Recipe::Default => DEFAULT_ALPHA,
            Recipe::Cifar10 => CIFAR10_ALPHA,
        }
    }
}

/// Temperature policy for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureSetting {
    Single(f64),
    Grid(Vec<f64>),
}

/// Everything a harness command needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub method: ScoreSpec,
    pub cal_fraction: f64,
    pub seed: u64,
    /// `None` leaves probabilities untouched and scales logits at `T = 1`.
    pub temperature: Option<TemperatureSetting>,
    pub ece_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_recipe(Recipe::Default)
    }
}

impl RunConfig {
    pub fn for_recipe(recipe: Recipe) -> Self {
        Self {
            alpha: recipe.alpha(),
            method: ScoreSpec::default(),
            cal_fraction: DEFAULT_CAL_FRACTION,
            seed: DEFAULT_SEED,
            temperature: None,
            ece_bins: DEFAULT_ECE_BINS,
        }
    }

    pub fn cifar10() -> Self {
        Self::for_recipe(Recipe::Cifar10)
    }

    pub fn with_method(mut self, method: ScoreSpec) -> Self {
        self.method = method;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(TemperatureSetting::Single(t));
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.method.validate()?;
        if !(self.cal_fraction > 0.0 && self.cal_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "calibration fraction must lie in (0, 1], got {}",
                self.cal_fraction
            )));
        }
        if self.ece_bins == 0 {
            return Err(Error::InvalidParameter("ECE needs at least one bin".into()));
        }
        match &self.temperature {
            Some(TemperatureSetting::Single(t)) => {
                TemperatureConfig::new(*t, vec![*t])?;
            }
            Some(TemperatureSetting::Grid(g)) => {
                TemperatureConfig::new(1.0, g.clone())?;
            }
            None => {}
        }
        Ok(())
    }

    /// The grid to sweep: the configured one, else the default 14 points.
    pub fn sweep_grid(&self) -> Vec<f64> {
        match &self.temperature {
            Some(TemperatureSetting::Grid(g)) => g.clone(),
            _ => default_temperature_grid(),
        }
    }
}
