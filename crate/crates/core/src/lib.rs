//! Split conformal prediction over stored classifier outputs.
//!
//! The crate turns logits or probabilities into prediction sets with the
//! LAC, APS and RAPS non-conformity scores, computes coverage, efficiency
//! and calibration metrics, and runs the experiment protocols exposed by
//! the `cpbench` binary: single runs, temperature sweeps, calibration under
//! distribution shift and multi-model comparisons.
//!
//! ```
//! use cpbench::{conformalize, generate, io, ScoreSpec, SyntheticSpec};
//!
//! let ds = generate(&SyntheticSpec::new(10, 2_000, 0.7, 7)).unwrap();
//! let (cal, test) = io::split(&ds, 0.5, 7).unwrap();
//! let (predictor, sets) = conformalize(&cal, &test, &ScoreSpec::aps(), 0.1, 7).unwrap();
//! assert_eq!(sets.len(), test.n());
//! assert!(!predictor.q_alpha.is_unbounded());
//! ```

pub mod config;
pub mod conformal;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod prob;
pub mod report;
pub mod rng;
pub mod scores;
pub mod synthetic;

pub use config::{RunConfig, TemperatureSetting};
pub use conformal::{calibrate, conformalize, predict_set, ConformalPredictor, PredictionSet, Threshold};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use prob::{apply_temperature, softmax, DataKind, LogitDataset, TemperatureConfig};
pub use scores::{score_aps, score_batch, score_lac, score_raps, LabelsMode, Method, ScoreSpec, UMode};
pub use synthetic::{generate, generate_pair, SyntheticSpec};
