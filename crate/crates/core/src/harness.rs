//! Experiment protocols over stored classifier outputs: a single conformal
//! run, temperature sweeps, calibration under distribution shift, and
//! multi-model comparisons.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TemperatureSetting};
use crate::conformal::{conformalize, PredictionSet, Threshold};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, MetricsReport, RunView, SizeDelta, WorstClassComparison};
use crate::prob::{apply_temperature, DataKind, LogitDataset};
use crate::scores::{Method, ScoreSpec};

/// Flat record of one run: configuration echo plus every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    pub method: Method,
    pub lambda: f64,
    pub kreg: usize,
    pub u_mode: String,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
    pub seed: u64,
    pub n_cal: usize,
    pub n_test: usize,
    /// Calibrated threshold; `None` for the unbounded sentinel.
    pub q_alpha: Option<f64>,
    pub coverage: f64,
    pub avg_set_size: f64,
    pub cov_gap: f64,
    pub mccc: f64,
    pub ece: f64,
    pub accuracy: f64,
    pub empty_set_fraction: f64,
    pub model: String,
}

/// Full result of one conformal run on a test split.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub spec: ScoreSpec,
    pub alpha: f64,
    pub seed: u64,
    pub temperature: Option<f64>,
    pub q_alpha: Threshold,
    pub n_cal: usize,
    pub report: MetricsReport,
    pub sets: Vec<PredictionSet>,
    pub labels: Vec<usize>,
}

impl RunOutcome {
    pub fn record(&self) -> RunRecord {
        self.record_for("")
    }

    /// Record tagged with the model it came from.
    pub fn record_for(&self, model: &str) -> RunRecord {
        let r = &self.report;
        let raps = self.spec.method == Method::Raps;
        RunRecord {
            alpha: self.alpha,
            method: self.spec.method,
            lambda: if raps { self.spec.lambda } else { 0.0 },
            kreg: if raps { self.spec.k_reg } else { 0 },
            u_mode: self.spec.u_mode.to_string(),
            temperature: self.temperature,
            seed: self.seed,
            n_cal: self.n_cal,
            n_test: self.sets.len(),
            q_alpha: match self.q_alpha {
                Threshold::Finite(q) => Some(q),
                Threshold::Unbounded => None,
            },
            coverage: r.coverage,
            avg_set_size: r.avg_set_size,
            cov_gap: r.cov_gap,
            mccc: r.mccc,
            ece: r.ece,
            accuracy: r.accuracy,
            empty_set_fraction: r.empty_set_fraction,
            model: model.to_string(),
        }
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(PredictionSet::size).collect()
    }

    pub fn view(&self) -> RunView<'_> {
        RunView { per_class: &self.report.per_class_coverage, sets: &self.sets, labels: &self.labels }
    }
}

/// Temperature to apply to `ds` under `setting`, or `None` to use it as is.
fn resolve_temperature(kind: DataKind, setting: Option<&TemperatureSetting>) -> Result<Option<f64>> {
    match (kind, setting) {
        (DataKind::Logits, None) => Ok(Some(1.0)),
        (DataKind::Logits, Some(TemperatureSetting::Single(t))) => Ok(Some(*t)),
        (DataKind::Probabilities, None) => Ok(None),
        (DataKind::Probabilities, Some(_)) => Err(Error::InvalidState(
            "temperature scaling requires logits, input holds probabilities".into(),
        )),
        (DataKind::Logits, Some(TemperatureSetting::Grid(_))) => Err(Error::InvalidParameter(
            "a temperature grid is only meaningful for sweeps".into(),
        )),
    }
}

fn to_probabilities(ds: &LogitDataset, t: Option<f64>) -> Result<LogitDataset> {
    match t {
        Some(t) => apply_temperature(ds, t),
        None => Ok(ds.clone()),
    }
}

fn evaluate(cal: &LogitDataset, test: &LogitDataset, cfg: &RunConfig, t: Option<f64>) -> Result<RunOutcome> {
    let cal = to_probabilities(cal, t)?;
    let test = to_probabilities(test, t)?;
    let labels = test.labels()?.to_vec();
    if labels.is_empty() {
        return Err(Error::InvalidInput("test split is empty".into()));
    }
    let (predictor, sets) = conformalize(&cal, &test, &cfg.method, cfg.alpha, cfg.seed)?;
    let report = MetricsReport::compute(
        &sets,
        &labels,
        test.values(),
        test.num_classes(),
        cfg.alpha,
        cfg.ece_bins,
    )?;
    Ok(RunOutcome {
        spec: cfg.method,
        alpha: cfg.alpha,
        seed: cfg.seed,
        temperature: t,
        q_alpha: predictor.q_alpha,
        n_cal: predictor.n_cal,
        report,
        sets,
        labels,
    })
}

/// Split, optionally temperature-scale, calibrate, predict and score.
pub fn run_conformal(ds: &LogitDataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let t = resolve_temperature(ds.kind(), cfg.temperature.as_ref())?;
    let (cal, test) = io::split(ds, cfg.cal_fraction, cfg.seed)?;
    evaluate(&cal, &test, cfg, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub temperature: f64,
    pub outcome: RunOutcome,
}

/// One conformal run per temperature on the configured (or default) grid.
/// All rows share the split and the `u` draws.
pub fn sweep_temperature(ds: &LogitDataset, cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if ds.kind() != DataKind::Logits {
        return Err(Error::InvalidState("temperature sweeps require logits".into()));
    }
    let grid = cfg.sweep_grid();
    let mut base = cfg.clone();
    base.temperature = Some(TemperatureSetting::Grid(grid.clone()));
    base.validate()?;
    let (cal, test) = io::split(ds, cfg.cal_fraction, cfg.seed)?;
    grid.par_iter()
        .map(|&t| {
            evaluate(&cal, &test, cfg, Some(t)).map(|outcome| SweepRow { temperature: t, outcome })
        })
        .collect()
}

/// Calibrate on one dataset, evaluate on another (no splitting).
pub fn shift_eval(cal: &LogitDataset, test: &LogitDataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cal.num_classes() != test.num_classes() {
        return Err(Error::Schema(format!(
            "calibration file has {} classes, test file has {}",
            cal.num_classes(),
            test.num_classes()
        )));
    }
    if cal.kind() != test.kind() {
        return Err(Error::Schema("calibration and test files hold different kinds of values".into()));
    }
    let t = resolve_temperature(cal.kind(), cfg.temperature.as_ref())?;
    evaluate(cal, test, cfg, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset {
    pub name: String,
    pub data: LogitDataset,
}

/// Identifies one `(model, method)` cell of a comparison, written `model/method`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunKey {
    pub model: String,
    pub method: Method,
}

impl FromStr for RunKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (model, method) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::InvalidParameter(format!("run key {s:?} must look like model/method")))?;
        Ok(Self { model: model.to_string(), method: method.parse()? })
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.model, self.method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub model: String,
    pub outcome: RunOutcome,
}

/// Results of every `(model, method)` cell, model-major in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub models: Vec<String>,
    pub methods: Vec<ScoreSpec>,
    pub runs: Vec<ComparisonRun>,
}

impl Comparison {
    pub fn get(&self, key: &RunKey) -> Result<&RunOutcome> {
        self.runs
            .iter()
            .find(|r| r.model == key.model && r.outcome.spec.method == key.method)
            .map(|r| &r.outcome)
            .ok_or_else(|| Error::InvalidParameter(format!("no run named {key}")))
    }

    fn aligned(&self, a: &RunKey, b: &RunKey) -> Result<(&RunOutcome, &RunOutcome)> {
        let (ra, rb) = (self.get(a)?, self.get(b)?);
        if ra.labels != rb.labels {
            return Err(Error::Schema(format!("{a} and {b} were not evaluated on the same test split")));
        }
        Ok((ra, rb))
    }

    /// Worst class of run `a` and run `b`'s coverage and size on it.
    pub fn worst_class(&self, a: &RunKey, b: &RunKey) -> Result<WorstClassComparison> {
        let (ra, rb) = self.aligned(a, b)?;
        metrics::worst_class_comparison(ra.view(), rb.view())
    }

    /// Histogram of per-sample `size(a) - size(b)`.
    pub fn size_delta(&self, a: &RunKey, b: &RunKey) -> Result<SizeDelta> {
        let (ra, rb) = self.aligned(a, b)?;
        metrics::set_size_delta(&ra.sets, &rb.sets)
    }
}

/// Runs every method on every model with a shared configuration.
pub fn compare(models: &[NamedDataset], methods: &[ScoreSpec], cfg: &RunConfig) -> Result<Comparison> {
    if models.is_empty() {
        return Err(Error::InvalidInput("compare needs at least one model".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("compare needs at least one method".into()));
    }
    let cells: Vec<(usize, ScoreSpec)> = (0..models.len())
        .flat_map(|m| methods.iter().map(move |s| (m, *s)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(m, spec)| {
            let cfg = cfg.clone().with_method(spec);
            run_conformal(&models[m].data, &cfg).map(|outcome| ComparisonRun {
                model: models[m].name.clone(),
                outcome,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        models: models.iter().map(|m| m.name.clone()).collect(),
        methods: methods.to_vec(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn synth(seed: u64) -> LogitDataset {
        generate(&SyntheticSpec::new(5, 400, 0.7, seed)).unwrap()
    }

    #[test]
    fn run_is_deterministic() {
        let ds = synth(1);
        let cfg = RunConfig::default().with_seed(3);
        assert_eq!(run_conformal(&ds, &cfg).unwrap(), run_conformal(&ds, &cfg).unwrap());
    }

    #[test]
    fn probabilities_reject_temperature() {
        let ds = synth(1);
        let cfg = RunConfig::default().with_temperature(1.1);
        assert!(matches!(run_conformal(&ds, &cfg), Err(Error::InvalidState(_))));
        assert!(matches!(sweep_temperature(&ds, &RunConfig::default()), Err(Error::InvalidState(_))));
    }

    #[test]
    fn logits_default_to_unit_temperature() {
        let ds = synth(2).to_log_probabilities().unwrap();
        let a = run_conformal(&ds, &RunConfig::default()).unwrap();
        let b = run_conformal(&ds, &RunConfig::default().with_temperature(1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.temperature, Some(1.0));
    }

    #[test]
    fn shift_eval_checks_classes() {
        let a = synth(1);
        let b = generate(&SyntheticSpec::new(4, 100, 0.7, 1)).unwrap();
        assert!(matches!(shift_eval(&a, &b, &RunConfig::default()), Err(Error::Schema(_))));
    }

    #[test]
    fn run_key_parsing() {
        let k: RunKey = "clip-vit/raps".parse().unwrap();
        assert_eq!(k.model, "clip-vit");
        assert_eq!(k.method, Method::Raps);
        assert_eq!(k.to_string(), "clip-vit/raps");
        assert!("nomethod".parse::<RunKey>().is_err());
    }

    #[test]
    fn compare_runs_every_cell() {
        let models = vec![
            NamedDataset { name: "a".into(), data: synth(1) },
            NamedDataset { name: "b".into(), data: synth(2) },
        ];
        let methods: Vec<ScoreSpec> = Method::ALL.iter().map(|&m| ScoreSpec::for_method(m)).collect();
        let cmp = compare(&models, &methods, &RunConfig::default()).unwrap();
        assert_eq!(cmp.runs.len(), 6);
        assert_eq!(cmp.runs[0].model, "a");
        assert_eq!(cmp.runs[3].model, "b");
        let key: RunKey = "a/aps".parse().unwrap();
        let delta = cmp.size_delta(&key, &key).unwrap();
        assert!(delta.histogram.is_empty());
        assert!(cmp.get(&"c/aps".parse().unwrap()).is_err());
    }
}
