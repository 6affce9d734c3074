//! Python bindings: `import cpbench_py`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use cpbench::harness;
use cpbench::io;
use cpbench::metrics;
use cpbench::{
    DataKind, Error, LogitDataset, PredictionSet, RunConfig, ScoreSpec, SyntheticSpec, TemperatureSetting, Threshold,
    UMode,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e @ Error::Index { .. } => PyIndexError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for cpbench::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse_kind(kind: &str) -> PyResult<DataKind> {
    match kind {
        "logits" => Ok(DataKind::Logits),
        "probabilities" | "probs" => Ok(DataKind::Probabilities),
        other => Err(PyValueError::new_err(format!("unknown kind {other:?}"))),
    }
}

fn kind_name(kind: DataKind) -> &'static str {
    match kind {
        DataKind::Logits => "logits",
        DataKind::Probabilities => "probabilities",
    }
}

fn spec_from(method: &str, lam: f64, k_reg: usize, u_mode: &str) -> PyResult<ScoreSpec> {
    let method = method.parse().py()?;
    let u_mode: UMode = u_mode.parse().py()?;
    let spec = match method {
        cpbench::Method::Raps => ScoreSpec::raps(lam, k_reg),
        m => ScoreSpec::for_method(m),
    }
    .with_u_mode(u_mode);
    spec.validate().py()?;
    Ok(spec)
}

fn threshold(q: f64) -> Threshold {
    if q.is_infinite() && q > 0.0 {
        Threshold::Unbounded
    } else {
        Threshold::Finite(q)
    }
}

fn to_sets(sets: Vec<Vec<usize>>) -> Vec<PredictionSet> {
    sets.into_iter().map(PredictionSet::new).collect()
}

fn from_sets(sets: &[PredictionSet]) -> Vec<Vec<usize>> {
    sets.iter().map(|s| s.members().to_vec()).collect()
}

/// Classifier outputs with optional labels.
#[pyclass(name = "Dataset", module = "cpbench_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: LogitDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, labels=None, kind="logits"))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>, kind: &str) -> PyResult<Self> {
        let inner = LogitDataset::from_rows(&rows, labels, parse_kind(kind)?).py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: io::read_logits(path).py()? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_logits(&self.inner, path).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_name(self.inner.kind())
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels_opt().map(<[usize]>::to_vec)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn predictions(&self) -> Vec<usize> {
        self.inner.predictions()
    }

    fn accuracy(&self) -> PyResult<f64> {
        self.inner.accuracy().py()
    }

    /// Softmax of the logits at temperature `t`.
    fn with_temperature(&self, t: f64) -> PyResult<Self> {
        Ok(Self { inner: cpbench::apply_temperature(&self.inner, t).py()? })
    }

    fn to_log_probabilities(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.to_log_probabilities().py()? })
    }

    #[pyo3(signature = (cal_fraction=0.5, seed=0))]
    fn split(&self, cal_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (cal, test) = io::split(&self.inner, cal_fraction, seed).py()?;
        Ok((Self { inner: cal }, Self { inner: test }))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, num_classes={}, kind={:?}, labels={})",
            self.inner.n(),
            self.inner.num_classes(),
            kind_name(self.inner.kind()),
            self.inner.labels_opt().is_some()
        )
    }
}

/// A calibrated split conformal predictor.
#[pyclass(name = "ConformalPredictor", module = "cpbench_py", frozen)]
struct PyPredictor {
    inner: cpbench::ConformalPredictor,
}

#[pymethods]
impl PyPredictor {
    #[staticmethod]
    #[pyo3(signature = (cal, method="raps", alpha=0.1, seed=0, lam=0.1, k_reg=2, u_mode="uniform"))]
    fn fit(cal: &PyDataset, method: &str, alpha: f64, seed: u64, lam: f64, k_reg: usize, u_mode: &str) -> PyResult<Self> {
        let spec = spec_from(method, lam, k_reg, u_mode)?;
        let (cal_seed, _) = cpbench::conformal::u_seeds(seed);
        let inner = cpbench::ConformalPredictor::fit(spec, &cal.inner, alpha, cal_seed).py()?;
        Ok(Self { inner })
    }

    /// Threshold; `inf` when the calibration set is too small for `alpha`.
    #[getter]
    fn q_alpha(&self) -> f64 {
        self.inner.q_alpha.value()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn n_cal(&self) -> usize {
        self.inner.n_cal
    }

    #[pyo3(signature = (p, u=1.0))]
    fn predict(&self, p: Vec<f64>, u: f64) -> PyResult<Vec<usize>> {
        Ok(cpbench::predict_set(&p, &self.inner, u).py()?.members().to_vec())
    }

    #[pyo3(signature = (test, seed=0))]
    fn predict_dataset(&self, test: &PyDataset, seed: u64) -> PyResult<Vec<Vec<usize>>> {
        let (_, test_seed) = cpbench::conformal::u_seeds(seed);
        Ok(from_sets(&self.inner.predict_dataset(&test.inner, test_seed).py()?))
    }
}

#[pyfunction]
#[pyo3(signature = (logits, t=1.0))]
fn softmax(logits: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    cpbench::softmax(&logits, t).py()
}

#[pyfunction]
fn score_lac(p: Vec<f64>, y: usize) -> PyResult<f64> {
    cpbench::score_lac(&p, y).py()
}

#[pyfunction]
fn score_aps(p: Vec<f64>, y: usize, u: f64) -> PyResult<f64> {
    cpbench::score_aps(&p, y, u).py()
}

#[pyfunction]
#[pyo3(signature = (p, y, u, lam=0.1, k_reg=2))]
fn score_raps(p: Vec<f64>, y: usize, u: f64, lam: f64, k_reg: usize) -> PyResult<f64> {
    cpbench::score_raps(&p, y, u, lam, k_reg).py()
}

/// Conformal threshold of calibration scores; `inf` for the unbounded case.
#[pyfunction]
fn calibrate(scores: Vec<f64>, alpha: f64) -> PyResult<f64> {
    Ok(cpbench::calibrate(&scores, alpha).py()?.value())
}

/// Labels of `p` whose score under `method` is at most `q`.
#[pyfunction]
#[pyo3(signature = (p, q, method="raps", u=1.0, lam=0.1, k_reg=2))]
fn predict_set(p: Vec<f64>, q: f64, method: &str, u: f64, lam: f64, k_reg: usize) -> PyResult<Vec<usize>> {
    let spec = spec_from(method, lam, k_reg, "uniform")?;
    LogitDataset::new(p.clone(), None, 1, p.len(), DataKind::Probabilities).py()?;
    let scores = spec.row_scores(&p, u);
    Ok(PredictionSet::from_scores(&scores, threshold(q)).members().to_vec())
}

/// Calibrate on `cal`, predict on `test`. Returns `(q_alpha, sets)`.
#[pyfunction]
#[pyo3(signature = (cal, test, method="raps", alpha=0.1, seed=0, lam=0.1, k_reg=2, u_mode="uniform"))]
#[allow(clippy::too_many_arguments)]
fn conformalize(
    cal: &PyDataset,
    test: &PyDataset,
    method: &str,
    alpha: f64,
    seed: u64,
    lam: f64,
    k_reg: usize,
    u_mode: &str,
) -> PyResult<(f64, Vec<Vec<usize>>)> {
    let spec = spec_from(method, lam, k_reg, u_mode)?;
    let (predictor, sets) = cpbench::conformalize(&cal.inner, &test.inner, &spec, alpha, seed).py()?;
    Ok((predictor.q_alpha.value(), from_sets(&sets)))
}

#[pyfunction]
fn avg_set_size(sets: Vec<Vec<usize>>) -> PyResult<f64> {
    metrics::avg_set_size(&to_sets(sets)).py()
}

#[pyfunction]
fn coverage(sets: Vec<Vec<usize>>, labels: Vec<usize>) -> PyResult<f64> {
    metrics::empirical_coverage(&to_sets(sets), &labels).py()
}

#[pyfunction]
fn class_conditional_coverage(sets: Vec<Vec<usize>>, labels: Vec<usize>, k: usize) -> PyResult<BTreeMap<usize, f64>> {
    metrics::class_conditional_coverage(&to_sets(sets), &labels, k).py()
}

#[pyfunction]
fn cov_gap(per_class: BTreeMap<usize, f64>, alpha: f64) -> PyResult<f64> {
    metrics::cov_gap(&per_class, alpha).py()
}

#[pyfunction]
fn mccc(per_class: BTreeMap<usize, f64>) -> PyResult<f64> {
    metrics::mccc(&per_class).py()
}

#[pyfunction]
#[pyo3(signature = (probs, labels, n_bins=15))]
fn ece(probs: Vec<Vec<f64>>, labels: Vec<usize>, n_bins: usize) -> PyResult<f64> {
    let k = probs.first().map_or(0, Vec::len);
    if probs.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let flat: Vec<f64> = probs.into_iter().flatten().collect();
    metrics::ece(&flat, k, &labels, n_bins).py()
}

#[pyfunction]
#[pyo3(signature = (k, n, accuracy, seed=0, sharpness=1.0))]
fn generate(k: usize, n: usize, accuracy: f64, seed: u64, sharpness: f64) -> PyResult<PyDataset> {
    let spec = SyntheticSpec::new(k, n, accuracy, seed).with_sharpness(sharpness);
    Ok(PyDataset { inner: cpbench::generate(&spec).py()? })
}

/// Calibration data and a shifted test set.
#[pyfunction]
#[pyo3(signature = (k, n, accuracy, accuracy_drop, noise_scale=0.0, seed=0, sharpness=1.0))]
fn generate_pair(
    k: usize,
    n: usize,
    accuracy: f64,
    accuracy_drop: f64,
    noise_scale: f64,
    seed: u64,
    sharpness: f64,
) -> PyResult<(PyDataset, PyDataset)> {
    let spec = SyntheticSpec::new(k, n, accuracy, seed)
        .with_sharpness(sharpness)
        .with_shift(accuracy_drop, noise_scale);
    let (cal, test) = cpbench::generate_pair(&spec).py()?;
    Ok((PyDataset { inner: cal }, PyDataset { inner: test }))
}

/// Split, calibrate, predict and score. Returns the flat report as a dict.
#[pyfunction]
#[pyo3(signature = (ds, method="raps", alpha=0.1, seed=0, cal_fraction=0.5, temperature=None, lam=0.1, k_reg=2, u_mode="uniform"))]
#[allow(clippy::too_many_arguments)]
fn run_conformal<'py>(
    py: Python<'py>,
    ds: &PyDataset,
    method: &str,
    alpha: f64,
    seed: u64,
    cal_fraction: f64,
    temperature: Option<f64>,
    lam: f64,
    k_reg: usize,
    u_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = RunConfig::default()
        .with_method(spec_from(method, lam, k_reg, u_mode)?)
        .with_alpha(alpha)
        .with_seed(seed);
    cfg.cal_fraction = cal_fraction;
    cfg.temperature = temperature.map(TemperatureSetting::Single);
    let outcome = harness::run_conformal(&ds.inner, &cfg).py()?;
    let text = serde_json::to_string(&outcome.record()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

#[pymodule]
fn cpbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(score_lac, m)?)?;
    m.add_function(wrap_pyfunction!(score_aps, m)?)?;
    m.add_function(wrap_pyfunction!(score_raps, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(predict_set, m)?)?;
    m.add_function(wrap_pyfunction!(conformalize, m)?)?;
    m.add_function(wrap_pyfunction!(avg_set_size, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(class_conditional_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(cov_gap, m)?)?;
    m.add_function(wrap_pyfunction!(mccc, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(run_conformal, m)?)?;
    Ok(())
}
