//! Probability-vector primitives: the dataset container, softmax and
//! temperature scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums for datasets declared as probabilities.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Lowest and highest temperature of the default sweep grid.
pub const DEFAULT_T_MIN: f64 = 0.85;
pub const DEFAULT_T_MAX: f64 = 2.0;
/// Number of points in the default sweep grid.
pub const DEFAULT_T_POINTS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Logits,
    Probabilities,
}

/// Dense `n x K` matrix of classifier outputs with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDataset {
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
    n: usize,
    k: usize,
    kind: DataKind,
}

impl LogitDataset {
    /// Builds a dataset from row-major values, validating every invariant.
    pub fn new(
        values: Vec<f64>,
        labels: Option<Vec<usize>>,
        n: usize,
        k: usize,
        kind: DataKind,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("class count must be at least 1".into()));
        }
        if values.len() != n * k {
            return Err(Error::Schema(format!(
                "expected {} values for {n}x{k}, got {}",
                n * k,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / k,
                pos % k
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Schema(format!("{} labels for {n} rows", labels.len())));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
                return Err(Error::Validation(format!("label {bad} outside [0, {k})")));
            }
        }
        if kind == DataKind::Probabilities {
            for (i, row) in values.chunks_exact(k).enumerate() {
                check_simplex(row, SIMPLEX_TOLERANCE)
                    .map_err(|e| Error::Validation(format!("row {i}: {e}")))?;
            }
        }
        Ok(Self { values, labels, n, k, kind })
    }

    /// Builds a dataset from a list of rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>, kind: DataKind) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Schema("rows have differing lengths".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(values, labels, n, k, kind)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }

    pub fn labels_opt(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a validation error for an unlabeled dataset.
    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Validation("dataset carries no labels".into()))
    }

    /// Per-row argmax, ties going to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Top-1 accuracy against the stored labels.
    pub fn accuracy(&self) -> Result<f64> {
        let labels = self.labels()?;
        if self.n == 0 {
            return Err(Error::InvalidInput("accuracy of an empty dataset".into()));
        }
        let hits = self.rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
        Ok(hits as f64 / self.n as f64)
    }

    /// Subset of rows in the given order.
    pub fn select(&self, indices: &[usize]) -> LogitDataset {
        let mut values = Vec::with_capacity(indices.len() * self.k);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        LogitDataset { values, labels, n: indices.len(), k: self.k, kind: self.kind }
    }

    /// Reinterprets probabilities as log-probabilities, i.e. logits whose
    /// softmax at `T = 1` recovers the rows. Zero entries are floored.
    pub fn to_log_probabilities(&self) -> Result<LogitDataset> {
        if self.kind != DataKind::Probabilities {
            return Err(Error::InvalidState("dataset already holds logits".into()));
        }
        let values = self.values.iter().map(|&p| p.max(1e-300).ln()).collect();
        Ok(LogitDataset {
            values,
            labels: self.labels.clone(),
            n: self.n,
            k: self.k,
            kind: DataKind::Logits,
        })
    }
}

fn check_simplex(row: &[f64], tol: f64) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|&&v| v < 0.0) {
        return Err(format!("negative probability {v}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// Temperature-scaled softmax, stabilized by subtracting the row max.
pub fn softmax(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("logits must be finite".into()));
    }
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty logit vector".into()));
    }
    Ok(softmax_unchecked(logits, t))
}

fn softmax_unchecked(logits: &[f64], t: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| ((x - max) / t).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Converts a logits dataset into probabilities at temperature `t`.
pub fn apply_temperature(ds: &LogitDataset, t: f64) -> Result<LogitDataset> {
    if ds.kind != DataKind::Logits {
        return Err(Error::InvalidState(
            "temperature scaling applies to logits, dataset holds probabilities".into(),
        ));
    }
    check_temperature(t)?;
    let mut values = Vec::with_capacity(ds.values.len());
    for row in ds.rows() {
        values.extend(softmax_unchecked(row, t));
    }
    Ok(LogitDataset {
        values,
        labels: ds.labels.clone(),
        n: ds.n,
        k: ds.k,
        kind: DataKind::Probabilities,
    })
}

/// A single temperature plus the grid used for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureConfig {
    pub t: f64,
    pub grid: Vec<f64>,
}

impl TemperatureConfig {
    pub fn new(t: f64, grid: Vec<f64>) -> Result<Self> {
        check_temperature(t)?;
        validate_grid(&grid)?;
        Ok(Self { t, grid })
    }
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self { t: 1.0, grid: default_temperature_grid() }
    }
}

/// Evenly spaced grid of `count` temperatures over `[lo, hi]`.
pub fn temperature_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    check_temperature(lo)?;
    check_temperature(hi)?;
    let grid: Vec<f64> = match count {
        0 => return Err(Error::InvalidParameter("grid needs at least one point".into())),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
                .collect()
        }
    };
    validate_grid(&grid)?;
    Ok(grid)
}

/// The 14-point sweep over [0.85, 2].
pub fn default_temperature_grid() -> Vec<f64> {
    temperature_grid(DEFAULT_T_MIN, DEFAULT_T_MAX, DEFAULT_T_POINTS).expect("static grid is valid")
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    for &t in grid {
        check_temperature(t)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("temperature grid must be strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&softmax(&[0.0, 0.0, 0.0], 1.0).unwrap(), &[third; 3], 1e-15));
        assert!(close(&softmax(&[2f64.ln(), 0.0], 1.0).unwrap(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        // e/(e+1) evaluated with mpmath at 30 digits.
        assert!(close(&softmax(&[2.0, 0.0], 2.0).unwrap(), &[0.731058578630005, 0.268941421369995], 1e-5));
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(matches!(softmax(&[1.0, f64::NAN], 1.0), Err(Error::InvalidInput(_))));
        assert!(matches!(softmax(&[1.0, f64::INFINITY], 1.0), Err(Error::InvalidInput(_))));
        assert!(matches!(softmax(&[1.0, 0.0], 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(softmax(&[1.0, 0.0], -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn softmax_handles_huge_logits() {
        let p = softmax(&[1000.0, 999.0], 1.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1]);
    }

    #[test]
    fn temperature_examples() {
        let ds = LogitDataset::from_rows(&[vec![2.0, 0.0]], Some(vec![0]), DataKind::Logits).unwrap();
        let p = apply_temperature(&ds, 1.0).unwrap();
        assert_eq!(p.kind(), DataKind::Probabilities);
        // e^2/(e^2+1) evaluated with mpmath at 30 digits.
        assert!(close(p.row(0), &[0.880797077977882, 0.119202922022118], 1e-5));
        assert_eq!(p.labels_opt(), Some(&[0usize][..]));

        let tie = LogitDataset::from_rows(&[vec![5.0, 5.0]], None, DataKind::Logits).unwrap();
        for t in [0.5, 1.0, 3.0] {
            assert_eq!(apply_temperature(&tie, t).unwrap().row(0), &[0.5, 0.5]);
        }
    }

    #[test]
    fn temperature_rejects_probabilities() {
        let ds = LogitDataset::from_rows(&[vec![0.5, 0.5]], None, DataKind::Probabilities).unwrap();
        assert!(matches!(apply_temperature(&ds, 1.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            LogitDataset::from_rows(&[vec![0.5, 0.6]], None, DataKind::Probabilities),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            LogitDataset::from_rows(&[vec![1.5, -0.5]], None, DataKind::Probabilities),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            LogitDataset::from_rows(&[vec![0.5, 0.5]], Some(vec![2]), DataKind::Probabilities),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            LogitDataset::from_rows(&[vec![f64::NAN, 0.5]], None, DataKind::Logits),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            LogitDataset::new(vec![0.0; 3], None, 1, 2, DataKind::Logits),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_temperature_grid();
        assert_eq!(g.len(), 14);
        assert_eq!(g[0], 0.85);
        assert_eq!(g[13], 2.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_must_increase() {
        assert!(TemperatureConfig::new(1.0, vec![1.0, 1.0]).is_err());
        assert!(TemperatureConfig::new(0.0, vec![1.0]).is_err());
        assert!(TemperatureConfig::new(1.0, vec![0.5, 1.0, 2.0]).is_ok());
    }
}
