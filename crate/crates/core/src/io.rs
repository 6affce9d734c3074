//! The CPL1 binary container for logits/probabilities and labels, plus
//! seeded calibration/test splitting.
//!
//! Layout, all little-endian:
//!
//! | offset | size      | field                                        |
//! |--------|-----------|----------------------------------------------|
//! | 0      | 4         | magic `b"CPL1"`                              |
//! | 4      | 4         | version, `u32` = 1                           |
//! | 8      | 8         | `n`, `u64`                                   |
//! | 16     | 4         | `K`, `u32`                                   |
//! | 20     | 1         | flags: bit0 labels present, bit1 probabilities |
//! | 21     | 4·n·K     | values, `f32`, row-major                     |
//! | …      | 4·n       | labels, `i32` (only if bit0)                 |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::prob::{DataKind, LogitDataset};
use crate::rng;

pub const MAGIC: [u8; 4] = *b"CPL1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

pub const FLAG_LABELS: u8 = 0b01;
pub const FLAG_PROBABILITIES: u8 = 0b10;

/// Serializes a dataset to CPL1 bytes. Values are narrowed to `f32`.
pub fn encode(ds: &LogitDataset) -> Result<Vec<u8>> {
    let n = ds.n();
    let k = ds.num_classes();
    let k32 = u32::try_from(k).map_err(|_| Error::Validation(format!("{k} classes exceed u32")))?;
    let mut flags = 0u8;
    if ds.labels_opt().is_some() {
        flags |= FLAG_LABELS;
    }
    if ds.kind() == DataKind::Probabilities {
        flags |= FLAG_PROBABILITIES;
    }
    let label_bytes = if ds.labels_opt().is_some() { 4 * n } else { 0 };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * k + label_bytes);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&k32.to_le_bytes());
    out.push(flags);
    for &v in ds.values() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::Validation(format!("value {v} does not fit in f32")));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    if let Some(labels) = ds.labels_opt() {
        for &y in labels {
            let y = i32::try_from(y).map_err(|_| Error::Validation(format!("label {y} exceeds i32")))?;
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(out)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

/// Parses and validates CPL1 bytes.
pub fn decode(bytes: &[u8]) -> Result<LogitDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = le_u32(&bytes[4..8]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let k = le_u32(&bytes[16..20]) as usize;
    let flags = bytes[20];
    if flags & !(FLAG_LABELS | FLAG_PROBABILITIES) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }
    if k == 0 {
        return Err(Error::Format("class count is zero".into()));
    }
    let has_labels = flags & FLAG_LABELS != 0;
    let n = usize::try_from(n).map_err(|_| Error::Format(format!("sample count {n} too large")))?;
    let cells = n
        .checked_mul(k)
        .ok_or_else(|| Error::Format(format!("{n}x{k} overflows")))?;
    let expected = cells
        .checked_mul(4)
        .and_then(|v| v.checked_add(if has_labels { n.checked_mul(4)? } else { 0 }))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("{n}x{k} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Corruption(format!(
            "expected {expected} bytes for {n}x{k}, found {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + 4 * cells];
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let labels = if has_labels {
        let raw = &bytes[HEADER_LEN + 4 * cells..];
        let labels = raw
            .chunks_exact(4)
            .map(|c| {
                let y = i32::from_le_bytes(c.try_into().expect("4 bytes"));
                usize::try_from(y)
                    .ok()
                    .filter(|&y| y < k)
                    .ok_or_else(|| Error::Validation(format!("label {y} outside [0, {k})")))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(labels)
    } else {
        None
    };
    let kind = if flags & FLAG_PROBABILITIES != 0 { DataKind::Probabilities } else { DataKind::Logits };
    LogitDataset::new(values, labels, n, k, kind)
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<LogitDataset> {
    decode(&fs::read(path)?)
}

pub fn write_logits(ds: &LogitDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(ds)?)?;
    Ok(())
}

/// Seeded calibration/test split.
///
/// Rows are shuffled with Fisher–Yates driven by xoshiro256** seeded from
/// `splitmix64(seed)`; the first `floor(n * cal_fraction)` shuffled rows form
/// the calibration set, the rest the test set, both in shuffled order.
pub fn split(ds: &LogitDataset, cal_fraction: f64, seed: u64) -> Result<(LogitDataset, LogitDataset)> {
    let (cal_idx, test_idx) = split_indices(ds.n(), cal_fraction, seed)?;
    Ok((ds.select(&cal_idx), ds.select(&test_idx)))
}

/// Index form of [`split`].
pub fn split_indices(n: usize, cal_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(cal_fraction > 0.0 && cal_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "calibration fraction must lie in (0, 1], got {cal_fraction}"
        )));
    }
    let perm = rng::permutation(n, seed);
    if cal_fraction == 1.0 {
        return Ok((perm, Vec::new()));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split {n} samples")));
    }
    let n_cal = (n as f64 * cal_fraction).floor() as usize;
    if n_cal == 0 {
        return Err(Error::InvalidInput(format!(
            "fraction {cal_fraction} of {n} samples leaves no calibration data"
        )));
    }
    let test = perm[n_cal..].to_vec();
    let mut cal = perm;
    cal.truncate(n_cal);
    Ok((cal, test))
}
