//! Implementation-independent references shared by the oracle and acceptance targets.

#![allow(dead_code)]

use cpbench::conformal::Threshold;

/// `alpha = num / den` exactly; rank `ceil((n+1)(den-num)/den)` in integers.
pub fn oracle_threshold(scores: &[f64], num: u64, den: u64) -> Threshold {
    let n = scores.len() as u64;
    let rank = ((n + 1) * (den - num)).div_ceil(den);
    if rank > n {
        return Threshold::Unbounded;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Threshold::Finite(sorted[rank as usize - 1])
}

/// Bins by explicit edges `[b/B, (b+1)/B)`, last bin closed.
pub fn oracle_ece(rows: &[Vec<f64>], labels: &[usize], bins: usize) -> f64 {
    let n = rows.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let mut count = 0.0;
        let mut correct = 0.0;
        let mut conf = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let mut pred = 0;
            for c in 1..row.len() {
                if row[c] > row[pred] {
                    pred = c;
                }
            }
            let p = row[pred];
            let inside = if b + 1 == bins { p >= lo } else { p >= lo && p < hi };
            if inside {
                count += 1.0;
                conf += p;
                if pred == y {
                    correct += 1.0;
                }
            }
        }
        if count > 0.0 {
            total += count / n * (correct / count - conf / count).abs();
        }
    }
    total
}
