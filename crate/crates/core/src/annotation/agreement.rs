//! Fleiss' kappa for a fixed number of raters per item.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KappaError {
    #[error("need at least one item, two categories and two raters")]
    InvalidShape,
    #[error("row {row} sums to {sum}, expected {raters}")]
    RowSumMismatch { row: usize, sum: u64, raters: u64 },
    #[error("rows have different numbers of categories")]
    RaggedRows,
    /// Every rating falls in one category, so chance agreement is 1 and
    /// kappa is undefined.
    #[error("all ratings fall in a single category; kappa is undefined")]
    DegenerateAgreement,
}

/// Fleiss' kappa over an `N x k` count matrix where `counts[i][j]` is the
/// number of raters who put item `i` in category `j`, and every row sums to
/// `raters`.
pub fn fleiss_kappa(counts: &[Vec<u32>], raters: u32) -> Result<f64, KappaError> {
    let n_items = counts.len();
    let k = counts.first().map_or(0, Vec::len);
    if n_items == 0 || k < 2 || raters < 2 {
        return Err(KappaError::InvalidShape);
    }
    let n = raters as f64;
    let mut category_totals = vec![0u64; k];
    let mut p_bar = 0.0;
    for (row_idx, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(KappaError::RaggedRows);
        }
        let sum: u64 = row.iter().map(|&c| c as u64).sum();
        if sum != raters as u64 {
            return Err(KappaError::RowSumMismatch {
                row: row_idx,
                sum,
                raters: raters as u64,
            });
        }
        let sq: f64 = row.iter().map(|&c| (c as f64) * (c as f64)).sum();
        p_bar += (sq - n) / (n * (n - 1.0));
        for (total, &c) in category_totals.iter_mut().zip(row) {
            *total += c as u64;
        }
    }
    p_bar /= n_items as f64;
    let denom = n_items as f64 * n;
    let p_e: f64 = category_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / denom;
            p * p
        })
        .sum();
    if category_totals.iter().filter(|&&t| t > 0).count() < 2 {
        return Err(KappaError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Builds the count matrix from per-item category labels (each in `0..k`).
pub fn count_matrix(items: &[Vec<usize>], k: usize) -> Vec<Vec<u32>> {
    items
        .iter()
        .map(|labels| {
            let mut row = vec![0u32; k];
            for &l in labels {
                row[l] += 1;
            }
            row
        })
        .collect()
}
