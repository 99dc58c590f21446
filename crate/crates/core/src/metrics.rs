//! Evaluation metrics: MSE, Pearson LCC, and Spearman SRCC.
//!
//! Correlations on degenerate inputs (fewer than two points, or a constant
//! vector) come back as `None` rather than NaN so constant-prediction models
//! stay diagnosable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The (MSE, LCC, SRCC) triple reported for every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mse: f64,
    pub lcc: Option<f64>,
    pub srcc: Option<f64>,
    pub n: usize,
}

impl MetricTriple {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<MetricTriple> {
        Ok(MetricTriple {
            mse: mse(pred, truth)?,
            lcc: pearson(pred, truth)?,
            srcc: spearman(pred, truth)?,
            n: pred.len(),
        })
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::MetricLengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyMetricInput);
    }
    Ok(())
}

/// Mean squared error between predictions and ground truth.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Pearson linear correlation; `None` when either vector is constant or has
/// fewer than two entries.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_lengths(x, y)?;
    let n = x.len();
    if n < 2 {
        return Ok(None);
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(None);
    }
    // Guard against rounding pushing a perfect correlation past +/-1.
    Ok(Some((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0)))
}

/// Fractional (average) ranks, smallest value ranked 1; ties share the mean
/// of the rank positions they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold a tie; their 1-based ranks average to:
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Ok(None);
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}
