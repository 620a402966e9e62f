//! Score-curve primitives: descending sort, min-max normalization, area
//! under the curve, and rank-space down-sampling.
//!
//! A "score curve" is one query's gallery scores for a single feature. Once
//! sorted in descending order, its shape tells how discriminative the feature
//! is for that query: a sharp L-shape means a few strong matches stand out
//! from the tail, a flat curve means the feature cannot separate anything.
//! All downstream weighting is built on these four primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One query's scores for one feature, sorted in non-increasing order.
///
/// `origin` maps sorted position -> original gallery index, so the sorted
/// view doubles as the feature's ranking of the gallery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedCurve {
    pub values: Vec<f64>,
    pub origin: Vec<usize>,
}

impl SortedCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reconstruct the unsorted row this curve was built from.
    pub fn to_original_row(&self) -> Vec<f64> {
        let mut row = vec![0.0; self.values.len()];
        for (pos, &gallery_idx) in self.origin.iter().enumerate() {
            row[gallery_idx] = self.values[pos];
        }
        row
    }
}

/// A curve mapped into [0, 1] by min-max normalization.
///
/// Constant input cannot be normalized; it comes back as all zeros with
/// `degenerate` set so callers can fall back to neutral weighting instead of
/// failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCurve {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

fn check_finite(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::EmptyCurve);
    }
    if let Some(index) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Sort a score row in descending order, ties broken by ascending original
/// index so the result is deterministic across runs and platforms.
pub fn sort_descending(row: &[f64]) -> Result<SortedCurve> {
    check_finite(row)?;
    let mut origin: Vec<usize> = (0..row.len()).collect();
    origin.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    let values = origin.iter().map(|&i| row[i]).collect();
    Ok(SortedCurve { values, origin })
}

/// Min-max normalize a curve to [0, 1]: `(x - min) / (max - min)`.
///
/// A constant curve yields all zeros with the degenerate flag set.
pub fn min_max_normalize(curve: &[f64]) -> Result<NormalizedCurve> {
    check_finite(curve)?;
    let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(NormalizedCurve {
            values: vec![0.0; curve.len()],
            degenerate: true,
        });
    }
    let range = max - min;
    Ok(NormalizedCurve {
        values: curve.iter().map(|v| (v - min) / range).collect(),
        degenerate: false,
    })
}

/// Discrete area under a curve: the sum of its values at unit rank spacing.
///
/// On normalized curves this is the feature-effectiveness indicator: the
/// ideal single-match curve `[1, 0, ..., 0]` has area 1, the useless flat
/// curve `[1, ..., 1, 0]` has area `len - 1`.
pub fn area_under(curve: &[f64]) -> f64 {
    curve.iter().sum()
}

/// Down-sample a curve to `target_len` points at evenly spaced fractional
/// ranks, always keeping the first and last rank.
///
/// Index selection (`round(j * (n-1) / (target-1))`) preserves the elbow of
/// an L-shaped curve better than bin averaging. Curves already at or below
/// the target length are returned unchanged.
pub fn downsample(curve: &[f64], target_len: usize) -> Result<Vec<f64>> {
    if target_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "downsample target length must be >= 2, got {target_len}"
        )));
    }
    let n = curve.len();
    if n <= target_len {
        return Ok(curve.to_vec());
    }
    let step = (n - 1) as f64 / (target_len - 1) as f64;
    Ok((0..target_len)
        .map(|j| curve[(j as f64 * step).round() as usize])
        .collect())
}
