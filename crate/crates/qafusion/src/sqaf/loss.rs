//! Margin objective over fused scores, with hard-negative mining.
//!
//! The training signal is the gap between the average fused score of true
//! matches and that of the hardest false matches: easy negatives dominate in
//! number and would dilute the average, so only the top-scored
//! `ceil(alpha * N+)` negatives enter the loss.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Gallery partition of one query into true and false matches, by identity
/// label. Together the two sides cover the gallery exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPartition {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl MatchPartition {
    /// Split by label equality with the query's label.
    pub fn from_labels<L: PartialEq>(gallery_labels: &[L], query_label: &L) -> Self {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (i, label) in gallery_labels.iter().enumerate() {
            if label == query_label {
                positive.push(i);
            } else {
                negative.push(i);
            }
        }
        Self { positive, negative }
    }

    /// Split from a relevant-index set over a gallery of the given size.
    pub fn from_relevant(relevant: &HashSet<usize>, gallery_len: usize) -> Self {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for i in 0..gallery_len {
            if relevant.contains(&i) {
                positive.push(i);
            } else {
                negative.push(i);
            }
        }
        Self { positive, negative }
    }

    pub fn num_positive(&self) -> usize {
        self.positive.len()
    }

    pub fn num_negative(&self) -> usize {
        self.negative.len()
    }

    /// Check the partition covers `0..gallery_len` exactly once and has at
    /// least one member on each side.
    pub fn validate(&self, gallery_len: usize) -> Result<()> {
        if self.positive.is_empty() {
            return Err(Error::NoTrueMatch);
        }
        if self.negative.is_empty() {
            return Err(Error::NoFalseMatch);
        }
        let mut seen = vec![false; gallery_len];
        for &i in self.positive.iter().chain(&self.negative) {
            if i >= gallery_len || seen[i] {
                return Err(Error::DataContract(
                    "match partition must cover the gallery exactly once".into(),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::DataContract(
                "match partition must cover the gallery exactly once".into(),
            ));
        }
        Ok(())
    }
}

/// Number of mined hard negatives: `ceil(alpha * num_positive)`, never zero.
pub fn hard_negative_count(num_positive: usize, alpha: f64) -> usize {
    (alpha * num_positive as f64).ceil().max(1.0) as usize
}

/// Indices of the hard negatives: the top-scored false matches, ties broken
/// by ascending gallery index.
fn mine_hard_negatives(fused: &[f64], partition: &MatchPartition, alpha: f64) -> Vec<usize> {
    let mut negatives = partition.negative.clone();
    negatives.sort_by(|&a, &b| fused[b].partial_cmp(&fused[a]).unwrap().then(a.cmp(&b)));
    let count = hard_negative_count(partition.num_positive(), alpha).min(negatives.len());
    negatives.truncate(count);
    negatives
}

/// Margin loss over one fused score list:
/// `max(mean(hard negatives) + margin - mean(positives), 0)`.
pub fn margin_loss(
    fused: &[f64],
    partition: &MatchPartition,
    margin: f64,
    alpha: f64,
) -> Result<f64> {
    margin_loss_with_grad(fused, partition, margin, alpha).map(|(loss, _)| loss)
}

/// Margin loss plus its gradient w.r.t. each fused score. The gradient is
/// `None` when the hinge is inactive (loss 0).
pub fn margin_loss_with_grad(
    fused: &[f64],
    partition: &MatchPartition,
    margin: f64,
    alpha: f64,
) -> Result<(f64, Option<Vec<f64>>)> {
    if margin < 0.0 {
        return Err(Error::InvalidParameter("margin must be >= 0".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter("alpha must be > 0".into()));
    }
    partition.validate(fused.len())?;
    if let Some(i) = fused.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }

    let hard = mine_hard_negatives(fused, partition, alpha);
    let mean_hard: f64 = hard.iter().map(|&i| fused[i]).sum::<f64>() / hard.len() as f64;
    let mean_pos: f64 =
        partition.positive.iter().map(|&i| fused[i]).sum::<f64>() / partition.num_positive() as f64;

    let raw = mean_hard + margin - mean_pos;
    if raw <= 0.0 {
        return Ok((0.0, None));
    }
    let mut grad = vec![0.0; fused.len()];
    let hn_share = 1.0 / hard.len() as f64;
    for &i in &hard {
        grad[i] += hn_share;
    }
    let pos_share = 1.0 / partition.num_positive() as f64;
    for &i in &partition.positive {
        grad[i] -= pos_share;
    }
    Ok((raw, Some(grad)))
}
