//! Unsupervised query-adaptive fusion: estimate each feature's effectiveness
//! for a query from the area under its reference-normalized score curve,
//! weight features by inverse area, and fuse the raw score lists under the
//! sum or product rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curve::{area_under, downsample, sort_descending, SortedCurve};
use crate::error::{Error, Result};
use crate::reference::{match_reference, subtract_and_normalize, MatchConfig, ReferenceCodebook};

/// Per-query fusion weights: non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("weight vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest weight (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.0.iter().enumerate() {
            if *w > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

/// How per-feature scores are merged into one score per gallery item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    /// Weighted arithmetic combination. Assumes commensurate score scales.
    Sum,
    /// Weighted geometric combination. Robust to differing score scales.
    Product,
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sum => write!(f, "sum"),
            Self::Product => write!(f, "product"),
        }
    }
}

impl FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "product" => Ok(Self::Product),
            other => Err(Error::InvalidParameter(format!(
                "unknown fusion rule {other:?} (expected sum or product)"
            ))),
        }
    }
}

/// Configuration of the unsupervised fusion pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QafConfig {
    pub match_cfg: MatchConfig,
    pub rule: FusionRule,
    /// Floor for curve areas; keeps degenerate curves from producing
    /// infinite inverse-area weights.
    pub epsilon_area: f64,
    /// Floor for scores entering the product rule, which needs positivity.
    pub epsilon_score: f64,
    /// Curves and references longer than this are down-sampled before
    /// effectiveness estimation.
    pub curve_len: usize,
    /// Number of features fused (K).
    pub num_features: usize,
}

impl QafConfig {
    pub fn for_features(num_features: usize) -> Self {
        Self {
            match_cfg: MatchConfig::default(),
            rule: FusionRule::Product,
            epsilon_area: 1e-6,
            epsilon_score: 1e-6,
            curve_len: 1000,
            num_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features < 1 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        if self.epsilon_area <= 0.0 || self.epsilon_score <= 0.0 {
            return Err(Error::InvalidParameter("epsilons must be positive".into()));
        }
        if self.curve_len < 2 {
            return Err(Error::InvalidParameter("curve_len must be >= 2".into()));
        }
        MatchConfig::validated(self.match_cfg).map(|_| ())
    }
}

/// Inverse-area weights: `w_i = (1/A_i) / sum_k (1/A_k)`, with every area
/// floored at `epsilon_area` first. An all-degenerate query therefore gets
/// uniform weights instead of an error.
pub fn compute_weights(areas: &[f64], epsilon_area: f64) -> Result<WeightVector> {
    if areas.is_empty() {
        return Err(Error::InvalidParameter("no areas given".into()));
    }
    if epsilon_area <= 0.0 {
        return Err(Error::InvalidParameter(
            "epsilon_area must be positive".into(),
        ));
    }
    if let Some(i) = areas.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let inverses: Vec<f64> = areas.iter().map(|a| 1.0 / a.max(epsilon_area)).collect();
    let total: f64 = inverses.iter().sum();
    WeightVector::new(inverses.iter().map(|inv| inv / total).collect())
}

fn check_fusion_inputs<S: AsRef<[f64]>>(scores: &[S], weights: &WeightVector) -> Result<usize> {
    if scores.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: weights.len(),
        });
    }
    let n = scores[0].as_ref().len();
    for row in scores {
        if row.as_ref().len() != n {
            return Err(Error::LengthMismatch {
                left: row.as_ref().len(),
                right: n,
            });
        }
    }
    Ok(n)
}

/// Sum rule: elementwise weighted sum of the per-feature score lists.
pub fn fuse_sum<S: AsRef<[f64]>>(scores: &[S], weights: &WeightVector) -> Result<Vec<f64>> {
    let n = check_fusion_inputs(scores, weights)?;
    let mut fused = vec![0.0; n];
    for (row, &w) in scores.iter().zip(weights.as_slice()) {
        for (f, &s) in fused.iter_mut().zip(row.as_ref()) {
            *f += w * s;
        }
    }
    Ok(fused)
}

/// Product rule: elementwise weighted geometric combination, computed in log
/// space as `exp(sum_i w_i ln s_i)`. Scores are floored at `epsilon_score`
/// to keep the logarithm defined.
pub fn fuse_product<S: AsRef<[f64]>>(
    scores: &[S],
    weights: &WeightVector,
    epsilon_score: f64,
) -> Result<Vec<f64>> {
    if epsilon_score <= 0.0 {
        return Err(Error::InvalidParameter(
            "epsilon_score must be positive".into(),
        ));
    }
    let n = check_fusion_inputs(scores, weights)?;
    let mut log_fused = vec![0.0; n];
    for (row, &w) in scores.iter().zip(weights.as_slice()) {
        for (f, &s) in log_fused.iter_mut().zip(row.as_ref()) {
            *f += w * s.max(epsilon_score).ln();
        }
    }
    Ok(log_fused.into_iter().map(f64::exp).collect())
}

/// Fuse under the configured rule.
pub fn fuse<S: AsRef<[f64]>>(
    scores: &[S],
    weights: &WeightVector,
    rule: FusionRule,
    epsilon_score: f64,
) -> Result<Vec<f64>> {
    match rule {
        FusionRule::Sum => fuse_sum(scores, weights),
        FusionRule::Product => fuse_product(scores, weights, epsilon_score),
    }
}

/// Result of fusing one query.
#[derive(Debug, Clone)]
pub struct QafOutcome {
    pub weights: WeightVector,
    /// Per-feature areas under the reference-normalized curves (audit).
    pub areas: Vec<f64>,
    /// Fused score per gallery item, aligned with the input rows.
    pub fused: Vec<f64>,
    /// Gallery indices in descending fused-score order.
    pub ranking: Vec<usize>,
}

/// A prepared fusion pipeline: codebooks down-sampled once to the effective
/// curve length for a fixed gallery size, reusable across queries.
///
/// Queries are independent; a prepared pipeline may be shared across threads.
pub struct QafPipeline {
    cfg: QafConfig,
    effective_len: usize,
    codebooks: Vec<ReferenceCodebook>,
}

impl QafPipeline {
    pub fn new(
        codebooks: &[ReferenceCodebook],
        gallery_len: usize,
        cfg: &QafConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if codebooks.len() != cfg.num_features {
            return Err(Error::LengthMismatch {
                left: codebooks.len(),
                right: cfg.num_features,
            });
        }
        let cb_len = codebooks[0].curve_len;
        if codebooks.iter().any(|cb| cb.curve_len != cb_len) {
            return Err(Error::DataContract(
                "codebooks must share a single curve_len".into(),
            ));
        }
        let effective_len = cfg.curve_len.min(gallery_len).min(cb_len);
        if effective_len < 2 {
            return Err(Error::InvalidParameter(format!(
                "effective curve length {effective_len} is too short"
            )));
        }
        let prepared = codebooks
            .iter()
            .map(|cb| {
                let curves = cb
                    .curves
                    .iter()
                    .map(|c| downsample(c, effective_len))
                    .collect::<Result<Vec<_>>>()?;
                ReferenceCodebook::new(
                    cb.feature_id.clone(),
                    effective_len,
                    curves,
                    cb.seed,
                    cb.provenance.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            effective_len,
            codebooks: prepared,
        })
    }

    pub fn effective_len(&self) -> usize {
        self.effective_len
    }

    /// Whether the configured match segment end exceeds the effective curve
    /// length and will be clamped.
    pub fn segment_clamped(&self) -> bool {
        self.cfg.match_cfg.segment_bounds(self.effective_len).2
    }

    /// Estimate one feature's effectiveness area from its sorted curve.
    fn feature_area(&self, feature: usize, sorted_values: &[f64]) -> Result<f64> {
        let ds = downsample(sorted_values, self.effective_len)?;
        if ds.len() != self.effective_len {
            return Err(Error::LengthMismatch {
                left: ds.len(),
                right: self.effective_len,
            });
        }
        let reference = match_reference(&ds, &self.codebooks[feature], &self.cfg.match_cfg)?;
        let normalized = subtract_and_normalize(&ds, &reference)?;
        Ok(area_under(&normalized.values))
    }

    /// Run the pipeline on one query given its pre-sorted curves.
    pub fn query_sorted(&self, curves: &[SortedCurve]) -> Result<QafOutcome> {
        if curves.len() != self.cfg.num_features {
            return Err(Error::LengthMismatch {
                left: curves.len(),
                right: self.cfg.num_features,
            });
        }
        let gallery_len = curves[0].len();
        if curves.iter().any(|c| c.len() != gallery_len) {
            return Err(Error::DataContract(
                "per-feature curves must cover the same gallery".into(),
            ));
        }
        let areas = curves
            .iter()
            .enumerate()
            .map(|(i, c)| self.feature_area(i, &c.values))
            .collect::<Result<Vec<f64>>>()?;
        let weights = compute_weights(&areas, self.cfg.epsilon_area)?;

        let rows: Vec<Vec<f64>> = curves.iter().map(SortedCurve::to_original_row).collect();
        let fused = fuse(&rows, &weights, self.cfg.rule, self.cfg.epsilon_score)?;
        let ranking = sort_descending(&fused)?.origin;
        Ok(QafOutcome {
            weights,
            areas,
            fused,
            ranking,
        })
    }

    /// Run the pipeline on one query given its raw gallery-aligned rows.
    pub fn query_rows<S: AsRef<[f64]>>(&self, rows: &[S]) -> Result<QafOutcome> {
        let curves = rows
            .iter()
            .map(|r| sort_descending(r.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        self.query_sorted(&curves)
    }
}

/// One-shot query-adaptive fusion: estimate weights from the sorted curves
/// via reference normalization and fuse the original score lists.
pub fn qaf_query(
    query_curves: &[SortedCurve],
    codebooks: &[ReferenceCodebook],
    cfg: &QafConfig,
) -> Result<QafOutcome> {
    if query_curves.is_empty() {
        return Err(Error::InvalidParameter("no query curves given".into()));
    }
    let pipeline = QafPipeline::new(codebooks, query_curves[0].len(), cfg)?;
    pipeline.query_sorted(query_curves)
}
