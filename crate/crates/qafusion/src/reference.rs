//! Reference codebooks: sorted score curves collected from a corpus with no
//! true matches, used to offset the tail of a query's score curve.
//!
//! A query curve with a "high" tail looks bad even when its top ranks are
//! genuine matches. Subtracting a reference curve that approximates the tail
//! distribution highlights the protrusion of the top-ranked scores, which is
//! what the area-based effectiveness estimate actually needs to see.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{downsample, min_max_normalize, sort_descending, NormalizedCurve};
use crate::error::{Error, Result};
use crate::io::{read_json_file, write_json_file};
use crate::table::ScoreTable;

/// How a reference curve is selected from the codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    /// The single codebook curve nearest to the query segment.
    Nearest,
    /// Elementwise mean of the k nearest codebook curves.
    KnnAverage,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Nearest => write!(f, "nearest"),
            Self::KnnAverage => write!(f, "knn_average"),
        }
    }
}

impl FromStr for MatchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "knn_average" => Ok(Self::KnnAverage),
            other => Err(Error::InvalidParameter(format!(
                "unknown match method {other:?} (expected nearest or knn_average)"
            ))),
        }
    }
}

/// Parameters of reference matching: the curve segment `[u, v]` (1-based
/// ranks, inclusive) on which distances are computed, and how many nearest
/// references to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub u: usize,
    pub v: usize,
    pub k: usize,
    pub method: MatchMethod,
}

impl MatchConfig {
    pub fn nearest(u: usize, v: usize) -> Result<Self> {
        Self::validated(Self {
            u,
            v,
            k: 1,
            method: MatchMethod::Nearest,
        })
    }

    pub fn knn(u: usize, v: usize, k: usize) -> Result<Self> {
        Self::validated(Self {
            u,
            v,
            k,
            method: MatchMethod::KnnAverage,
        })
    }

    pub fn validated(cfg: Self) -> Result<Self> {
        if cfg.u < 1 || cfg.u >= cfg.v {
            return Err(Error::InvalidParameter(format!(
                "match segment requires 1 <= u < v, got u={} v={}",
                cfg.u, cfg.v
            )));
        }
        if cfg.k < 1 {
            return Err(Error::InvalidParameter("match k must be >= 1".into()));
        }
        if cfg.method == MatchMethod::Nearest && cfg.k != 1 {
            return Err(Error::InvalidParameter(
                "nearest matching implies k = 1".into(),
            ));
        }
        Ok(cfg)
    }

    /// 0-based half-open segment bounds, with `v` clamped to the curve
    /// length so small galleries still work. Returns the bounds and whether
    /// clamping happened (callers may want to surface a warning).
    pub fn segment_bounds(&self, curve_len: usize) -> (usize, usize, bool) {
        let clamped = self.v > curve_len;
        let end = self.v.min(curve_len);
        (self.u - 1, end, clamped)
    }
}

impl Default for MatchConfig {
    /// kNN = 5 over ranks 1..=400.
    fn default() -> Self {
        Self {
            u: 1,
            v: 400,
            k: 5,
            method: MatchMethod::KnnAverage,
        }
    }
}

/// Q sorted reference score curves for one feature, built offline from a
/// corpus where no item is relevant to any query.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCodebook {
    pub feature_id: String,
    pub curve_len: usize,
    pub curves: Vec<Vec<f64>>,
    pub seed: u64,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    feature_id: String,
    q: usize,
    curve_len: usize,
    seed: u64,
    provenance: String,
    curves: Vec<Vec<f64>>,
}

impl ReferenceCodebook {
    pub fn new(
        feature_id: impl Into<String>,
        curve_len: usize,
        curves: Vec<Vec<f64>>,
        seed: u64,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        for (h, curve) in curves.iter().enumerate() {
            if curve.len() != curve_len {
                return Err(Error::DataContract(format!(
                    "codebook curve {h} has length {} but curve_len is {curve_len}",
                    curve.len()
                )));
            }
            if curve.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::DataContract(format!(
                    "codebook curve {h} is not non-increasing"
                )));
            }
            if let Some(index) = curve.iter().position(|v| !v.is_finite()) {
                return Err(Error::DataContract(format!(
                    "codebook curve {h} has non-finite value at rank {}",
                    index + 1
                )));
            }
        }
        Ok(Self {
            feature_id: feature_id.into(),
            curve_len,
            curves,
            seed,
            provenance: provenance.into(),
        })
    }

    pub fn q(&self) -> usize {
        self.curves.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CodebookFile {
            feature_id: self.feature_id.clone(),
            q: self.curves.len(),
            curve_len: self.curve_len,
            seed: self.seed,
            provenance: self.provenance.clone(),
            curves: self.curves.clone(),
        };
        write_json_file(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CodebookFile = read_json_file(path)?;
        if file.q != file.curves.len() {
            return Err(Error::DataContract(format!(
                "codebook file declares q={} but holds {} curves",
                file.q,
                file.curves.len()
            )));
        }
        Self::new(
            file.feature_id,
            file.curve_len,
            file.curves,
            file.seed,
            file.provenance,
        )
    }
}

/// Build a codebook by sampling `q` queries of an irrelevant-corpus score
/// table, sorting each row descending and down-sampling it to `curve_len`.
///
/// The caller asserts irrelevance: no gallery item of `irrelevant_scores`
/// may be a true match for any of its queries.
pub fn build_codebook(
    irrelevant_scores: &ScoreTable,
    q: usize,
    curve_len: usize,
    seed: u64,
    provenance: impl Into<String>,
) -> Result<ReferenceCodebook> {
    if q == 0 {
        return Err(Error::InvalidParameter(
            "codebook size Q must be >= 1".into(),
        ));
    }
    if q > irrelevant_scores.num_queries() {
        return Err(Error::InvalidParameter(format!(
            "requested Q={q} reference queries but the table has only {}",
            irrelevant_scores.num_queries()
        )));
    }
    if curve_len > irrelevant_scores.num_gallery() {
        return Err(Error::InvalidParameter(format!(
            "curve_len {curve_len} exceeds gallery size {}",
            irrelevant_scores.num_gallery()
        )));
    }
    if curve_len < 2 {
        return Err(Error::InvalidParameter("curve_len must be >= 2".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked =
        rand::seq::index::sample(&mut rng, irrelevant_scores.num_queries(), q).into_vec();
    picked.sort_unstable();

    let mut curves = Vec::with_capacity(q);
    for qi in picked {
        let sorted = sort_descending(irrelevant_scores.row(qi))?;
        curves.push(downsample(&sorted.values, curve_len)?);
    }
    ReferenceCodebook::new(
        irrelevant_scores.feature_id.clone(),
        curve_len,
        curves,
        seed,
        provenance,
    )
}

fn segment_sq_dist(a: &[f64], b: &[f64], start: usize, end: usize) -> f64 {
    a[start..end]
        .iter()
        .zip(&b[start..end])
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Select the reference curve for a query curve: the codebook entry (or mean
/// of the k nearest entries) with the smallest Euclidean distance on the
/// configured segment. Distance is computed on `[u, v]` only, but the full
/// reference curve is returned for subtraction. Distance ties resolve to the
/// lowest codebook index.
pub fn match_reference(
    curve: &[f64],
    codebook: &ReferenceCodebook,
    cfg: &MatchConfig,
) -> Result<Vec<f64>> {
    if codebook.curves.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if curve.len() != codebook.curve_len {
        return Err(Error::LengthMismatch {
            left: curve.len(),
            right: codebook.curve_len,
        });
    }
    let (start, end, _clamped) = cfg.segment_bounds(curve.len());

    match cfg.method {
        MatchMethod::Nearest => {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (h, reference) in codebook.curves.iter().enumerate() {
                let dist = segment_sq_dist(curve, reference, start, end);
                if dist < best_dist {
                    best = h;
                    best_dist = dist;
                }
            }
            Ok(codebook.curves[best].clone())
        }
        MatchMethod::KnnAverage => {
            let mut dists: Vec<(f64, usize)> = codebook
                .curves
                .iter()
                .enumerate()
                .map(|(h, reference)| (segment_sq_dist(curve, reference, start, end), h))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let k = cfg.k.min(dists.len());
            let mut mean = vec![0.0; codebook.curve_len];
            for &(_, h) in &dists[..k] {
                for (m, r) in mean.iter_mut().zip(&codebook.curves[h]) {
                    *m += r;
                }
            }
            for m in &mut mean {
                *m /= k as f64;
            }
            Ok(mean)
        }
    }
}

/// Subtract a matched reference from a score curve and min-max normalize the
/// difference. The difference may contain negatives; normalization maps it
/// back into [0, 1]. A constant difference propagates the degenerate flag.
pub fn subtract_and_normalize(curve: &[f64], reference: &[f64]) -> Result<NormalizedCurve> {
    if curve.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: curve.len(),
            right: reference.len(),
        });
    }
    let diff: Vec<f64> = curve.iter().zip(reference).map(|(c, r)| c - r).collect();
    min_max_normalize(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::area_under;
    use rand::Rng;

    fn random_table(feature: &str, queries: usize, gallery: usize, seed: u64) -> ScoreTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = (0..queries)
            .map(|_| (0..gallery).map(|_| rng.random::<f64>()).collect())
            .collect();
        ScoreTable::new(
            feature,
            (0..queries).map(|i| format!("q{i:04}")).collect(),
            (0..gallery).map(|i| format!("g{i:04}")).collect(),
            scores,
        )
        .unwrap()
    }

    #[test]
    fn forced_selection_uses_every_row_sorted() {
        let table = random_table("f", 4, 10, 3);
        let cb = build_codebook(&table, 4, 10, 99, "test").unwrap();
        assert_eq!(cb.q(), 4);
        let mut expected: Vec<Vec<f64>> = (0..4)
            .map(|qi| table.sorted_curve(qi).unwrap().values)
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut got = cb.curves.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, expected);
    }

    #[test]
    fn same_seed_gives_identical_codebook() {
        let table = random_table("f", 50, 30, 5);
        let a = build_codebook(&table, 20, 25, 7, "test").unwrap();
        let b = build_codebook(&table, 20, 25, 7, "test").unwrap();
        assert_eq!(a, b);
        let c = build_codebook(&table, 20, 25, 8, "test").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_sample_rows_are_distinct_and_monotone() {
        let table = random_table("f", 1500, 50, 21);
        let cb = build_codebook(&table, 1000, 20, 13, "test").unwrap();
        assert_eq!(cb.q(), 1000);

        let all_rows: std::collections::BTreeSet<String> = (0..1500)
            .map(|qi| {
                let sorted = table.sorted_curve(qi).unwrap();
                format!("{:?}", downsample(&sorted.values, 20).unwrap())
            })
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for curve in &cb.curves {
            for w in curve.windows(2) {
                assert!(w[0] >= w[1]);
            }
            let key = format!("{curve:?}");
            assert!(all_rows.contains(&key), "curve not drawn from the table");
            assert!(seen.insert(key), "duplicate codebook row");
        }
    }

    #[test]
    fn build_rejects_oversized_requests() {
        let table = random_table("f", 5, 10, 1);
        assert!(build_codebook(&table, 6, 10, 0, "t").is_err());
        assert!(build_codebook(&table, 5, 11, 0, "t").is_err());
        assert!(build_codebook(&table, 0, 10, 0, "t").is_err());
    }

    #[test]
    fn codebook_file_round_trips_bytewise() {
        let table = random_table("f", 30, 40, 17);
        let cb = build_codebook(&table, 10, 20, 42, "irrelevant synthetic corpus").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        cb.save(&p1).unwrap();
        let loaded = ReferenceCodebook::load(&p1).unwrap();
        assert_eq!(loaded, cb);
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn singleton_codebook_always_matches() {
        let cb = ReferenceCodebook::new("f", 3, vec![vec![0.9, 0.5, 0.1]], 0, "t").unwrap();
        let cfg = MatchConfig::nearest(1, 3).unwrap();
        let r = match_reference(&[1.0, 0.2, 0.0], &cb, &cfg).unwrap();
        assert_eq!(r, vec![0.9, 0.5, 0.1]);
    }

    #[test]
    fn exact_segment_match_returns_that_curve() {
        let cb = ReferenceCodebook::new(
            "f",
            4,
            vec![vec![0.9, 0.5, 0.3, 0.1], vec![0.8, 0.4, 0.2, 0.0]],
            0,
            "t",
        )
        .unwrap();
        let cfg = MatchConfig::nearest(2, 4).unwrap();
        // Tail [0.4, 0.2, 0.0] matches curve 1 exactly; head differs a lot.
        let r = match_reference(&[2.0, 0.4, 0.2, 0.0], &cb, &cfg).unwrap();
        assert_eq!(r, vec![0.8, 0.4, 0.2, 0.0]);
    }

    #[test]
    fn knn_average_of_two_nearest() {
        let cb = ReferenceCodebook::new(
            "f",
            3,
            vec![
                vec![1.0, 0.5, 0.0],
                vec![1.0, 0.3, 0.0],
                vec![0.2, 0.1, 0.0],
            ],
            0,
            "t",
        )
        .unwrap();
        let cfg = MatchConfig::knn(2, 3, 2).unwrap();
        let r = match_reference(&[1.0, 0.4, 0.0], &cb, &cfg).unwrap();
        assert_eq!(r, vec![1.0, 0.4, 0.0]);
    }

    #[test]
    fn empty_codebook_is_an_error() {
        let cb = ReferenceCodebook::new("f", 3, vec![], 0, "t").unwrap();
        let cfg = MatchConfig::default();
        assert!(matches!(
            match_reference(&[1.0, 0.5, 0.0], &cb, &cfg),
            Err(Error::EmptyCodebook)
        ));
    }

    #[test]
    fn nearest_beats_every_other_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let len = 50;
        let curves: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let mut c: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
                c.sort_by(|a, b| b.partial_cmp(a).unwrap());
                c
            })
            .collect();
        let cb = ReferenceCodebook::new("f", len, curves, 0, "t").unwrap();
        let cfg = MatchConfig::nearest(3, 30).unwrap();
        let (start, end, _) = cfg.segment_bounds(len);

        for _ in 0..20 {
            let mut query: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            query.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let reference = match_reference(&query, &cb, &cfg).unwrap();
            let matched = segment_sq_dist(&query, &reference, start, end);
            for other in &cb.curves {
                assert!(matched <= segment_sq_dist(&query, other, start, end) + 1e-12);
            }
        }
    }

    #[test]
    fn v_clamps_to_short_curves() {
        let cfg = MatchConfig::knn(1, 400, 5).unwrap();
        let (start, end, clamped) = cfg.segment_bounds(10);
        assert_eq!((start, end), (0, 10));
        assert!(clamped);
    }

    #[test]
    fn subtract_identical_curves_is_degenerate() {
        let n = subtract_and_normalize(&[0.5, 0.4, 0.1], &[0.5, 0.4, 0.1]).unwrap();
        assert!(n.degenerate);
        assert_eq!(n.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn subtract_arithmetic() {
        let n = subtract_and_normalize(&[1.0, 0.3, 0.1], &[0.2, 0.2, 0.1]).unwrap();
        assert!(!n.degenerate);
        for (got, want) in n.values.iter().zip(&[1.0, 0.125, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", n.values);
        }

        assert!(subtract_and_normalize(&[1.0], &[0.5, 0.2]).is_err());
    }

    #[test]
    fn subtraction_shrinks_good_curve_areas() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let len = 200;
        let reference: Vec<f64> = (0..len)
            .map(|j| 0.4 - 0.1 * j as f64 / (len - 1) as f64)
            .collect();
        for _ in 0..100 {
            let mut curve = vec![1.0];
            for j in 1..len {
                curve.push(0.4 - 0.1 * j as f64 / (len - 1) as f64 + rng.random::<f64>() * 0.01);
            }
            curve.sort_by(|a, b| b.partial_cmp(a).unwrap());

            let with_ref = area_under(&subtract_and_normalize(&curve, &reference).unwrap().values);
            let without = area_under(&min_max_normalize(&curve).unwrap().values);
            assert!(
                with_ref < without,
                "subtraction did not shrink area: {with_ref} vs {without}"
            );
        }
    }
}
