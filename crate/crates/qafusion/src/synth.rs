//! Deterministic synthetic multi-feature retrieval benchmarks.
//!
//! Each feature draws true-match scores from one distribution and
//! false-match scores from another, giving direct control over how
//! discriminative the feature is: a "good" feature produces L-shaped sorted
//! curves, a "random" feature produces smoothly descending ones. The
//! optional per-query tail jitter varies the false-match distribution's
//! shape from query to query, which is what makes reference subtraction
//! earn its keep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::table::ScoreTable;

fn default_scale() -> f64 {
    1.0
}

/// A score distribution on [0, scale].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ScoreDist {
    Beta {
        alpha: f64,
        beta: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Const {
        value: f64,
    },
}

impl ScoreDist {
    pub fn beta(alpha: f64, beta: f64) -> Self {
        Self::Beta {
            alpha,
            beta,
            scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Beta { alpha, beta, scale } => {
                if alpha <= 0.0 || beta <= 0.0 || !scale.is_finite() || scale <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "invalid beta distribution: alpha={alpha}, beta={beta}, scale={scale}"
                    )));
                }
            }
            Self::Const { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidParameter(
                        "constant score must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sample with the false-match beta parameter multiplied by
    /// `beta_multiplier` (tail-shape jitter; no effect on constants).
    fn sample(&self, rng: &mut ChaCha8Rng, beta_multiplier: f64) -> Result<f64> {
        match *self {
            Self::Beta { alpha, beta, scale } => {
                let dist = rand_distr::Beta::new(alpha, beta * beta_multiplier)
                    .map_err(|e| Error::InvalidParameter(format!("beta distribution: {e}")))?;
                Ok(scale * dist.sample(rng))
            }
            Self::Const { value } => Ok(value),
        }
    }
}

/// One synthetic feature: where its true-match and false-match scores come
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProfile {
    pub name: String,
    pub pos: ScoreDist,
    pub neg: ScoreDist,
    /// Per-query multiplier range applied to the false-match beta parameter,
    /// drawn uniformly; varies the tail shape query to query.
    #[serde(default)]
    pub tail_jitter: Option<(f64, f64)>,
}

impl FeatureProfile {
    pub fn custom(name: impl Into<String>, pos: ScoreDist, neg: ScoreDist) -> Self {
        Self {
            name: name.into(),
            pos,
            neg,
            tail_jitter: None,
        }
    }

    /// Strongly discriminative: L-shaped sorted curves.
    pub fn good(name: impl Into<String>) -> Self {
        Self::custom(name, ScoreDist::beta(8.0, 2.0), ScoreDist::beta(2.0, 8.0))
    }

    /// Moderately discriminative.
    pub fn medium(name: impl Into<String>) -> Self {
        Self::custom(name, ScoreDist::beta(5.0, 2.0), ScoreDist::beta(2.0, 5.0))
    }

    /// Chance level: true and false matches are indistinguishable.
    pub fn random(name: impl Into<String>) -> Self {
        Self::custom(name, ScoreDist::beta(2.0, 2.0), ScoreDist::beta(2.0, 2.0))
    }

    /// Ideal feature: 1 on true matches, 0 elsewhere.
    pub fn perfect(name: impl Into<String>) -> Self {
        Self::custom(
            name,
            ScoreDist::Const { value: 1.0 },
            ScoreDist::Const { value: 0.0 },
        )
    }

    /// Chance level with uniform scores.
    pub fn uniform(name: impl Into<String>) -> Self {
        Self::custom(name, ScoreDist::beta(1.0, 1.0), ScoreDist::beta(1.0, 1.0))
    }

    pub fn with_tail_jitter(mut self, lo: f64, hi: f64) -> Self {
        self.tail_jitter = Some((lo, hi));
        self
    }

    fn validate(&self) -> Result<()> {
        self.pos.validate()?;
        self.neg.validate()?;
        if let Some((lo, hi)) = self.tail_jitter {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::InvalidParameter(format!(
                    "tail jitter range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Whether queries have true matches at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusMode {
    /// Normal retrieval corpus with qrels.
    #[default]
    Retrieval,
    /// No query has any relevant item; used to build reference codebooks.
    Irrelevant,
}

fn default_relevant() -> usize {
    1
}

/// Full description of a synthetic benchmark. Generation is a pure function
/// of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_queries: usize,
    pub gallery_size: usize,
    /// True matches per query (ignored in irrelevant mode).
    #[serde(default = "default_relevant")]
    pub relevant_per_query: usize,
    /// Seed for score draws.
    #[serde(default)]
    pub seed: u64,
    /// Seed for the shared relevance structure; defaults to `seed`.
    #[serde(default)]
    pub correlation_seed: Option<u64>,
    #[serde(default)]
    pub mode: CorpusMode,
    /// Additional chance-level features appended after the named ones.
    #[serde(default)]
    pub extra_random_features: usize,
    pub features: Vec<FeatureProfile>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries < 1 || self.gallery_size < 1 {
            return Err(Error::InvalidParameter(
                "need at least one query and one gallery item".into(),
            ));
        }
        if self.mode == CorpusMode::Retrieval
            && (self.relevant_per_query < 1 || self.relevant_per_query >= self.gallery_size)
        {
            return Err(Error::InvalidParameter(format!(
                "relevant_per_query must satisfy 1 <= r < gallery_size, got {}",
                self.relevant_per_query
            )));
        }
        if self.features.is_empty() {
            return Err(Error::InvalidParameter("no features specified".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for f in &self.features {
            f.validate()?;
            if !names.insert(&f.name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate feature name {}",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

fn make_ids(prefix: &str, count: usize) -> Vec<String> {
    let width = count.saturating_sub(1).max(1).to_string().len().max(4);
    (0..count).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Draw the shared relevance structure: which gallery items are relevant to
/// which queries.
fn draw_relevance(spec: &SynthSpec) -> Vec<Vec<usize>> {
    let seed = spec.correlation_seed.unwrap_or(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.num_queries)
        .map(|_| {
            let mut picked =
                rand::seq::index::sample(&mut rng, spec.gallery_size, spec.relevant_per_query)
                    .into_vec();
            picked.sort_unstable();
            picked
        })
        .collect()
}

fn feature_table(
    profile: &FeatureProfile,
    relevance: Option<&[Vec<usize>]>,
    query_ids: &[String],
    gallery_ids: &[String],
    seed: u64,
    stream: u64,
) -> Result<ScoreTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let gallery = gallery_ids.len();
    let mut scores = Vec::with_capacity(query_ids.len());
    for qi in 0..query_ids.len() {
        let beta_multiplier = match profile.tail_jitter {
            Some((lo, hi)) => lo + rng.random::<f64>() * (hi - lo),
            None => 1.0,
        };
        let relevant: std::collections::HashSet<usize> = match relevance {
            Some(rel) => rel[qi].iter().copied().collect(),
            None => std::collections::HashSet::new(),
        };
        let mut row = Vec::with_capacity(gallery);
        for gi in 0..gallery {
            let value = if relevant.contains(&gi) {
                profile.pos.sample(&mut rng, 1.0)?
            } else {
                profile.neg.sample(&mut rng, beta_multiplier)?
            };
            row.push(value);
        }
        scores.push(row);
    }
    ScoreTable::new(
        profile.name.clone(),
        query_ids.to_vec(),
        gallery_ids.to_vec(),
        scores,
    )
}

/// Generate the benchmark: one score table per feature plus the qrels.
/// Irrelevant mode yields empty qrels.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<ScoreTable>, Qrels)> {
    spec.validate()?;
    let query_ids = make_ids("q", spec.num_queries);
    let gallery_ids = make_ids("g", spec.gallery_size);

    let (relevance, qrels) = match spec.mode {
        CorpusMode::Retrieval => {
            let relevance = draw_relevance(spec);
            let mut qrels = Qrels::default();
            for (qi, rel) in relevance.iter().enumerate() {
                for &gi in rel {
                    qrels.insert(query_ids[qi].clone(), gallery_ids[gi].clone());
                }
            }
            (Some(relevance), qrels)
        }
        CorpusMode::Irrelevant => (None, Qrels::default()),
    };

    let mut tables = Vec::with_capacity(spec.features.len());
    for (fi, profile) in spec.features.iter().enumerate() {
        tables.push(feature_table(
            profile,
            relevance.as_deref(),
            &query_ids,
            &gallery_ids,
            spec.seed,
            fi as u64,
        )?);
    }
    if spec.extra_random_features > 0 {
        add_random_features(&mut tables, spec.extra_random_features, spec.seed)?;
    }
    Ok((tables, qrels))
}

/// Append `count` chance-level features (named `rand00`, `rand01`, ...) to
/// an existing benchmark. Scores are independent of relevance, so each added
/// feature performs at chance on its own.
pub fn add_random_features(tables: &mut Vec<ScoreTable>, count: usize, seed: u64) -> Result<()> {
    let Some(first) = tables.first() else {
        return Err(Error::DataContract("no base tables to extend".into()));
    };
    let query_ids = first.query_ids.clone();
    let gallery_ids = first.gallery_ids.clone();
    for i in 0..count {
        let profile = FeatureProfile::random(format!("rand{i:02}"));
        // Streams offset well past the named features' streams.
        tables.push(feature_table(
            &profile,
            None,
            &query_ids,
            &gallery_ids,
            seed,
            1_000 + i as u64,
        )?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{area_under, min_max_normalize};
    use crate::eval::{evaluate_rankings, single_feature_rankings, EvalContext};

    fn base_spec(features: Vec<FeatureProfile>) -> SynthSpec {
        SynthSpec {
            num_queries: 60,
            gallery_size: 120,
            relevant_per_query: 4,
            seed: 11,
            correlation_seed: None,
            mode: CorpusMode::Retrieval,
            extra_random_features: 0,
            features,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = base_spec(vec![FeatureProfile::good("a"), FeatureProfile::random("b")]);
        let (t1, q1) = generate(&spec).unwrap();
        let (t2, q2) = generate(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(q1, q2);

        let mut other = spec.clone();
        other.seed = 12;
        let (t3, _) = generate(&other).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn perfect_feature_has_map_one() {
        let spec = base_spec(vec![FeatureProfile::perfect("p")]);
        let (tables, qrels) = generate(&spec).unwrap();
        let ctx = EvalContext::new(&tables[0].query_ids, &tables[0].gallery_ids, &qrels).unwrap();
        let rankings = single_feature_rankings(&tables[0], &ctx).unwrap();
        let report = evaluate_rankings("perfect", &rankings, &ctx).unwrap();
        assert_eq!(report.map, 1.0);
        assert_eq!(report.rank1, 1.0);
        assert_eq!(report.ns_score, Some(4.0));
    }

    /// Monte-Carlo estimate of chance-level AP: mean and std of AP over
    /// random permutations of the gallery.
    fn mc_chance_ap(
        gallery: usize,
        relevant_count: usize,
        permutations: usize,
        seed: u64,
    ) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relevant: std::collections::HashSet<usize> = (0..relevant_count).collect();
        let mut aps = Vec::with_capacity(permutations);
        let mut ranking: Vec<usize> = (0..gallery).collect();
        for _ in 0..permutations {
            for i in (1..gallery).rev() {
                ranking.swap(i, rng.random_range(0..=i));
            }
            aps.push(crate::eval::average_precision(&ranking, &relevant).unwrap());
        }
        let mean = aps.iter().sum::<f64>() / aps.len() as f64;
        let var = aps.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (aps.len() - 1) as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn uniform_feature_scores_at_chance() {
        let spec = SynthSpec {
            num_queries: 500,
            gallery_size: 100,
            relevant_per_query: 5,
            seed: 3,
            correlation_seed: None,
            mode: CorpusMode::Retrieval,
            extra_random_features: 0,
            features: vec![FeatureProfile::uniform("u")],
        };
        let (tables, qrels) = generate(&spec).unwrap();
        let ctx = EvalContext::new(&tables[0].query_ids, &tables[0].gallery_ids, &qrels).unwrap();
        let rankings = single_feature_rankings(&tables[0], &ctx).unwrap();
        let report = evaluate_rankings("uniform", &rankings, &ctx).unwrap();

        let (mc_mean, mc_std) = mc_chance_ap(100, 5, 10_000, 77);
        let tolerance = 3.0 * mc_std * ((500.0f64).sqrt().recip() + (10_000.0f64).sqrt().recip());
        assert!(
            (report.map - mc_mean).abs() <= tolerance,
            "uniform-feature mAP {} vs chance {} (tol {tolerance})",
            report.map,
            mc_mean
        );
    }

    #[test]
    fn good_curves_have_smaller_normalized_area_than_bad() {
        let spec = SynthSpec {
            num_queries: 100,
            gallery_size: 400,
            relevant_per_query: 4,
            seed: 19,
            correlation_seed: None,
            mode: CorpusMode::Retrieval,
            extra_random_features: 0,
            features: vec![FeatureProfile::good("good"), FeatureProfile::random("bad")],
        };
        let (tables, _) = generate(&spec).unwrap();
        let area_of = |table: &ScoreTable, qi: usize| {
            let sorted = table.sorted_curve(qi).unwrap();
            area_under(&min_max_normalize(&sorted.values).unwrap().values)
        };
        let good_areas: Vec<f64> = (0..100).map(|qi| area_of(&tables[0], qi)).collect();
        let bad_areas: Vec<f64> = (0..100).map(|qi| area_of(&tables[1], qi)).collect();

        let mut wins = 0usize;
        for g in &good_areas {
            for b in &bad_areas {
                if g < b {
                    wins += 1;
                }
            }
        }
        let frac = wins as f64 / (good_areas.len() * bad_areas.len()) as f64;
        assert!(frac >= 0.95, "good < bad in only {frac} of pairs");
    }

    #[test]
    fn random_features_extend_the_benchmark() {
        let spec = base_spec(vec![FeatureProfile::good("a")]);
        let (mut tables, qrels) = generate(&spec).unwrap();
        add_random_features(&mut tables, 0, 5).unwrap();
        assert_eq!(tables.len(), 1);
        add_random_features(&mut tables, 20, 5).unwrap();
        assert_eq!(tables.len(), 21);
        assert_eq!(tables[1].feature_id, "rand00");

        // A spot-checked added feature performs at chance.
        let ctx = EvalContext::new(&tables[0].query_ids, &tables[0].gallery_ids, &qrels).unwrap();
        let rankings = single_feature_rankings(&tables[3], &ctx).unwrap();
        let report = evaluate_rankings("rand", &rankings, &ctx).unwrap();
        let (mc_mean, mc_std) = mc_chance_ap(120, 4, 10_000, 13);
        let tolerance = 3.0 * mc_std * ((60.0f64).sqrt().recip() + (10_000.0f64).sqrt().recip());
        assert!(
            (report.map - mc_mean).abs() <= tolerance,
            "added feature mAP {} vs chance {}",
            report.map,
            mc_mean
        );
    }

    #[test]
    fn irrelevant_mode_has_no_qrels() {
        let spec = SynthSpec {
            mode: CorpusMode::Irrelevant,
            ..base_spec(vec![FeatureProfile::good("a")])
        };
        let (tables, qrels) = generate(&spec).unwrap();
        assert!(qrels.is_empty());
        assert_eq!(tables.len(), 1);
    }

    #[test]
    fn spec_validation_catches_mistakes() {
        let mut spec = base_spec(vec![FeatureProfile::good("a"), FeatureProfile::good("a")]);
        assert!(spec.validate().is_err());
        spec.features.pop();
        spec.relevant_per_query = spec.gallery_size;
        assert!(spec.validate().is_err());
    }
}
