//! Retrieval metrics and baseline fusion methods: average precision / mAP,
//! the top-4 N-S score, rank-1 accuracy, uniform fusion, median-rank
//! aggregation, and exhaustive global weight grid search.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::curve::sort_descending;
use crate::error::{Error, Result};
use crate::qaf::{fuse, FusionRule, WeightVector};
use crate::table::{ensure_same_universe, ScoreTable};

/// Ground-truth relevance: per query, the set of relevant gallery ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (query, gallery) in pairs {
            relevant.entry(query).or_default().insert(gallery);
        }
        Self { relevant }
    }

    /// Derive relevance from identity labels: gallery item `g` is relevant
    /// to query `q` iff they share a label. `include_self` controls whether
    /// a gallery item with the same id as the query counts as relevant
    /// (dataset conventions differ on self-matches).
    pub fn from_identity_labels(
        labels: &BTreeMap<String, String>,
        query_ids: &[String],
        gallery_ids: &[String],
        include_self: bool,
    ) -> Result<Self> {
        let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for q in query_ids {
            let q_label = labels
                .get(q)
                .ok_or_else(|| Error::DataContract(format!("query {q} has no identity label")))?;
            for g in gallery_ids {
                let g_label = labels.get(g).ok_or_else(|| {
                    Error::DataContract(format!("gallery item {g} has no identity label"))
                })?;
                if g_label == q_label && (include_self || g != q) {
                    relevant.entry(q.clone()).or_default().insert(g.clone());
                }
            }
        }
        Ok(Self { relevant })
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.relevant.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn insert(&mut self, query: String, gallery: String) {
        self.relevant.entry(query).or_default().insert(gallery);
    }

    /// Reverse every (query, gallery) pair; pairs with the transposed score
    /// tables in the switch-and-average protocol.
    pub fn inverted(&self) -> Qrels {
        let mut out = Qrels::default();
        for (query, gallery_set) in &self.relevant {
            for gallery in gallery_set {
                out.insert(gallery.clone(), query.clone());
            }
        }
        out
    }
}

/// Read "query_id gallery_id" lines.
pub fn read_qrels_pairs(reader: impl BufRead) -> Result<Qrels> {
    let mut qrels = Qrels::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(q), Some(g), None) => qrels.insert(q.to_string(), g.to_string()),
            _ => {
                return Err(Error::DataContract(format!(
                    "qrels line {}: expected 'query_id gallery_id'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(qrels)
}

/// Write "query_id gallery_id" lines in canonical order.
pub fn write_qrels_pairs(writer: &mut impl Write, qrels: &Qrels) -> Result<()> {
    for (query, gallery_set) in &qrels.relevant {
        for gallery in gallery_set {
            writeln!(writer, "{query} {gallery}")?;
        }
    }
    Ok(())
}

/// Read "item_id identity_label" lines (identity-task ground truth).
pub fn read_identity_labels(reader: impl BufRead) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(item), Some(label), None) => {
                if let Some(old) = labels.insert(item.to_string(), label.to_string()) {
                    if old != label {
                        return Err(Error::DataContract(format!(
                            "identity file line {}: conflicting labels for {item}",
                            lineno + 1
                        )));
                    }
                }
            }
            _ => {
                return Err(Error::DataContract(format!(
                    "identity file line {}: expected 'item_id label'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(labels)
}

/// Resolved evaluation context: a fixed query/gallery universe with qrels
/// mapped to gallery indices. Queries without any relevant item are excluded
/// from metrics.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub query_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
    /// Indices (into `query_ids`) of the queries that are evaluated.
    pub evaluated: Vec<usize>,
    /// Relevant gallery indices, aligned with `evaluated`.
    pub relevant: Vec<HashSet<usize>>,
}

impl EvalContext {
    pub fn new(query_ids: &[String], gallery_ids: &[String], qrels: &Qrels) -> Result<Self> {
        let gallery_index: BTreeMap<&str, usize> = gallery_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let known_queries: BTreeSet<&str> = query_ids.iter().map(String::as_str).collect();
        for q in qrels.queries() {
            if !known_queries.contains(q.as_str()) {
                return Err(Error::DataContract(format!(
                    "qrels references unknown query id {q}"
                )));
            }
        }

        let mut evaluated = Vec::new();
        let mut relevant = Vec::new();
        for (qi, q) in query_ids.iter().enumerate() {
            let Some(rel_ids) = qrels.relevant(q) else {
                continue;
            };
            let mut rel = HashSet::with_capacity(rel_ids.len());
            for g in rel_ids {
                let gi = gallery_index.get(g.as_str()).ok_or_else(|| {
                    Error::DataContract(format!("qrels references unknown gallery id {g}"))
                })?;
                rel.insert(*gi);
            }
            if !rel.is_empty() {
                evaluated.push(qi);
                relevant.push(rel);
            }
        }
        if evaluated.is_empty() {
            return Err(Error::DataContract(
                "no query has any relevant gallery item".into(),
            ));
        }
        Ok(Self {
            query_ids: query_ids.to_vec(),
            gallery_ids: gallery_ids.to_vec(),
            evaluated,
            relevant,
        })
    }

    pub fn num_evaluated(&self) -> usize {
        self.evaluated.len()
    }
}

/// Average precision of one ranking: the mean, over relevant items, of the
/// precision at each relevant item's rank.
pub fn average_precision(ranking: &[usize], relevant: &HashSet<usize>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::DataContract(
            "average precision needs at least one relevant item".into(),
        ));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// N-S score: the number of relevant items among the top 4.
pub fn ns_score(ranking: &[usize], relevant: &HashSet<usize>) -> Result<f64> {
    if ranking.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "N-S score needs a gallery of at least 4, got {}",
            ranking.len()
        )));
    }
    Ok(ranking[..4].iter().filter(|i| relevant.contains(i)).count() as f64)
}

/// Fraction of queries whose rank-1 item is relevant.
pub fn rank1_accuracy(rankings: &[Vec<usize>], relevant: &[HashSet<usize>]) -> Result<f64> {
    if rankings.len() != relevant.len() {
        return Err(Error::LengthMismatch {
            left: rankings.len(),
            right: relevant.len(),
        });
    }
    if rankings.is_empty() {
        return Err(Error::InvalidParameter("no rankings to evaluate".into()));
    }
    let hits = rankings
        .iter()
        .zip(relevant)
        .filter(|(r, rel)| !r.is_empty() && rel.contains(&r[0]))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Median-rank aggregation: each candidate is scored by the median of its
/// ranks across the per-feature rankings, ties broken by mean rank then by
/// gallery index.
pub fn rank_aggregation(rankings: &[Vec<usize>]) -> Result<Vec<usize>> {
    let Some(first) = rankings.first() else {
        return Err(Error::InvalidParameter("no rankings to aggregate".into()));
    };
    let n = first.len();
    let mut ranks = vec![Vec::with_capacity(rankings.len()); n];
    for ranking in rankings {
        if ranking.len() != n {
            return Err(Error::LengthMismatch {
                left: ranking.len(),
                right: n,
            });
        }
        let mut seen = vec![false; n];
        for (pos, &item) in ranking.iter().enumerate() {
            if item >= n || seen[item] {
                return Err(Error::DataContract(
                    "rank aggregation inputs must be permutations of the same gallery".into(),
                ));
            }
            seen[item] = true;
            ranks[item].push((pos + 1) as f64);
        }
    }

    let mut keyed: Vec<(f64, f64, usize)> = ranks
        .into_iter()
        .enumerate()
        .map(|(item, mut rs)| {
            rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = rs.len() / 2;
            let median = if rs.len() % 2 == 1 {
                rs[mid]
            } else {
                (rs[mid - 1] + rs[mid]) / 2.0
            };
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            (median, mean, item)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    Ok(keyed.into_iter().map(|(_, _, item)| item).collect())
}

/// Per-query AP entry of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryAp {
    pub query: String,
    pub ap: f64,
}

/// Metrics of one fusion method over one benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub map: f64,
    /// Mean N-S score; absent when the gallery has fewer than 4 items.
    pub ns_score: Option<f64>,
    pub rank1: f64,
    pub num_queries: usize,
    pub per_query_ap: Vec<QueryAp>,
}

/// Compute all metrics for one set of per-query rankings (aligned with
/// `ctx.evaluated`).
pub fn evaluate_rankings(
    method: impl Into<String>,
    rankings: &[Vec<usize>],
    ctx: &EvalContext,
) -> Result<MetricReport> {
    if rankings.len() != ctx.evaluated.len() {
        return Err(Error::LengthMismatch {
            left: rankings.len(),
            right: ctx.evaluated.len(),
        });
    }
    let mut per_query_ap = Vec::with_capacity(rankings.len());
    let mut ap_sum = 0.0;
    let mut ns_sum = 0.0;
    let with_ns = ctx.gallery_ids.len() >= 4;
    for ((ranking, relevant), &qi) in rankings.iter().zip(&ctx.relevant).zip(&ctx.evaluated) {
        let ap = average_precision(ranking, relevant)?;
        ap_sum += ap;
        if with_ns {
            ns_sum += ns_score(ranking, relevant)?;
        }
        per_query_ap.push(QueryAp {
            query: ctx.query_ids[qi].clone(),
            ap,
        });
    }
    let n = rankings.len() as f64;
    Ok(MetricReport {
        method: method.into(),
        map: ap_sum / n,
        ns_score: with_ns.then_some(ns_sum / n),
        rank1: rank1_accuracy(rankings, &ctx.relevant)?,
        num_queries: rankings.len(),
        per_query_ap,
    })
}

/// Rankings of a single feature for the evaluated queries.
pub fn single_feature_rankings(table: &ScoreTable, ctx: &EvalContext) -> Result<Vec<Vec<usize>>> {
    ctx.evaluated
        .iter()
        .map(|&qi| Ok(table.sorted_curve(qi)?.origin))
        .collect()
}

/// Rankings under fixed fusion weights for the evaluated queries.
pub fn fixed_weight_rankings(
    tables: &[ScoreTable],
    ctx: &EvalContext,
    weights: &WeightVector,
    rule: FusionRule,
    epsilon_score: f64,
) -> Result<Vec<Vec<usize>>> {
    ensure_same_universe(tables)?;
    ctx.evaluated
        .iter()
        .map(|&qi| {
            let rows: Vec<&[f64]> = tables.iter().map(|t| t.row(qi)).collect();
            let fused = fuse(&rows, weights, rule, epsilon_score)?;
            Ok(sort_descending(&fused)?.origin)
        })
        .collect()
}

/// Uniform-weight fusion rankings for the evaluated queries.
pub fn uniform_rankings(
    tables: &[ScoreTable],
    ctx: &EvalContext,
    rule: FusionRule,
    epsilon_score: f64,
) -> Result<Vec<Vec<usize>>> {
    let weights = WeightVector::uniform(tables.len())?;
    fixed_weight_rankings(tables, ctx, &weights, rule, epsilon_score)
}

/// Median-rank aggregation rankings for the evaluated queries.
pub fn rank_aggregation_rankings(
    tables: &[ScoreTable],
    ctx: &EvalContext,
) -> Result<Vec<Vec<usize>>> {
    ensure_same_universe(tables)?;
    ctx.evaluated
        .iter()
        .map(|&qi| {
            let per_feature: Vec<Vec<usize>> = tables
                .iter()
                .map(|t| Ok(t.sorted_curve(qi)?.origin))
                .collect::<Result<_>>()?;
            rank_aggregation(&per_feature)
        })
        .collect()
}

/// What the grid search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridObjective {
    MeanAp,
    Rank1,
}

fn metric_of(rankings: &[Vec<usize>], ctx: &EvalContext, objective: GridObjective) -> Result<f64> {
    match objective {
        GridObjective::MeanAp => {
            let mut sum = 0.0;
            for (ranking, relevant) in rankings.iter().zip(&ctx.relevant) {
                sum += average_precision(ranking, relevant)?;
            }
            Ok(sum / rankings.len() as f64)
        }
        GridObjective::Rank1 => rank1_accuracy(rankings, &ctx.relevant),
    }
}

/// Number of grid points for K features with 1/step subdivisions:
/// C(n + k - 1, k - 1), saturating once it exceeds the tractability cap.
fn simplex_grid_size(k: usize, n: u64) -> u128 {
    const CAP: u128 = 10_000_001;
    let mut result: u128 = 1;
    for i in 0..(k as u128 - 1) {
        // Exact at every step: the partial product is C(n + i + 1, i + 1).
        result = result * (n as u128 + i + 1) / (i + 1);
        if result > CAP {
            return CAP;
        }
    }
    result
}

/// Exhaustive global-weight search on the simplex with the given step.
///
/// Enumerates weight vectors in descending lexicographic order and keeps the
/// first strict maximum, so metric ties resolve to the lexicographically
/// greatest weight vector. Returns the best weights and their metric.
pub fn global_grid_search(
    tables: &[ScoreTable],
    ctx: &EvalContext,
    rule: FusionRule,
    step: f64,
    objective: GridObjective,
    epsilon_score: f64,
) -> Result<(WeightVector, f64)> {
    ensure_same_universe(tables)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step must be in (0, 1], got {step}"
        )));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid step {step} does not divide 1 evenly"
        )));
    }
    let n = n as u64;
    let k = tables.len();
    if simplex_grid_size(k, n) > 10_000_000 {
        return Err(Error::InvalidParameter(format!(
            "grid for K={k}, step={step} exceeds 10^7 points; use a larger step"
        )));
    }

    let mut best: Option<(WeightVector, f64)> = None;
    let mut counts = vec![0u64; k];
    enumerate_compositions(n, 0, &mut counts, &mut |counts| {
        let weights = WeightVector::new(counts.iter().map(|&c| c as f64 / n as f64).collect())?;
        let rankings = fixed_weight_rankings(tables, ctx, &weights, rule, epsilon_score)?;
        let metric = metric_of(&rankings, ctx, objective)?;
        match &best {
            Some((_, best_metric)) if metric <= *best_metric => {}
            _ => best = Some((weights, metric)),
        }
        Ok(())
    })?;
    best.ok_or_else(|| Error::Internal("grid enumeration produced no points".into()))
}

/// Visit all compositions of `n` into `counts.len()` parts, in descending
/// lexicographic order of the counts vector.
fn enumerate_compositions(
    n: u64,
    pos: usize,
    counts: &mut Vec<u64>,
    visit: &mut impl FnMut(&[u64]) -> Result<()>,
) -> Result<()> {
    if pos == counts.len() - 1 {
        counts[pos] = n;
        return visit(counts);
    }
    let mut c = n;
    loop {
        counts[pos] = c;
        enumerate_compositions(n - c, pos + 1, counts, visit)?;
        if c == 0 {
            break;
        }
        c -= 1;
    }
    Ok(())
}
