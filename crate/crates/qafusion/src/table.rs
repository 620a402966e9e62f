//! Dense per-feature score tables and their line-oriented file format.
//!
//! The canonical input to every pipeline is a text file of JSON objects, one
//! per line: `{"feature": str, "query": str, "gallery": str, "score": float}`.
//! The loader assembles one dense matrix per feature and rejects duplicate
//! (feature, query, gallery) triples and ragged coverage. Query and gallery
//! ids are canonicalized to lexicographic order so identical inputs always
//! produce identical tables regardless of line order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::curve::{sort_descending, SortedCurve};
use crate::error::{Error, Result};
use crate::io::to_json_string;

/// Raw similarity scores of every gallery item to every query, for one
/// feature. Rows are queries, columns are gallery items.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub feature_id: String,
    pub query_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    /// Build a table, validating dimensions and score finiteness.
    pub fn new(
        feature_id: impl Into<String>,
        query_ids: Vec<String>,
        gallery_ids: Vec<String>,
        scores: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let feature_id = feature_id.into();
        if scores.len() != query_ids.len() {
            return Err(Error::DataContract(format!(
                "feature {feature_id}: {} score rows for {} queries",
                scores.len(),
                query_ids.len()
            )));
        }
        for (qi, row) in scores.iter().enumerate() {
            if row.len() != gallery_ids.len() {
                return Err(Error::DataContract(format!(
                    "feature {feature_id}, query {}: row has {} scores for {} gallery items",
                    query_ids[qi],
                    row.len(),
                    gallery_ids.len()
                )));
            }
            if let Some(gi) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::DataContract(format!(
                    "feature {feature_id}: non-finite score at query {} gallery {}",
                    query_ids[qi], gallery_ids[gi]
                )));
            }
        }
        Ok(Self {
            feature_id,
            query_ids,
            gallery_ids,
            scores,
        })
    }

    pub fn num_queries(&self) -> usize {
        self.query_ids.len()
    }

    pub fn num_gallery(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn row(&self, query_index: usize) -> &[f64] {
        &self.scores[query_index]
    }

    pub fn query_index(&self, query_id: &str) -> Option<usize> {
        self.query_ids.iter().position(|q| q == query_id)
    }

    /// The query's score curve for this feature, sorted descending.
    pub fn sorted_curve(&self, query_index: usize) -> Result<SortedCurve> {
        sort_descending(&self.scores[query_index])
    }

    /// Swap the roles of queries and gallery: row (q, g) becomes (g, q).
    /// Supports the switch-and-average evaluation protocol.
    pub fn transposed(&self) -> ScoreTable {
        let mut scores = vec![vec![0.0; self.query_ids.len()]; self.gallery_ids.len()];
        for (qi, row) in self.scores.iter().enumerate() {
            for (gi, &score) in row.iter().enumerate() {
                scores[gi][qi] = score;
            }
        }
        ScoreTable {
            feature_id: self.feature_id.clone(),
            query_ids: self.gallery_ids.clone(),
            gallery_ids: self.query_ids.clone(),
            scores,
        }
    }
}

/// One line of the score file.
#[derive(Debug, Serialize, Deserialize)]
struct ScoreRecord {
    feature: String,
    query: String,
    gallery: String,
    score: f64,
}

/// Load all feature tables from a line-oriented score file.
///
/// Returns tables sorted by feature id, each with lexicographically sorted
/// query and gallery ids.
pub fn load_score_tables(reader: impl BufRead) -> Result<Vec<ScoreTable>> {
    struct FeatureAcc {
        queries: BTreeSet<String>,
        galleries: BTreeSet<String>,
        records: Vec<(String, String, f64)>,
    }

    let mut features: BTreeMap<String, FeatureAcc> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(trimmed)
            .map_err(|e| Error::DataContract(format!("score file line {}: {e}", lineno + 1)))?;
        if !rec.score.is_finite() {
            return Err(Error::DataContract(format!(
                "score file line {}: non-finite score",
                lineno + 1
            )));
        }
        let acc = features.entry(rec.feature).or_insert_with(|| FeatureAcc {
            queries: BTreeSet::new(),
            galleries: BTreeSet::new(),
            records: Vec::new(),
        });
        acc.queries.insert(rec.query.clone());
        acc.galleries.insert(rec.gallery.clone());
        acc.records.push((rec.query, rec.gallery, rec.score));
    }

    let mut tables = Vec::with_capacity(features.len());
    for (feature_id, acc) in features {
        let query_ids: Vec<String> = acc.queries.into_iter().collect();
        let gallery_ids: Vec<String> = acc.galleries.into_iter().collect();
        let q_index: BTreeMap<&str, usize> = query_ids
            .iter()
            .enumerate()
            .map(|(i, q)| (q.as_str(), i))
            .collect();
        let g_index: BTreeMap<&str, usize> = gallery_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();

        let mut scores = vec![vec![0.0; gallery_ids.len()]; query_ids.len()];
        let mut filled = vec![vec![false; gallery_ids.len()]; query_ids.len()];
        for (query, gallery, score) in acc.records {
            let qi = q_index[query.as_str()];
            let gi = g_index[gallery.as_str()];
            if filled[qi][gi] {
                return Err(Error::DataContract(format!(
                    "duplicate score entry for ({feature_id}, {query}, {gallery})"
                )));
            }
            filled[qi][gi] = true;
            scores[qi][gi] = score;
        }
        for (qi, row) in filled.iter().enumerate() {
            if let Some(gi) = row.iter().position(|&f| !f) {
                return Err(Error::DataContract(format!(
                    "ragged coverage: feature {feature_id} is missing score for ({}, {})",
                    query_ids[qi], gallery_ids[gi]
                )));
            }
        }
        tables.push(ScoreTable::new(feature_id, query_ids, gallery_ids, scores)?);
    }
    Ok(tables)
}

/// Write tables in the line-oriented score format, in canonical
/// (feature, query, gallery) order with 17-digit floats.
pub fn write_score_tables(writer: &mut impl Write, tables: &[ScoreTable]) -> Result<()> {
    for table in tables {
        for (qi, query) in table.query_ids.iter().enumerate() {
            for (gi, gallery) in table.gallery_ids.iter().enumerate() {
                let rec = ScoreRecord {
                    feature: table.feature_id.clone(),
                    query: query.clone(),
                    gallery: gallery.clone(),
                    score: table.scores[qi][gi],
                };
                writeln!(writer, "{}", to_json_string(&rec)?)?;
            }
        }
    }
    Ok(())
}

/// Check that every table covers the same query and gallery universe.
pub fn ensure_same_universe(tables: &[ScoreTable]) -> Result<()> {
    let Some(first) = tables.first() else {
        return Err(Error::DataContract("no score tables provided".into()));
    };
    for table in &tables[1..] {
        if table.query_ids != first.query_ids {
            return Err(Error::DataContract(format!(
                "mismatched query universes between features {} and {}",
                first.feature_id, table.feature_id
            )));
        }
        if table.gallery_ids != first.gallery_ids {
            return Err(Error::DataContract(format!(
                "mismatched gallery universes between features {} and {}",
                first.feature_id, table.feature_id
            )));
        }
    }
    Ok(())
}
