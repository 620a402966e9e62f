//! Output artifact formats and provenance sidecars.
//!
//! JSON reports embed the resolved run configuration directly; line-oriented
//! artifacts (score files, qrels, CSV) get a `<path>.meta.json` sidecar with
//! the same payload. Nothing here writes timestamps or absolute paths, so
//! reruns with identical inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qafusion::error::Error;
use qafusion::eval::MetricReport;
use qafusion::io::{fmt_f64, write_json_file};
use qafusion::qaf::WeightVector;

use crate::config::RunConfig;
use crate::CliError;

/// Provenance sidecar path for a line-oriented artifact.
pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    artifact.with_file_name(name)
}

#[derive(Serialize)]
struct Meta<'a, T: Serialize> {
    command: &'a str,
    config: &'a T,
}

/// Write the `<path>.meta.json` sidecar.
pub fn write_meta<T: Serialize>(
    artifact: &Path,
    command: &str,
    config: &T,
) -> Result<(), CliError> {
    write_json_file(&meta_path(artifact), &Meta { command, config }).map_err(CliError::from)
}

/// One query's fused result, ready for the ranking file.
pub struct QueryRanking<'a> {
    pub query_id: &'a str,
    /// (gallery_id, fused_score) in descending rank order.
    pub entries: Vec<(&'a str, f64)>,
}

/// Write the ranking file: CSV of `query,gallery,fused_score,rank`, queries
/// in the given (canonical) order.
pub fn write_ranking_file(path: &Path, rankings: &[QueryRanking<'_>]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    writeln!(w, "query,gallery,fused_score,rank").map_err(Error::from)?;
    for qr in rankings {
        for (rank, (gallery, score)) in qr.entries.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                qr.query_id,
                gallery,
                fmt_f64(*score),
                rank + 1
            )
            .map_err(Error::from)?;
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// Parsed ranking file: per query (in file order), gallery ids in rank order.
pub struct RankingFile {
    pub queries: Vec<String>,
    pub rankings: Vec<Vec<String>>,
}

pub fn read_ranking_file(path: &Path) -> Result<RankingFile, CliError> {
    let reader = BufReader::new(File::open(path).map_err(Error::from)?);
    let mut queries: Vec<String> = Vec::new();
    let mut rankings: Vec<Vec<String>> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::from)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed == "query,gallery,fused_score,rank") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Data(format!(
                "ranking file line {}: expected 4 comma-separated fields",
                lineno + 1
            )));
        }
        let (query, gallery, rank_str) = (fields[0], fields[1], fields[3]);
        let rank: usize = rank_str.parse().map_err(|_| {
            CliError::Data(format!(
                "ranking file line {}: bad rank {rank_str:?}",
                lineno + 1
            ))
        })?;
        let qi = *index.entry(query.to_string()).or_insert_with(|| {
            queries.push(query.to_string());
            rankings.push(Vec::new());
            queries.len() - 1
        });
        if rank != rankings[qi].len() + 1 {
            return Err(CliError::Data(format!(
                "ranking file line {}: query {query} has rank {rank} out of order",
                lineno + 1
            )));
        }
        rankings[qi].push(gallery.to_string());
    }
    if queries.is_empty() {
        return Err(CliError::Data("ranking file is empty".into()));
    }
    let gallery_len = rankings[0].len();
    if rankings.iter().any(|r| r.len() != gallery_len) {
        return Err(CliError::Data(
            "ranking file queries cover differently sized galleries".into(),
        ));
    }
    Ok(RankingFile { queries, rankings })
}

/// Write the per-query weights sidecar: CSV of `query,<feature...>`.
pub fn write_weights_file(
    path: &Path,
    feature_ids: &[String],
    rows: &[(&str, &WeightVector)],
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    writeln!(w, "query,{}", feature_ids.join(",")).map_err(Error::from)?;
    for (query, weights) in rows {
        let cells: Vec<String> = weights.as_slice().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{},{}", query, cells.join(",")).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// A metric report bundled with the resolved configuration.
#[derive(Serialize)]
pub struct ReportDocument<'a> {
    pub config: &'a RunConfig,
    pub reports: &'a [MetricReport],
}

pub fn write_report_json(
    path: &Path,
    config: &RunConfig,
    reports: &[MetricReport],
) -> Result<(), CliError> {
    write_json_file(path, &ReportDocument { config, reports }).map_err(CliError::from)
}

/// Method-by-metric summary table.
pub fn write_compare_csv(path: &Path, reports: &[MetricReport]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    writeln!(w, "method,map,ns_score,rank1,num_queries").map_err(Error::from)?;
    for r in reports {
        let ns = r.ns_score.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method,
            fmt_f64(r.map),
            ns,
            fmt_f64(r.rank1),
            r.num_queries
        )
        .map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// Per-query AP breakdown of one report.
pub fn write_per_query_csv(path: &Path, reports: &[MetricReport]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    writeln!(w, "method,query,ap").map_err(Error::from)?;
    for r in reports {
        for q in &r.per_query_ap {
            writeln!(w, "{},{},{}", r.method, q.query, fmt_f64(q.ap)).map_err(Error::from)?;
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

/// Pretty-print a one-line summary of a report to stdout.
pub fn print_report_line(r: &MetricReport) {
    let ns = r
        .ns_score
        .map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "-".into());
    println!(
        "{:<24} mAP {:.4}  N-S {}  rank-1 {:.4}  ({} queries)",
        r.method, r.map, ns, r.rank1, r.num_queries
    );
}
