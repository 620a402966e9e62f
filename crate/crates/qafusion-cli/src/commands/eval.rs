//! `eval`: score a ranking file against qrels.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use qafusion::eval::{evaluate_rankings, EvalContext};

use crate::artifacts::{
    print_report_line, read_ranking_file, write_meta, write_per_query_csv, write_report_json,
};
use crate::config::{ConfigOverlay, QrelsMode, RunConfig};
use crate::{require_file, CliError};

#[derive(Args)]
pub struct EvalArgs {
    /// Ranking file produced by `fuse`.
    #[arg(long)]
    ranking: PathBuf,
    /// Ground-truth file.
    #[arg(long)]
    qrels: PathBuf,
    /// Qrels interpretation: pairs or identity.
    #[arg(long)]
    qrels_mode: Option<String>,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Method label for the report (default: ranking file stem).
    #[arg(long)]
    method: Option<String>,
    /// Structured JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Flat CSV of per-query average precision.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let qrels_mode = args
        .qrels_mode
        .as_deref()
        .map(str::parse::<QrelsMode>)
        .transpose()
        .map_err(CliError::Usage)?;
    let cfg = RunConfig::resolve(
        args.config.as_deref(),
        ConfigOverlay {
            qrels_mode,
            ..ConfigOverlay::default()
        },
    )?;

    require_file(&args.ranking, "ranking file")?;
    let file = read_ranking_file(&args.ranking)?;

    // Canonical universe: sorted ids; every query must rank the same set.
    let mut gallery_ids: Vec<String> = file.rankings[0].clone();
    gallery_ids.sort();
    let gallery_index: BTreeMap<&str, usize> = gallery_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    for (q, ranking) in file.queries.iter().zip(&file.rankings) {
        let mut seen = vec![false; gallery_ids.len()];
        for g in ranking {
            match gallery_index.get(g.as_str()) {
                Some(&gi) if !seen[gi] => seen[gi] = true,
                _ => {
                    return Err(CliError::Data(format!(
                        "query {q} does not rank the same gallery as the others"
                    )))
                }
            }
        }
    }

    let mut query_ids = file.queries.clone();
    query_ids.sort();
    let by_query: BTreeMap<&str, &Vec<String>> = file
        .queries
        .iter()
        .map(String::as_str)
        .zip(&file.rankings)
        .collect();

    let qrels = super::load_qrels(&args.qrels, &cfg, &query_ids, &gallery_ids)?;
    let ctx = EvalContext::new(&query_ids, &gallery_ids, &qrels)?;
    let rankings: Vec<Vec<usize>> = ctx
        .evaluated
        .iter()
        .map(|&qi| {
            by_query[ctx.query_ids[qi].as_str()]
                .iter()
                .map(|g| gallery_index[g.as_str()])
                .collect()
        })
        .collect();

    let method = args.method.clone().unwrap_or_else(|| {
        args.ranking
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "ranking".into())
    });
    let report = evaluate_rankings(method, &rankings, &ctx)?;
    print_report_line(&report);

    let reports = vec![report];
    write_report_json(&args.out, &cfg, &reports)?;
    if let Some(csv) = &args.csv {
        write_per_query_csv(csv, &reports)?;
        write_meta(csv, "eval", &cfg)?;
    }
    Ok(())
}
