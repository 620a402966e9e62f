//! `fuse`: produce a fused ranking file, with per-query weights estimated
//! either unsupervised (reference codebooks) or by a trained model.

use std::path::PathBuf;

use clap::Args;

use qafusion::qaf::{FusionRule, WeightVector};
use qafusion::reference::MatchMethod;
use qafusion::sqaf;

use crate::artifacts::{write_meta, write_ranking_file, write_weights_file, QueryRanking};
use crate::config::{ConfigOverlay, RunConfig};
use crate::{require_file, CliError};

#[derive(Args)]
pub struct FuseArgs {
    /// Score file(s); every feature must cover the same universe.
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    /// Reference codebooks (one per feature) for unsupervised weighting.
    #[arg(long, num_args = 1..)]
    codebooks: Vec<PathBuf>,
    /// Trained model checkpoint for supervised weighting.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fusion rule: sum or product.
    #[arg(long)]
    rule: Option<String>,
    /// Down-sampled curve length for weight estimation.
    #[arg(long)]
    curve_len: Option<usize>,
    /// Match segment start rank.
    #[arg(long)]
    u: Option<usize>,
    /// Match segment end rank.
    #[arg(long)]
    v: Option<usize>,
    /// Nearest references averaged in knn matching.
    #[arg(long)]
    k: Option<usize>,
    /// Reference matching method: nearest or knn_average.
    #[arg(long)]
    method: Option<String>,
    /// Output ranking file (CSV: query,gallery,fused_score,rank).
    #[arg(long)]
    out: PathBuf,
    /// Per-query weights sidecar (default: `<out>.weights.csv`).
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

pub fn run(args: FuseArgs) -> Result<(), CliError> {
    let rule = args
        .rule
        .as_deref()
        .map(str::parse::<FusionRule>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let method = args
        .method
        .as_deref()
        .map(str::parse::<MatchMethod>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = RunConfig::resolve(
        args.config.as_deref(),
        ConfigOverlay {
            rule,
            curve_len: args.curve_len,
            match_u: args.u,
            match_v: args.v,
            match_k: args.k,
            match_method: method,
            ..ConfigOverlay::default()
        },
    )?;

    let tables = super::load_tables(&args.scores)?;
    if args.model.is_some() && !args.codebooks.is_empty() {
        return Err(CliError::Usage(
            "--model and --codebooks are mutually exclusive".into(),
        ));
    }

    let num_queries = tables[0].num_queries();
    let mut weights: Vec<WeightVector> = Vec::with_capacity(num_queries);
    let mut fused_rankings: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(num_queries);

    if let Some(model_path) = &args.model {
        require_file(model_path, "model checkpoint")?;
        let (model, _) = sqaf::load_model(model_path)?;
        if model.arch.input_channels != tables.len() {
            return Err(CliError::Data(format!(
                "model expects {} features but {} score tables were given",
                model.arch.input_channels,
                tables.len()
            )));
        }
        for qi in 0..num_queries {
            let outcome = sqaf::predict_query(&model, &tables, qi, cfg.rule, cfg.epsilon_score)?;
            weights.push(outcome.weights);
            fused_rankings.push((outcome.ranking, outcome.fused));
        }
    } else {
        if args.codebooks.is_empty() {
            return Err(CliError::Usage(
                "fuse needs either --codebooks or --model".into(),
            ));
        }
        let codebooks = super::align_codebooks(&tables, &args.codebooks)?;
        let pipeline = super::prepare_qaf(&tables, &codebooks, &cfg)?;
        for qi in 0..num_queries {
            let rows: Vec<&[f64]> = tables.iter().map(|t| t.row(qi)).collect();
            let outcome = pipeline.query_rows(&rows)?;
            weights.push(outcome.weights);
            fused_rankings.push((outcome.ranking, outcome.fused));
        }
    }

    let query_ids = &tables[0].query_ids;
    let gallery_ids = &tables[0].gallery_ids;
    let rankings: Vec<QueryRanking<'_>> = (0..num_queries)
        .map(|qi| {
            let (ranking, fused) = &fused_rankings[qi];
            QueryRanking {
                query_id: &query_ids[qi],
                entries: ranking
                    .iter()
                    .map(|&gi| (gallery_ids[gi].as_str(), fused[gi]))
                    .collect(),
            }
        })
        .collect();
    write_ranking_file(&args.out, &rankings)?;
    write_meta(&args.out, "fuse", &cfg)?;

    let weights_path = args
        .weights_out
        .unwrap_or_else(|| args.out.with_extension("weights.csv"));
    let feature_ids: Vec<String> = tables.iter().map(|t| t.feature_id.clone()).collect();
    let rows: Vec<(&str, &WeightVector)> = (0..num_queries)
        .map(|qi| (query_ids[qi].as_str(), &weights[qi]))
        .collect();
    write_weights_file(&weights_path, &feature_ids, &rows)?;
    write_meta(&weights_path, "fuse", &cfg)?;

    println!(
        "fused {} features over {} queries ({} rule) -> {}",
        tables.len(),
        num_queries,
        cfg.rule,
        args.out.display()
    );
    Ok(())
}
