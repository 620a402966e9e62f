//! `compare`: run several fusion methods over identical inputs and tabulate
//! their metrics.

use std::path::PathBuf;

use clap::Args;

use qafusion::eval::{
    evaluate_rankings, fixed_weight_rankings, global_grid_search, rank_aggregation_rankings,
    single_feature_rankings, uniform_rankings, MetricReport,
};
use qafusion::qaf::FusionRule;
use qafusion::sqaf;

use crate::artifacts::{print_report_line, write_compare_csv, write_meta, write_report_json};
use crate::config::{ConfigOverlay, QrelsMode, RunConfig};
use crate::{require_file, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Method {
    SingleFeature,
    Uniform,
    RankAggregation,
    GridSearch,
    Qaf,
    Sqaf,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single-feature" => Ok(Self::SingleFeature),
            "uniform" => Ok(Self::Uniform),
            "rank-aggregation" => Ok(Self::RankAggregation),
            "grid-search" => Ok(Self::GridSearch),
            "qaf" => Ok(Self::Qaf),
            "sqaf" => Ok(Self::Sqaf),
            other => Err(format!(
                "unknown method {other:?} (expected single-feature, uniform, \
                 rank-aggregation, grid-search, qaf, sqaf)"
            )),
        }
    }
}

#[derive(Args)]
pub struct CompareArgs {
    /// Score file(s); every feature must cover the same universe.
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    /// Ground-truth file.
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated subset of: single-feature, uniform, rank-aggregation,
    /// grid-search, qaf, sqaf.
    #[arg(long)]
    methods: String,
    /// Reference codebooks (needed by qaf).
    #[arg(long, num_args = 1..)]
    codebooks: Vec<PathBuf>,
    /// Trained model checkpoint (needed by sqaf).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fusion rule: sum or product.
    #[arg(long)]
    rule: Option<String>,
    /// Grid-search step.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Qrels interpretation: pairs or identity.
    #[arg(long)]
    qrels_mode: Option<String>,
    /// Also evaluate with query and gallery roles switched, reporting each
    /// direction plus their average.
    #[arg(long)]
    switch_and_average: bool,
    /// Structured JSON output.
    #[arg(long)]
    out_json: PathBuf,
    /// Summary CSV output.
    #[arg(long)]
    out_csv: PathBuf,
}

pub fn run(args: CompareArgs) -> Result<(), CliError> {
    let rule = args
        .rule
        .as_deref()
        .map(str::parse::<FusionRule>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let qrels_mode = args
        .qrels_mode
        .as_deref()
        .map(str::parse::<QrelsMode>)
        .transpose()
        .map_err(CliError::Usage)?;
    let cfg = RunConfig::resolve(
        args.config.as_deref(),
        ConfigOverlay {
            rule,
            grid_step: args.grid_step,
            qrels_mode,
            ..ConfigOverlay::default()
        },
    )?;

    let mut methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<_, _>>()
        .map_err(CliError::Usage)?;
    methods.sort();
    methods.dedup();
    if methods.contains(&Method::Qaf) && args.codebooks.is_empty() {
        return Err(CliError::Usage(
            "method qaf requires --codebooks <file...>".into(),
        ));
    }
    if methods.contains(&Method::Sqaf) && args.model.is_none() {
        return Err(CliError::Usage(
            "method sqaf requires --model <file>".into(),
        ));
    }

    let tables = super::load_tables(&args.scores)?;
    let qrels = super::load_qrels(
        &args.qrels,
        &cfg,
        &tables[0].query_ids,
        &tables[0].gallery_ids,
    )?;
    let ctx = super::eval_context(&tables, &qrels)?;
    let forward = run_methods(&methods, &tables, &ctx, &cfg, &args)?;

    let reports = if args.switch_and_average {
        let switched_tables: Vec<_> = tables.iter().map(|t| t.transposed()).collect();
        let switched_qrels = match cfg.qrels_mode {
            QrelsMode::Pairs => qrels.inverted(),
            QrelsMode::Identity => super::load_qrels(
                &args.qrels,
                &cfg,
                &switched_tables[0].query_ids,
                &switched_tables[0].gallery_ids,
            )?,
        };
        let switched_ctx = super::eval_context(&switched_tables, &switched_qrels)?;
        let switched = run_methods(&methods, &switched_tables, &switched_ctx, &cfg, &args)?;
        let mut combined = Vec::with_capacity(forward.len() * 3);
        for (a, mut b) in forward.into_iter().zip(switched) {
            let avg = MetricReport {
                method: format!("{}:avg", a.method),
                map: (a.map + b.map) / 2.0,
                ns_score: a.ns_score.zip(b.ns_score).map(|(x, y)| (x + y) / 2.0),
                rank1: (a.rank1 + b.rank1) / 2.0,
                num_queries: a.num_queries + b.num_queries,
                per_query_ap: Vec::new(),
            };
            b.method = format!("{}:switched", b.method);
            combined.push(a);
            combined.push(b);
            combined.push(avg);
        }
        combined
    } else {
        forward
    };

    for report in &reports {
        print_report_line(report);
    }
    write_report_json(&args.out_json, &cfg, &reports)?;
    write_compare_csv(&args.out_csv, &reports)?;
    write_meta(&args.out_csv, "compare", &cfg)?;
    Ok(())
}

fn run_methods(
    methods: &[Method],
    tables: &[qafusion::table::ScoreTable],
    ctx: &qafusion::eval::EvalContext,
    cfg: &crate::config::RunConfig,
    args: &CompareArgs,
) -> Result<Vec<MetricReport>, CliError> {
    let mut reports: Vec<MetricReport> = Vec::new();
    for method in methods {
        match method {
            Method::SingleFeature => {
                for table in tables {
                    let rankings = single_feature_rankings(table, ctx)?;
                    reports.push(evaluate_rankings(
                        format!("single:{}", table.feature_id),
                        &rankings,
                        ctx,
                    )?);
                }
            }
            Method::Uniform => {
                let rankings = uniform_rankings(tables, ctx, cfg.rule, cfg.epsilon_score)?;
                reports.push(evaluate_rankings("uniform", &rankings, ctx)?);
            }
            Method::RankAggregation => {
                let rankings = rank_aggregation_rankings(tables, ctx)?;
                reports.push(evaluate_rankings("rank-aggregation", &rankings, ctx)?);
            }
            Method::GridSearch => {
                let (weights, _) = global_grid_search(
                    tables,
                    ctx,
                    cfg.rule,
                    cfg.grid_step,
                    cfg.grid_objective,
                    cfg.epsilon_score,
                )?;
                let rankings =
                    fixed_weight_rankings(tables, ctx, &weights, cfg.rule, cfg.epsilon_score)?;
                reports.push(evaluate_rankings("grid-search", &rankings, ctx)?);
            }
            Method::Qaf => {
                let codebooks = super::align_codebooks(tables, &args.codebooks)?;
                let pipeline = super::prepare_qaf(tables, &codebooks, cfg)?;
                let rankings: Vec<Vec<usize>> = ctx
                    .evaluated
                    .iter()
                    .map(|&qi| {
                        let rows: Vec<&[f64]> = tables.iter().map(|t| t.row(qi)).collect();
                        Ok(pipeline.query_rows(&rows)?.ranking)
                    })
                    .collect::<Result<_, CliError>>()?;
                reports.push(evaluate_rankings("qaf", &rankings, ctx)?);
            }
            Method::Sqaf => {
                let model_path = args.model.as_ref().unwrap();
                require_file(model_path, "model checkpoint")?;
                let (model, _) = sqaf::load_model(model_path)?;
                if model.arch.input_channels != tables.len() {
                    return Err(CliError::Data(format!(
                        "model expects {} features but {} score tables were given",
                        model.arch.input_channels,
                        tables.len()
                    )));
                }
                let (rankings, _) =
                    sqaf::predict_rankings(&model, tables, ctx, cfg.rule, cfg.epsilon_score)?;
                reports.push(evaluate_rankings("sqaf", &rankings, ctx)?);
            }
        }
    }
    Ok(reports)
}
