//! `train`: fit the supervised weight-prediction network.

use std::path::PathBuf;

use clap::Args;

use qafusion::sqaf::{build_dataset, save_model, train, Architecture};

use crate::artifacts::write_meta;
use crate::config::{ConfigOverlay, QrelsMode, RunConfig};
use crate::CliError;

#[derive(Args)]
pub struct TrainArgs {
    /// Score file(s) of the training split.
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    /// Ground-truth file.
    #[arg(long)]
    qrels: PathBuf,
    /// Qrels interpretation: pairs or identity.
    #[arg(long)]
    qrels_mode: Option<String>,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Curve prefix length fed to the network (m).
    #[arg(long)]
    m: Option<usize>,
    /// Margin d of the objective.
    #[arg(long)]
    margin: Option<f64>,
    /// Hard-negative ratio.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initialization and shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output model checkpoint.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
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
            prefix_len: args.m,
            margin: args.margin,
            alpha: args.alpha,
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            batch_size: args.batch_size,
            train_seed: args.seed,
            ..ConfigOverlay::default()
        },
    )?;

    let tables = super::load_tables(&args.scores)?;
    let qrels = super::load_qrels(
        &args.qrels,
        &cfg,
        &tables[0].query_ids,
        &tables[0].gallery_ids,
    )?;
    let ctx = super::eval_context(&tables, &qrels)?;

    let (dataset, _) = build_dataset(&tables, &ctx, cfg.prefix_len)?;
    let arch = Architecture::standard(tables.len(), cfg.prefix_len);
    let train_cfg = cfg.train_config();
    let (model, log) = train(&dataset, &arch, &train_cfg)?;
    save_model(&args.out, &model, Some(&train_cfg))?;
    write_meta(&args.out, "train", &cfg)?;

    let first = log.epoch_mean_loss.first().copied().unwrap_or(0.0);
    let last = log.epoch_mean_loss.last().copied().unwrap_or(0.0);
    println!(
        "trained on {} queries for {} epochs: mean loss {first:.4} -> {last:.4} ({} params) -> {}",
        dataset.len(),
        train_cfg.epochs,
        model.num_params(),
        args.out.display()
    );
    Ok(())
}
