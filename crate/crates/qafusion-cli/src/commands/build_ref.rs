//! `build-ref`: build a per-feature reference codebook from an
//! irrelevant-corpus score file.

use std::path::PathBuf;

use clap::Args;

use qafusion::reference::build_codebook;

use crate::artifacts::write_meta;
use crate::config::{ConfigOverlay, RunConfig};
use crate::CliError;

#[derive(Args)]
pub struct BuildRefArgs {
    /// Irrelevant-corpus score file (no query may have a true match).
    #[arg(long)]
    scores: PathBuf,
    /// Feature id to build the codebook for.
    #[arg(long)]
    feature: String,
    /// Optional TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Codebook size Q (overrides config `codebook_q`).
    #[arg(long)]
    q: Option<usize>,
    /// Stored curve length (overrides config `curve_len`).
    #[arg(long)]
    len: Option<usize>,
    /// Sampling seed (overrides config `ref_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Free-text note on the irrelevant corpus used.
    #[arg(long)]
    provenance: Option<String>,
    /// Output codebook file.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: BuildRefArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(
        args.config.as_deref(),
        ConfigOverlay {
            codebook_q: args.q,
            curve_len: args.len,
            ref_seed: args.seed,
            ..ConfigOverlay::default()
        },
    )?;

    let tables = super::load_tables(std::slice::from_ref(&args.scores))?;
    let table = tables
        .iter()
        .find(|t| t.feature_id == args.feature)
        .ok_or_else(|| {
            let available: Vec<&str> = tables.iter().map(|t| t.feature_id.as_str()).collect();
            CliError::Usage(format!(
                "feature {} not in score file (available: {})",
                args.feature,
                available.join(", ")
            ))
        })?;

    let provenance = args.provenance.unwrap_or_else(|| {
        format!(
            "irrelevant corpus from {}",
            args.scores
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        )
    });
    let codebook = build_codebook(
        table,
        cfg.codebook_q,
        cfg.curve_len,
        cfg.ref_seed,
        provenance,
    )?;
    codebook.save(&args.out)?;
    write_meta(&args.out, "build-ref", &cfg)?;
    println!(
        "codebook for {}: Q={} curve_len={} -> {}",
        codebook.feature_id,
        codebook.q(),
        codebook.curve_len,
        args.out.display()
    );
    Ok(())
}
