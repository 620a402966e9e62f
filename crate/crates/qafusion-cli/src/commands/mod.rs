//! Subcommand implementations and shared input loading.

pub mod build_ref;
pub mod compare;
pub mod eval;
pub mod fuse;
pub mod synth;
pub mod train;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use qafusion::eval::{read_identity_labels, read_qrels_pairs, EvalContext, Qrels};
use qafusion::qaf::QafPipeline;
use qafusion::reference::ReferenceCodebook;
use qafusion::table::{ensure_same_universe, load_score_tables, ScoreTable};

use crate::config::{QrelsMode, RunConfig};
use crate::{require_file, CliError};

/// Load every feature table from one or more score files, enforcing unique
/// feature ids and a shared query/gallery universe.
pub(crate) fn load_tables(paths: &[PathBuf]) -> Result<Vec<ScoreTable>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("no score files given".into()));
    }
    let mut tables: Vec<ScoreTable> = Vec::new();
    for path in paths {
        require_file(path, "score file")?;
        let file = File::open(path).map_err(qafusion::Error::from)?;
        let loaded = load_score_tables(BufReader::new(file))?;
        if loaded.is_empty() {
            return Err(CliError::Data(format!(
                "score file {} holds no records",
                path.display()
            )));
        }
        for table in loaded {
            if tables.iter().any(|t| t.feature_id == table.feature_id) {
                return Err(CliError::Data(format!(
                    "feature {} appears in more than one score file",
                    table.feature_id
                )));
            }
            tables.push(table);
        }
    }
    tables.sort_by(|a, b| a.feature_id.cmp(&b.feature_id));
    ensure_same_universe(&tables)?;
    Ok(tables)
}

/// Load qrels in the configured mode, resolving identity labels against the
/// table universe when needed.
pub(crate) fn load_qrels(
    path: &Path,
    cfg: &RunConfig,
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<Qrels, CliError> {
    require_file(path, "qrels file")?;
    let reader = BufReader::new(File::open(path).map_err(qafusion::Error::from)?);
    match cfg.qrels_mode {
        QrelsMode::Pairs => Ok(read_qrels_pairs(reader)?),
        QrelsMode::Identity => {
            let labels = read_identity_labels(reader)?;
            Ok(Qrels::from_identity_labels(
                &labels,
                query_ids,
                gallery_ids,
                cfg.include_self,
            )?)
        }
    }
}

pub(crate) fn eval_context(tables: &[ScoreTable], qrels: &Qrels) -> Result<EvalContext, CliError> {
    Ok(EvalContext::new(
        &tables[0].query_ids,
        &tables[0].gallery_ids,
        qrels,
    )?)
}

/// Load codebooks and align them with the tables by feature id.
pub(crate) fn align_codebooks(
    tables: &[ScoreTable],
    paths: &[PathBuf],
) -> Result<Vec<ReferenceCodebook>, CliError> {
    let mut by_feature: BTreeMap<String, ReferenceCodebook> = BTreeMap::new();
    for path in paths {
        require_file(path, "codebook file")?;
        let cb = ReferenceCodebook::load(path)?;
        if by_feature.insert(cb.feature_id.clone(), cb).is_some() {
            return Err(CliError::Data(format!(
                "duplicate codebook for feature given: {}",
                path.display()
            )));
        }
    }
    tables
        .iter()
        .map(|t| {
            by_feature.remove(&t.feature_id).ok_or_else(|| {
                CliError::Usage(format!("no codebook provided for feature {}", t.feature_id))
            })
        })
        .collect()
}

/// Build the prepared unsupervised pipeline, surfacing the clamp warning.
pub(crate) fn prepare_qaf(
    tables: &[ScoreTable],
    codebooks: &[ReferenceCodebook],
    cfg: &RunConfig,
) -> Result<QafPipeline, CliError> {
    let qaf_cfg = cfg.qaf_config(tables.len())?;
    let pipeline = QafPipeline::new(codebooks, tables[0].num_gallery(), &qaf_cfg)?;
    if pipeline.segment_clamped() {
        eprintln!(
            "warning: match segment end v={} exceeds curve length {}; clamping",
            cfg.match_v,
            pipeline.effective_len()
        );
    }
    Ok(pipeline)
}
