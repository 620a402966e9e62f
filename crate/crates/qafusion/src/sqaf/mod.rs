//! Supervised query-adaptive fusion: a small 1-D convolutional network maps
//! the stacked top-m score curves of a query to K fusion weights, trained
//! end-to-end through sum-rule fusion against a margin objective with
//! hard-negative mining.

mod loss;
mod net;
mod stack;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::sort_descending;
use crate::error::Result;
use crate::eval::EvalContext;
use crate::io::{read_json_file, write_json_file};
use crate::qaf::{fuse, fuse_sum, FusionRule, WeightVector};
use crate::table::{ensure_same_universe, ScoreTable};

pub use loss::{hard_negative_count, margin_loss, margin_loss_with_grad, MatchPartition};
pub use net::{Architecture, LayerSpec, SqafModel};
pub use stack::CurveStack;
pub use train::{build_dataset, train, TrainConfig, TrainLog, TrainSample};

/// Loss and flat parameter gradient for one sample. The gradient is `None`
/// when the hinge is inactive.
fn sample_loss_and_grad(
    model: &SqafModel,
    stack: &CurveStack,
    partition: &MatchPartition,
    scores: &[Vec<f64>],
    margin: f64,
    alpha: f64,
) -> Result<(f64, Option<Vec<f64>>)> {
    let trace = model.forward_trace(stack)?;
    let weights = WeightVector::new(trace.output().data.clone())?;
    let fused = fuse_sum(scores, &weights)?;
    let (loss, fused_grad) = margin_loss_with_grad(&fused, partition, margin, alpha)?;
    let Some(fused_grad) = fused_grad else {
        return Ok((loss, None));
    };
    // d loss / d w_i through the sum rule: sum_g (d loss / d fused_g) s_i[g].
    let weight_grad: Vec<f64> = scores
        .iter()
        .map(|row| row.iter().zip(&fused_grad).map(|(s, g)| s * g).sum())
        .collect();
    Ok((loss, Some(model.backward_trace(&trace, &weight_grad))))
}

/// Exact gradient of the full objective (network -> sum-rule fusion ->
/// margin loss with mining) w.r.t. every model parameter. Returns the loss
/// and the flat gradient; the gradient is all zeros when the hinge is
/// inactive.
pub fn backward(
    model: &SqafModel,
    stack: &CurveStack,
    partition: &MatchPartition,
    scores: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let (loss, grad) =
        sample_loss_and_grad(model, stack, partition, scores, cfg.margin, cfg.alpha)?;
    Ok((loss, grad.unwrap_or_else(|| vec![0.0; model.num_params()])))
}

/// One query's network-weighted fusion result.
#[derive(Debug, Clone)]
pub struct SqafOutcome {
    pub weights: WeightVector,
    /// Fused score per gallery item, aligned with the input rows.
    pub fused: Vec<f64>,
    /// Gallery indices in descending fused-score order.
    pub ranking: Vec<usize>,
}

/// Rank the evaluated queries with network-predicted weights.
///
/// Returns per-query rankings (aligned with `ctx.evaluated`) and the
/// predicted weight vectors.
pub fn predict_rankings(
    model: &SqafModel,
    tables: &[ScoreTable],
    ctx: &EvalContext,
    rule: FusionRule,
    epsilon_score: f64,
) -> Result<(Vec<Vec<usize>>, Vec<WeightVector>)> {
    ensure_same_universe(tables)?;
    let mut rankings = Vec::with_capacity(ctx.evaluated.len());
    let mut weights_out = Vec::with_capacity(ctx.evaluated.len());
    for &qi in &ctx.evaluated {
        let outcome = predict_query(model, tables, qi, rule, epsilon_score)?;
        rankings.push(outcome.ranking);
        weights_out.push(outcome.weights);
    }
    Ok((rankings, weights_out))
}

/// Fuse a single query with network-predicted weights.
pub fn predict_query(
    model: &SqafModel,
    tables: &[ScoreTable],
    query_index: usize,
    rule: FusionRule,
    epsilon_score: f64,
) -> Result<SqafOutcome> {
    let mut sorted_values = Vec::with_capacity(tables.len());
    let mut rows = Vec::with_capacity(tables.len());
    for table in tables {
        sorted_values.push(table.sorted_curve(query_index)?.values);
        rows.push(table.row(query_index));
    }
    let refs: Vec<&[f64]> = sorted_values.iter().map(|v| v.as_slice()).collect();
    let stack = CurveStack::from_sorted_values(&refs, model.arch.input_len)?;
    let weights = model.forward(&stack)?;
    let fused = fuse(&rows, &weights, rule, epsilon_score)?;
    let ranking = sort_descending(&fused)?.origin;
    Ok(SqafOutcome {
        weights,
        fused,
        ranking,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    architecture: Architecture,
    params: Vec<f64>,
    seed: u64,
    train_config: Option<TrainConfig>,
}

/// Write a model checkpoint: architecture descriptor, flat parameters, init
/// seed, and the training-config snapshot. Floats round-trip exactly.
pub fn save_model(
    path: &Path,
    model: &SqafModel,
    train_config: Option<&TrainConfig>,
) -> Result<()> {
    let file = ModelFile {
        architecture: model.arch.clone(),
        params: model.params.clone(),
        seed: model.seed,
        train_config: train_config.cloned(),
    };
    write_json_file(path, &file)
}

/// Load a model checkpoint.
pub fn load_model(path: &Path) -> Result<(SqafModel, Option<TrainConfig>)> {
    let file: ModelFile = read_json_file(path)?;
    let model = SqafModel::from_params(file.architecture, file.params, file.seed)?;
    Ok((model, file.train_config))
}
