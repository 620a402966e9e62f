//! Mini-batch SGD for the weight-prediction network, trained end-to-end
//! through sum-rule fusion and the margin objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalContext;
use crate::table::{ensure_same_universe, ScoreTable};

use super::loss::MatchPartition;
use super::net::{Architecture, SqafModel};
use super::sample_loss_and_grad;
use super::stack::CurveStack;

/// Training hyperparameters. Margin and hard-negative ratio default to the
/// values used throughout the experiments (d = 1, alpha = 2); the optimizer
/// is plain SGD with a constant learning rate for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            alpha: 2.0,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin < 0.0 {
            return Err(Error::InvalidParameter("margin must be >= 0".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter("alpha must be > 0".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidParameter(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training query: its stacked curve prefixes, raw per-feature score
/// rows, and the gallery's true/false match partition.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub stack: CurveStack,
    pub scores: Vec<Vec<f64>>,
    pub partition: MatchPartition,
}

impl TrainSample {
    fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.stack.num_features() != arch.input_channels
            || self.stack.prefix_len() != arch.input_len
        {
            return Err(Error::LengthMismatch {
                left: self.stack.num_features() * self.stack.prefix_len(),
                right: arch.input_channels * arch.input_len,
            });
        }
        if self.scores.len() != arch.input_channels {
            return Err(Error::LengthMismatch {
                left: self.scores.len(),
                right: arch.input_channels,
            });
        }
        let gallery = self.scores[0].len();
        if self.scores.iter().any(|row| row.len() != gallery) {
            return Err(Error::DataContract(
                "per-feature score rows must cover the same gallery".into(),
            ));
        }
        self.partition.validate(gallery)
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_mean_loss: Vec<f64>,
}

/// Train a freshly initialized model on the dataset.
///
/// Deterministic: initialization and the per-epoch shuffle both derive from
/// `cfg.seed`, so identical inputs produce bitwise-identical parameters.
pub fn train(
    dataset: &[TrainSample],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(SqafModel, TrainLog)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("training dataset is empty".into()));
    }
    for sample in dataset {
        sample.validate(arch)?;
    }

    let mut model = SqafModel::init(arch.clone(), cfg.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1); // keep shuffling independent of init draws

    let mut log = TrainLog {
        epoch_mean_loss: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grad = vec![0.0; model.num_params()];
            for &si in batch {
                let sample = &dataset[si];
                let (loss, grad) = sample_loss_and_grad(
                    &model,
                    &sample.stack,
                    &sample.partition,
                    &sample.scores,
                    cfg.margin,
                    cfg.alpha,
                )?;
                epoch_loss += loss;
                if let Some(grad) = grad {
                    for (b, g) in batch_grad.iter_mut().zip(&grad) {
                        *b += g;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (p, g) in model.params.iter_mut().zip(&batch_grad) {
                *p -= scale * g;
            }
        }
        log.epoch_mean_loss.push(epoch_loss / dataset.len() as f64);
    }
    Ok((model, log))
}

/// Assemble training samples from score tables and an evaluation context:
/// one sample per evaluated query that has both true and false matches.
/// Returns the samples and the corresponding query indices.
pub fn build_dataset(
    tables: &[ScoreTable],
    ctx: &EvalContext,
    prefix_len: usize,
) -> Result<(Vec<TrainSample>, Vec<usize>)> {
    ensure_same_universe(tables)?;
    let gallery_len = tables[0].num_gallery();
    let mut samples = Vec::new();
    let mut query_indices = Vec::new();
    for (pos, &qi) in ctx.evaluated.iter().enumerate() {
        let partition = MatchPartition::from_relevant(&ctx.relevant[pos], gallery_len);
        if partition.num_positive() == 0 || partition.num_negative() == 0 {
            continue;
        }
        let mut sorted_values = Vec::with_capacity(tables.len());
        let mut scores = Vec::with_capacity(tables.len());
        for table in tables {
            let curve = table.sorted_curve(qi)?;
            scores.push(table.row(qi).to_vec());
            sorted_values.push(curve.values);
        }
        let refs: Vec<&[f64]> = sorted_values.iter().map(|v| v.as_slice()).collect();
        let stack = CurveStack::from_sorted_values(&refs, prefix_len)?;
        samples.push(TrainSample {
            stack,
            scores,
            partition,
        });
        query_indices.push(qi);
    }
    if samples.is_empty() {
        return Err(Error::DataContract(
            "no query has both true and false matches".into(),
        ));
    }
    Ok((samples, query_indices))
}
