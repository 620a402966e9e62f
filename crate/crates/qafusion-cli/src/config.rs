//! Flat run configuration: defaults, overridden by an optional TOML config
//! file, overridden by command-line flags. Unknown keys in the file are an
//! error. The fully resolved config is echoed into every output artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qafusion::eval::GridObjective;
use qafusion::qaf::{FusionRule, QafConfig};
use qafusion::reference::{MatchConfig, MatchMethod};
use qafusion::sqaf::TrainConfig;

use crate::CliError;

/// How the qrels file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QrelsMode {
    /// Lines of "query_id gallery_id".
    Pairs,
    /// Lines of "item_id identity_label"; relevance is label equality.
    Identity,
}

impl std::str::FromStr for QrelsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pairs" => Ok(Self::Pairs),
            "identity" => Ok(Self::Identity),
            other => Err(format!(
                "unknown qrels mode {other:?} (expected pairs or identity)"
            )),
        }
    }
}

/// Every tunable of the pipelines, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub curve_len: usize,
    pub match_u: usize,
    pub match_v: usize,
    pub match_k: usize,
    pub match_method: MatchMethod,
    pub rule: FusionRule,
    pub epsilon_area: f64,
    pub epsilon_score: f64,
    pub codebook_q: usize,
    pub ref_seed: u64,
    pub prefix_len: usize,
    pub margin: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_seed: u64,
    pub grid_step: f64,
    pub grid_objective: GridObjective,
    pub qrels_mode: QrelsMode,
    pub include_self: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curve_len: 1000,
            match_u: 1,
            match_v: 400,
            match_k: 5,
            match_method: MatchMethod::KnnAverage,
            rule: FusionRule::Product,
            epsilon_area: 1e-6,
            epsilon_score: 1e-6,
            codebook_q: 1000,
            ref_seed: 0,
            prefix_len: 100,
            margin: 1.0,
            alpha: 2.0,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 16,
            train_seed: 0,
            grid_step: 0.1,
            grid_objective: GridObjective::MeanAp,
            qrels_mode: QrelsMode::Pairs,
            include_self: true,
        }
    }
}

/// Partial configuration: what a config file or flag set may override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub curve_len: Option<usize>,
    pub match_u: Option<usize>,
    pub match_v: Option<usize>,
    pub match_k: Option<usize>,
    pub match_method: Option<MatchMethod>,
    pub rule: Option<FusionRule>,
    pub epsilon_area: Option<f64>,
    pub epsilon_score: Option<f64>,
    pub codebook_q: Option<usize>,
    pub ref_seed: Option<u64>,
    pub prefix_len: Option<usize>,
    pub margin: Option<f64>,
    pub alpha: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub train_seed: Option<u64>,
    pub grid_step: Option<f64>,
    pub grid_objective: Option<GridObjective>,
    pub qrels_mode: Option<QrelsMode>,
    pub include_self: Option<bool>,
}

macro_rules! apply_fields {
    ($cfg:expr, $overlay:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $overlay.$field {
            $cfg.$field = v;
        })*
    };
}

impl RunConfig {
    pub fn apply(&mut self, overlay: ConfigOverlay) {
        apply_fields!(
            self,
            overlay,
            [
                curve_len,
                match_u,
                match_v,
                match_k,
                match_method,
                rule,
                epsilon_area,
                epsilon_score,
                codebook_q,
                ref_seed,
                prefix_len,
                margin,
                alpha,
                learning_rate,
                epochs,
                batch_size,
                train_seed,
                grid_step,
                grid_objective,
                qrels_mode,
                include_self,
            ]
        );
    }

    /// defaults < config file < command-line flags.
    pub fn resolve(
        config_file: Option<&Path>,
        flag_overlay: ConfigOverlay,
    ) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
            })?;
            let overlay: ConfigOverlay = toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
            cfg.apply(overlay);
        }
        cfg.apply(flag_overlay);
        Ok(cfg)
    }

    pub fn match_config(&self) -> Result<MatchConfig, CliError> {
        let method = self.match_method;
        let k = if method == MatchMethod::Nearest {
            1
        } else {
            self.match_k
        };
        MatchConfig::validated(MatchConfig {
            u: self.match_u,
            v: self.match_v,
            k,
            method,
        })
        .map_err(CliError::from)
    }

    pub fn qaf_config(&self, num_features: usize) -> Result<QafConfig, CliError> {
        let cfg = QafConfig {
            match_cfg: self.match_config()?,
            rule: self.rule,
            epsilon_area: self.epsilon_area,
            epsilon_score: self.epsilon_score,
            curve_len: self.curve_len,
            num_features,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.margin,
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.train_seed,
        }
    }
}
