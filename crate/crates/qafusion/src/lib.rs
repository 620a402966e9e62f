//! Query-adaptive late fusion of retrieval score lists.
//!
//! Given per-feature similarity scores of a gallery to a query, this crate
//! estimates how effective each feature is *for that query* from the shape
//! of its sorted score curve, and fuses the score lists with
//! query-adaptive weights:
//!
//! - [`qaf`]: unsupervised weighting: subtract a matched reference curve
//!   (built offline from an irrelevant corpus, [`reference`]) and weight
//!   each feature by the inverse area under the normalized curve.
//! - [`sqaf`]: supervised weighting: a small 1-D convolutional network over
//!   the stacked top-m curves, trained end-to-end with a margin objective
//!   and hard-negative mining.
//! - [`eval`]: mAP / N-S / rank-1 metrics and the baseline fusion methods
//!   (uniform weights, median-rank aggregation, global weight grid search).
//! - [`synth`]: seeded synthetic benchmarks with controllable per-feature
//!   quality.

pub mod curve;
pub mod error;
pub mod eval;
pub mod io;
pub mod qaf;
pub mod reference;
pub mod sqaf;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
