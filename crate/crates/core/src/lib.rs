//! Backward-compatible model updates for text classifiers.
//!
//! Train an old model, update it on more data, and interpolate between the
//! two in weight space so the update keeps its accuracy gain while making
//! fewer new mistakes on examples the old model already handled.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod merge;
pub mod model;
pub mod rng;
pub mod train;

pub use checkpoint::{Checkpoint, Provenance};
pub use data::{FeaturizerConfig, LabeledDataset, ScenarioData, ScenarioKind, ScenarioManifest, ScenarioSplit, SplitSizes};
pub use error::{Error, Result};
pub use eval::{EvalReport, EvalSets, SeedAggregate, TradeoffCurve};
pub use fisher::{FisherDiagonal, Normalization};
pub use model::{Activation, ModelSpec, ParamVector, Sample, SparseFeatures};
pub use train::{Regularizer, Role, TrainConfig};
