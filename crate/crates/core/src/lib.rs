//! Budgeted feature selection with direct optimization of multivariate
//! performance measures.
//!
//! Trains sparse linear classifiers that pick at most B features per
//! generated group while optimizing F1, Prec@k, Rec@k, PRBEP, or the
//! plain error count, using a two-layer cutting-plane scheme: the outer
//! layer generates the most violated feature group from per-feature
//! scores; the inner layer runs a bundle method over label-configuration
//! cuts, solving a small reduced dual (a QCQP over the cut weights α with
//! one quadratic constraint per group) whose constraint duals μ mix the
//! groups into the final predictor f(x) = ⟨w ⊙ d̃, x⟩.
//!
//! ```
//! use perfsel::{train_binary, LossSpec, MulticlassDataset, TrainConfig};
//! use perfsel::trace::NullTrace;
//!
//! let data = MulticlassDataset::parse_str(
//!     "+1 1:1.2 3:0.4\n-1 1:-0.9 2:0.3\n+1 1:1.0\n-1 1:-1.1 3:0.2\n",
//! )?;
//! let view = data.binarize("+1")?;
//! let cfg = TrainConfig {
//!     loss: LossSpec::f1(),
//!     budget: 2,
//!     ..TrainConfig::default()
//! };
//! let model = train_binary(&view, &cfg, &mut NullTrace)?;
//! assert!(model.nonzeros() <= model.groups.len() * cfg.budget);
//! assert_eq!(model.predict_label(&view.examples()[0]), 1);
//! # Ok::<(), perfsel::Error>(())
//! ```

pub mod bundle;
pub mod data;
mod error;
pub mod groups;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod qcqp;
pub mod selfcheck;
pub mod trace;
pub mod train;

pub use data::{MulticlassDataset, SparseDataset, SparseVector};
pub use error::{Error, Result};
pub use groups::{FeatureGroup, GroupPool};
pub use loss::{ContingencyTable, LossKind, LossSpec};
pub use metrics::{EvalReport, Measure};
pub use model::TrainedModel;
pub use train::{train_binary, train_one_vs_rest, CapacityMode, ClassModel, TrainConfig};
