//! Tensorized word embeddings with morpheme-level parameter sharing, plus
//! the decomposition baselines they are compared against.

pub mod audit;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod grad;
pub mod io;
pub mod layers;
pub mod morphology;
pub mod optim;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use audit::{count_params, reproduce_paper_tables, AuditRow};
pub use checkpoint::Checkpoint;
pub use config::{LayerConfig, MethodKind};
pub use error::{Error, Result};
pub use grad::{backward, finite_diff_check, GradCheckReport, GradSlot};
pub use layers::{build_rshare_index, Layer, Param};
pub use morphology::{IndexMatrix, MorphemeVocab, Segmentation, Slot};
pub use optim::{OptimizerKind, OptimizerState};
pub use scalar::Scalar;
pub use tensor::{Matrix, Vector};
pub use train::{eval_similarity, train, LabeledPair, Loss, TrainTask};

/// Dense `f64` vector.
pub type DenseVec = Vector<f64>;
/// Dense row-major `f64` matrix.
pub type DenseMat = Matrix<f64>;
/// Embedding layer over `f64` parameters.
pub type EmbeddingLayer = Layer<f64>;
