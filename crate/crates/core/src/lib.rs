//! Interaction-network GNN toolkit for low-latency inference studies.
//!
//! * [`graph`], [`matrix`], [`model`]: fully connected particle graphs,
//!   column-major matrices and MLP descriptions;
//! * [`fixed`]: saturating Q-format arithmetic;
//! * [`kernels`]: structured replacements for the adjacency products;
//! * [`inference`]: the forward pass in real or fixed-point arithmetic;
//! * [`hwmodel`], [`pipesim`]: analytical and cycle-level hardware models;
//! * [`dse`]: latency/accuracy co-design search;
//! * [`synth`]: seeded synthetic models and inputs.

pub mod dse;
pub mod error;
pub mod fixed;
pub mod graph;
pub mod hwmodel;
pub mod inference;
pub mod kernels;
pub mod matrix;
pub mod model;
pub mod pipesim;
pub mod scalar;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use fixed::{FixedSpec, FixedVal, Rounding, Q12_12, Q16_16};
pub use graph::{make_adjacency, AdjacencyStructure, GraphConfig};
pub use hwmodel::{HwBudget, ParallelismConfig, PipelineDepths};
pub use inference::{FixedArith, Model, NodeReduction, NumericMode, Prediction, RealArith, Sample};
pub use matrix::ColMatrix;
pub use model::{Architecture, MlpName, MlpSet, MlpSpec, ModelParams};
pub use scalar::Scalar;

/// Double-precision matrix.
pub type Matrix = ColMatrix<f64>;
/// Single-precision matrix.
pub type Matrix32 = ColMatrix<f32>;
/// Fixed-point matrix.
pub type FixedMatrix = ColMatrix<FixedVal>;
/// Exact integer matrix, used for operation-level oracles.
pub type IntMatrix = ColMatrix<i64>;
