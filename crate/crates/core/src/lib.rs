//! Continual learning with asymmetric per-parameter surrogate losses.
//!
//! The crate trains a dense ReLU network on a stream of tasks. After every
//! task each parameter receives a quadratic stand-in for the loss of the
//! tasks seen so far; the stand-in is inflated on the side of its center
//! that training never explored. SI (symmetric surrogate) and plain
//! unregularized training are available for comparison.
//!
//! * [`nn`]: network, flat parameter layout, exact gradients
//! * [`adam`]: optimizer returning per-parameter displacements
//! * [`consolidation`]: surrogate losses, importance accumulation and the
//!   task-boundary update
//! * [`tasks`]: IDX loading, permuted and class-split task streams
//! * [`harness`]: training loop, accuracy matrix, metrics, reports

pub mod adam;
pub mod consolidation;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod seed;
pub mod tasks;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use consolidation::{alpha, ConsolidationState, Hyperparams, RegularizerKind, StepLoss};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{
    forward, init_params, task_loss_and_grad, ClassMask, GradientVector, NetworkSpec,
    ParameterVector,
};
pub use tasks::{
    batches, load_idx, load_mnist_dir, make_permuted_tasks, make_split_tasks, BaseDataset, Dataset,
    Split, Task, TaskKind, TaskStream,
};
