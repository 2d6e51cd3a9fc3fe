//! Subspace-based representation learning for nonlinear meta-learning.
//!
//! Meta-training pools `k` tasks whose labels depend on inputs only through
//! a shared `r`-dimensional projection `W x`. A split-sample moment matrix
//! recovers the span of `W`; a new task is then fit by norm-constrained
//! logistic regression inside the recovered subspace.
//!
//! Modules follow the pipeline: [`tasks`] generates data, [`moments`] builds
//! the moment matrix and its oracles, [`subspace`] extracts and scores the
//! subspace, [`fewshot`] fits and evaluates the downstream model, and
//! [`harness`] runs whole experiments. [`mnist`] adapts MNIST digit pairs to
//! the same shapes.

// `!(x > y)` is used on purpose where NaN must take the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod error;
pub mod fewshot;
pub mod harness;
pub mod linalg;
pub mod mnist;
pub mod moments;
pub mod quadrature;
pub mod subspace;
pub mod tasks;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, EigenResult, SeededRng};
pub use moments::MomentMatrix;
pub use subspace::{AlignmentResult, RecoveredSubspace};
pub use tasks::{MetaDataset, Representation, TaskData, TaskSpec};
