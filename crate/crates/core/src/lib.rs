//! Graph topology learning from signals that are smooth on the unknown graph.
//!
//! A graph is represented by its upper-triangular edge weights ([`EdgeVector`]);
//! observed signals enter only through squared pairwise distances
//! ([`DistanceVector`]). The [`batch`] solver minimizes
//! `2 w^T z + 2 beta ||w||^2 - alpha sum log(degrees)` over `w >= 0` by proximal
//! gradient; the [`online`] learner takes one such step per streaming sample on an
//! exponentially weighted distance average, and [`tracking`] quantifies how close
//! it stays to the moving batch optimum.

pub mod batch;
pub mod cli;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod objective;
pub mod online;
pub mod synth;
pub mod tracking;

pub use batch::{kkt_residual, solve_batch, BatchResult};
pub use error::{Error, Result};
pub use graph::{
    degree, distance_vector, distance_vector_batch, edge_index, edge_pair, laplacian, total_variation,
    DistanceVector, EdgeVector, GraphSnapshot,
};
pub use objective::{eval_f, eval_g, eval_h, grad_g, lipschitz_eta, prox_h, HyperParams};
pub use online::{ema_update, online_step, run_online, step_size, OnlineState, StepDiagnostics};
