//! Edge-detection F-measure and relative temporal deviation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::EdgeVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Precision, recall and their harmonic mean for edges detected as `w_est > threshold`
/// against the support of `w_true`.
pub fn f_measure(w_est: &EdgeVector, w_true: &EdgeVector, threshold: f64) -> Result<EdgeScores> {
    if w_est.n_nodes() != w_true.n_nodes() {
        return invalid(format!(
            "estimate has {} nodes, ground truth has {}",
            w_est.n_nodes(),
            w_true.n_nodes()
        ));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return invalid(format!("threshold must be >= 0, got {threshold}"));
    }
    let (mut hits, mut detected, mut actual) = (0usize, 0usize, 0usize);
    for (e, t) in w_est.weights().iter().zip(w_true.weights()) {
        let d = *e > threshold;
        let a = *t > 0.0;
        detected += d as usize;
        actual += a as usize;
        hits += (d && a) as usize;
    }
    let precision = if detected == 0 {
        if actual == 0 { 1.0 } else { 0.0 }
    } else {
        hits as f64 / detected as f64
    };
    let recall = if actual == 0 { 1.0 } else { hits as f64 / actual as f64 };
    let f = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(EdgeScores { precision, recall, f_measure: f })
}

/// `||W_t - W_prev||_F / ||W_prev||_F`.
///
/// The symmetric-matrix norms are `sqrt(2)` times the edge-vector norms, so
/// the ratio is computed on edge vectors directly.
pub fn relative_deviation(w_t: &EdgeVector, w_prev: &EdgeVector) -> Result<f64> {
    if w_t.n_nodes() != w_prev.n_nodes() {
        return invalid(format!("graphs have {} and {} nodes", w_t.n_nodes(), w_prev.n_nodes()));
    }
    let denom = w_prev.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedValue("relative deviation from an empty graph".into()));
    }
    Ok(w_t.distance(w_prev) / denom)
}
