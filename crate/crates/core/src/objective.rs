//! Composite objective `F(w) = h(w) + g(w)` with
//! `h(w) = I{w >= 0} + 2 w^T z` and `g(w) = 2 beta ||w||^2 - alpha sum_i log d_i`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{degree, pairs, DistanceVector, EdgeVector};

fn default_gamma() -> f64 {
    0.01
}
fn default_d_floor() -> f64 {
    1e-8
}
fn default_edge_threshold() -> f64 {
    1e-4
}
fn default_batch_tol() -> f64 {
    1e-8
}
fn default_batch_max_iters() -> usize {
    100_000
}

/// Regularization weights, discount factor and solver knobs.
///
/// Serialized as a flat JSON object. Only `alpha` and `beta` are required;
/// the rest fall back to the defaults below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Log-barrier weight on node degrees.
    pub alpha: f64,
    /// Weight of the squared-norm penalty on edges.
    pub beta: f64,
    /// Discount of the exponential moving average of distances.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Smallest degree used when evaluating gradients and step sizes.
    #[serde(default = "default_d_floor")]
    pub d_floor: f64,
    /// Edges with weight above this count as detected.
    #[serde(default = "default_edge_threshold")]
    pub edge_threshold: f64,
    #[serde(default = "default_batch_tol")]
    pub batch_tol: f64,
    #[serde(default = "default_batch_max_iters")]
    pub batch_max_iters: usize,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma: default_gamma(),
            d_floor: default_d_floor(),
            edge_threshold: default_edge_threshold(),
            batch_tol: default_batch_tol(),
            batch_max_iters: default_batch_max_iters(),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.alpha) {
            return invalid(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !pos(self.beta) {
            return invalid(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return invalid(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !pos(self.d_floor) {
            return invalid(format!("d_floor must be > 0, got {}", self.d_floor));
        }
        if !(self.edge_threshold >= 0.0 && self.edge_threshold.is_finite()) {
            return invalid(format!("edge_threshold must be >= 0, got {}", self.edge_threshold));
        }
        if !pos(self.batch_tol) {
            return invalid(format!("batch_tol must be > 0, got {}", self.batch_tol));
        }
        if self.batch_max_iters == 0 {
            return invalid("batch_max_iters must be at least 1");
        }
        Ok(())
    }
}

/// Smooth part `g`. Returns `+inf` when some degree is not strictly positive.
pub fn eval_g(w: &EdgeVector, p: &HyperParams) -> f64 {
    let sq: f64 = w.weights().iter().map(|x| x * x).sum();
    let mut barrier = 0.0;
    if p.alpha != 0.0 {
        for d in degree(w) {
            if d <= 0.0 {
                return f64::INFINITY;
            }
            barrier += d.ln();
        }
    }
    2.0 * p.beta * sq - p.alpha * barrier
}

/// Gradient of `g` together with a flag telling whether any degree hit `d_floor`.
pub fn grad_g_flagged(w: &EdgeVector, p: &HyperParams) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; w.len()];
    let clamped = grad_g_with_degrees(w, &degree(w), p, &mut out);
    (out, clamped)
}

/// Gradient of `g`: entry `(i,j)` is `4 beta w_ij - alpha (1/d_i + 1/d_j)` with degrees floored at `d_floor`.
pub fn grad_g(w: &EdgeVector, p: &HyperParams) -> Vec<f64> {
    grad_g_flagged(w, p).0
}

pub(crate) fn grad_g_with_degrees(w: &EdgeVector, d: &[f64], p: &HyperParams, out: &mut [f64]) -> bool {
    let mut clamped = false;
    let inv: Vec<f64> = d
        .iter()
        .map(|&di| {
            if di < p.d_floor {
                clamped = true;
            }
            1.0 / di.max(p.d_floor)
        })
        .collect();
    for (((a, b), wk), g) in pairs(w.n_nodes()).zip(w.weights()).zip(out.iter_mut()) {
        *g = 4.0 * p.beta * wk - p.alpha * (inv[a] + inv[b]);
    }
    clamped
}

/// Lipschitz constant `4 beta + 2 alpha (N-1) / d_min^2` of the gradient of `g` on `{d >= d_min}`.
pub fn lipschitz_eta(n: usize, d_min: f64, p: &HyperParams) -> Result<f64> {
    if d_min.is_nan() || d_min <= 0.0 {
        return invalid(format!("d_min must be > 0, got {d_min}"));
    }
    Ok(4.0 * p.beta + 2.0 * p.alpha * (n as f64 - 1.0) / (d_min * d_min))
}

/// Non-smooth part `h`: `2 w^T z` on the non-negative orthant, `+inf` outside.
///
/// Panics if the two slices differ in length.
pub fn eval_h(w: &[f64], z: &[f64]) -> f64 {
    assert_eq!(w.len(), z.len(), "edge and distance vectors differ in length");
    if w.iter().any(|x| *x < 0.0) {
        return f64::INFINITY;
    }
    2.0 * w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
}

/// `F = h + g`.
pub fn eval_f(w: &EdgeVector, z: &DistanceVector, p: &HyperParams) -> f64 {
    eval_h(w.weights(), z.dists()) + eval_g(w, p)
}

/// Proximal map of `mu h`: the non-negative soft threshold `max(0, v - 2 mu z)`.
pub fn prox_h(v: &[f64], z: &DistanceVector, mu: f64) -> Result<EdgeVector> {
    if v.len() != z.len() {
        return invalid(format!("prox input has {} entries, distances have {}", v.len(), z.len()));
    }
    if mu.is_nan() || mu <= 0.0 {
        return invalid(format!("prox step must be > 0, got {mu}"));
    }
    Ok(EdgeVector::from_raw(
        z.n_nodes(),
        v.iter().zip(z.dists()).map(|(vk, zk)| (vk - 2.0 * mu * zk).max(0.0)).collect(),
    ))
}
