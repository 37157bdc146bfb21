//! Tracking-error analysis of the online learner against per-sample batch optima.
//!
//! With `L_t` the contraction factor of step `t` and `v_t` the distance between
//! consecutive batch optima, the online error obeys
//! `||w_t - w_t*|| <= Ltilde_{t-1} (e0 + sum_{tau<t} v_tau / Ltilde_tau)`,
//! `Ltilde_t = L_1 ... L_t`, `Ltilde_0 = 1`.

use serde::{Deserialize, Serialize};

use crate::batch::{solve_batch, BatchResult};
use crate::error::{invalid, Result};
use crate::graph::{distance_vector, EdgeVector};
use crate::objective::{eval_f, HyperParams};
use crate::online::OnlineState;

/// `max(|1 - 4 mu beta|, |1 - mu eta|)`.
pub fn contraction_factor(mu: f64, beta: f64, eta: f64) -> f64 {
    (1.0 - 4.0 * mu * beta).abs().max((1.0 - mu * eta).abs())
}

/// Distances between consecutive batch optima.
pub fn path_variation(optima: &[EdgeVector]) -> Result<Vec<f64>> {
    if optima.len() < 2 {
        return invalid(format!("path variation needs at least 2 optima, got {}", optima.len()));
    }
    Ok(optima.windows(2).map(|w| w[1].distance(&w[0])).collect())
}

/// Right-hand side of the tracking bound for `t = 1..=n`, where `n` is the common
/// length of `contraction` and `variation` (both indexed from `tau = 0`).
///
/// `contraction[0]` is not used: the product `Ltilde_0` is empty. Entry `t-1`
/// of the output is the bound at time `t`. Evaluated through the recursion
/// `b_1 = e0 + v_0`, `b_{t+1} = L_t b_t + v_t`, which equals the closed form
/// and stays finite when some `L_t` is zero.
pub fn tracking_bound(e0: f64, contraction: &[f64], variation: &[f64]) -> Result<Vec<f64>> {
    if contraction.len() != variation.len() {
        return invalid(format!(
            "contraction series has {} entries, variation series has {}",
            contraction.len(),
            variation.len()
        ));
    }
    let mut out = Vec::with_capacity(variation.len());
    let mut b = e0;
    for (t, v) in variation.iter().enumerate() {
        let l = if t == 0 { 1.0 } else { contraction[t] };
        b = l * b + v;
        out.push(b);
    }
    Ok(out)
}

/// Geometric-series envelope `l_hat^t e0 + v_hat / (1 - l_hat)`.
pub fn simplified_bound(e0: f64, l_hat: f64, v_hat: f64, t: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&l_hat) {
        return invalid(format!("contraction bound {l_hat} must lie in [0, 1)"));
    }
    Ok(l_hat.powi(t as i32) * e0 + v_hat / (1.0 - l_hat))
}

/// Objective-gap bounds derived from a tracking error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuboptimalityBound {
    /// `(eta/2) err`.
    pub linear: f64,
    /// `(eta/2) err^2`.
    pub squared: f64,
}

pub fn suboptimality_bound(err: f64, eta: f64) -> SuboptimalityBound {
    SuboptimalityBound { linear: 0.5 * eta * err, squared: 0.5 * eta * err * err }
}

/// One merged tracking record per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub t: u64,
    /// `F_t` at the iterate entering step `t`.
    pub objective: f64,
    /// `F_t` at the iterate leaving step `t`.
    pub objective_next: f64,
    /// `F_t` at the batch optimum of `zbar_t`.
    pub batch_objective: f64,
    pub err: f64,
    /// Distance from this optimum to the next one (0 for the last sample).
    pub v: f64,
    pub contraction: f64,
    pub mu: f64,
    pub eta: f64,
    pub bound: f64,
    pub simplified_bound: f64,
    pub subopt_bound: f64,
    pub subopt_bound_sq: f64,
    pub violation: bool,
}

/// Raw per-sample quantities needed by [`tracking_records`].
#[derive(Debug, Clone)]
pub struct TrackingSample {
    pub t: u64,
    pub w: EdgeVector,
    pub w_next: EdgeVector,
    pub optimum: EdgeVector,
    pub objective: f64,
    pub objective_next: f64,
    pub batch_objective: f64,
    pub mu: f64,
    pub eta: f64,
}

/// Relative slack for floating-point noise when flagging bound violations.
pub const VIOLATION_RTOL: f64 = 1e-9;

/// Combines per-sample optima and iterates into bound records.
///
/// The first sample's error is the initial error `e0`.
pub fn tracking_records(samples: &[TrackingSample], beta: f64) -> Result<Vec<TrackingRecord>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let n = samples.len();
    let errs: Vec<f64> = samples.iter().map(|s| s.w.distance(&s.optimum)).collect();
    let mut v: Vec<f64> = samples.windows(2).map(|w| w[1].optimum.distance(&w[0].optimum)).collect();
    v.push(0.0);
    let l: Vec<f64> = samples.iter().map(|s| contraction_factor(s.mu, beta, s.eta)).collect();
    let e0 = errs[0];
    let mut bounds = vec![e0];
    bounds.extend(tracking_bound(e0, &l[..n - 1], &v[..n - 1])?);

    let mut records = Vec::with_capacity(n);
    let (mut l_hat, mut v_hat) = (0.0f64, 0.0f64);
    for (k, s) in samples.iter().enumerate() {
        // running maxima over the factors and variations that enter bound k
        if k >= 2 {
            l_hat = l_hat.max(l[k - 1]);
        }
        if k >= 1 {
            v_hat = v_hat.max(v[k - 1]);
        }
        let simplified = if l_hat < 1.0 {
            simplified_bound(e0, l_hat, v_hat, k.saturating_sub(1) as u32)?
        } else {
            f64::INFINITY
        };
        let sub = suboptimality_bound(errs[k], s.eta);
        let bound = bounds[k];
        records.push(TrackingRecord {
            t: s.t,
            objective: s.objective,
            objective_next: s.objective_next,
            batch_objective: s.batch_objective,
            err: errs[k],
            v: v[k],
            contraction: l[k],
            mu: s.mu,
            eta: s.eta,
            bound,
            simplified_bound: simplified,
            subopt_bound: sub.linear,
            subopt_bound_sq: sub.squared,
            violation: errs[k] > bound * (1.0 + VIOLATION_RTOL) + f64::EPSILON,
        });
    }
    debug_assert_eq!(first.w.distance(&first.optimum), records[0].bound);
    Ok(records)
}

/// Runs the online learner over `stream` and, after every sample, solves the
/// batch problem on the current moving average (warm-started from the previous
/// optimum) to produce [`TrackingSample`]s.
pub fn collect_tracking_samples<I, X>(
    stream: I,
    p: &HyperParams,
    mut state: OnlineState,
    mut on_batch: impl FnMut(u64, &BatchResult),
) -> Result<Vec<TrackingSample>>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
{
    let n = state.n_nodes();
    let mut warm = EdgeVector::uniform(n);
    let mut out = Vec::new();
    for (i, x) in stream.into_iter().enumerate() {
        let x = x.as_ref();
        if x.len() != n {
            return invalid(format!("signal {} has {} entries, expected {n}", i + 1, x.len()));
        }
        let w = state.w.clone();
        let diag = state.advance(&distance_vector(x)?, p)?;
        let batch = solve_batch(&state.z_bar, p, &warm)?;
        on_batch(diag.t, &batch);
        if batch.w_star.weights().iter().any(|v| *v > 0.0) {
            warm = batch.w_star.clone();
        }
        out.push(TrackingSample {
            t: diag.t,
            objective: diag.objective,
            objective_next: eval_f(&state.w, &state.z_bar, p),
            batch_objective: batch.final_objective,
            w,
            w_next: state.w.clone(),
            optimum: batch.w_star,
            mu: diag.mu,
            eta: diag.eta,
        });
    }
    Ok(out)
}
