//! Streaming graph learner: one proximal-gradient step per incoming signal,
//! driven by an exponential moving average of pairwise distances.
//!
//! Per sample `t` the learner
//! 1. evaluates `grad g(w_t)`,
//! 2. updates `zbar_t = (1 - gamma) zbar_{t-1} + gamma z_t`,
//! 3. sets `mu_t = 1/eta_t` from the smallest degree of `w_t`,
//! 4. produces `w_{t+1} = max(0, w_t - mu_t grad g(w_t) - 2 mu_t zbar_t)`.
//!
//! Memory and work per sample are `O(N^2)` and do not depend on `t`.

use serde::{Deserialize, Serialize};

use crate::batch::step_from_degrees;
use crate::error::{invalid, Result};
use crate::graph::{degree, distance_vector, DistanceVector, EdgeVector, GraphSnapshot};
use crate::objective::{eval_f, grad_g_with_degrees, HyperParams};

/// Exponential moving average `(1 - gamma) zbar + gamma z`.
pub fn ema_update(z_bar: &DistanceVector, z_t: &DistanceVector, gamma: f64) -> Result<DistanceVector> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid(format!("gamma must lie in (0, 1), got {gamma}"));
    }
    if z_bar.len() != z_t.len() {
        return invalid(format!("EMA state has {} pairs, sample has {}", z_bar.len(), z_t.len()));
    }
    let mut out = z_bar.dists().to_vec();
    ema_in_place(&mut out, z_t.dists(), gamma);
    Ok(DistanceVector::from_raw(z_bar.n_nodes(), out))
}

fn ema_in_place(z_bar: &mut [f64], z_t: &[f64], gamma: f64) {
    for (zb, z) in z_bar.iter_mut().zip(z_t) {
        *zb = (1.0 - gamma) * *zb + gamma * z;
    }
}

/// Adaptive step size `(mu, eta)` at `w`, with the smallest degree floored at `d_floor`.
pub fn step_size(w: &EdgeVector, p: &HyperParams) -> (f64, f64) {
    step_from_degrees(w.n_nodes(), &degree(w), p)
}

/// Per-sample record emitted by the learner.
///
/// `objective` is `F(w_t; zbar_t)` evaluated at the iterate that entered the
/// step, i.e. before it was updated with sample `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: u64,
    pub objective: f64,
    pub mu: f64,
    pub eta: f64,
    pub min_degree: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    /// Number of samples consumed so far.
    pub t: u64,
    /// Current iterate (the graph estimate after `t` samples).
    pub w: EdgeVector,
    pub z_bar: DistanceVector,
    pub mu: f64,
    pub eta: f64,
    /// Steps during which some degree was below `d_floor`.
    pub clamp_events: u64,
    grad: Vec<f64>,
}

impl OnlineState {
    pub fn new(w1: EdgeVector, z_bar0: DistanceVector, p: &HyperParams) -> Result<Self> {
        if w1.len() != z_bar0.len() {
            return invalid(format!("initial graph has {} pairs, EMA state has {}", w1.len(), z_bar0.len()));
        }
        let (mu, eta) = step_size(&w1, p);
        let grad = vec![0.0; w1.len()];
        Ok(Self { t: 0, w: w1, z_bar: z_bar0, mu, eta, clamp_events: 0, grad })
    }

    /// Uniform unit-degree start with a zero EMA state.
    pub fn with_defaults(n: usize, p: &HyperParams) -> Self {
        Self::new(EdgeVector::uniform(n), DistanceVector::zeros(n), p).expect("matching sizes")
    }

    pub fn n_nodes(&self) -> usize {
        self.w.n_nodes()
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot::new(self.t, self.w.clone())
    }

    /// Consumes one distance sample in place.
    pub fn advance(&mut self, z_t: &DistanceVector, p: &HyperParams) -> Result<StepDiagnostics> {
        if z_t.len() != self.w.len() {
            return invalid(format!("sample has {} pairs, learner expects {}", z_t.len(), self.w.len()));
        }
        let n = self.w.n_nodes();
        let d = degree(&self.w);
        let clamped = grad_g_with_degrees(&self.w, &d, p, &mut self.grad);

        let mut z_bar = std::mem::replace(&mut self.z_bar, DistanceVector::zeros(2)).into_dists();
        ema_in_place(&mut z_bar, z_t.dists(), p.gamma);
        self.z_bar = DistanceVector::from_raw(n, z_bar);

        let (mu, eta) = step_from_degrees(n, &d, p);
        let objective = eval_f(&self.w, &self.z_bar, p);
        let next = self
            .w
            .weights()
            .iter()
            .zip(&self.grad)
            .zip(self.z_bar.dists())
            .map(|((wk, gk), zk)| (wk - mu * gk - 2.0 * mu * zk).max(0.0))
            .collect();
        self.w = EdgeVector::from_raw(n, next);
        self.t += 1;
        self.mu = mu;
        self.eta = eta;
        if clamped {
            self.clamp_events += 1;
        }
        Ok(StepDiagnostics {
            t: self.t,
            objective,
            mu,
            eta,
            min_degree: d.iter().copied().fold(f64::INFINITY, f64::min),
            clamped,
        })
    }
}

/// Functional form of [`OnlineState::advance`].
pub fn online_step(state: &OnlineState, z_t: &DistanceVector, p: &HyperParams) -> Result<OnlineState> {
    let mut next = state.clone();
    next.advance(z_t, p)?;
    Ok(next)
}

/// Everything [`run_online`] records.
#[derive(Debug, Clone, Default)]
pub struct OnlineRun {
    /// Graph estimate after each sample.
    pub snapshots: Vec<GraphSnapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Drives the learner over a stream of graph signals, calling `on_step` after
/// every sample with the diagnostics and the updated state.
pub fn run_online_with<I, X, F>(stream: I, p: &HyperParams, mut state: OnlineState, mut on_step: F) -> Result<OnlineState>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
    F: FnMut(&StepDiagnostics, &OnlineState) -> Result<()>,
{
    let n = state.n_nodes();
    for (i, x) in stream.into_iter().enumerate() {
        let x = x.as_ref();
        if x.len() != n {
            return invalid(format!("signal {} has {} entries, expected {n}", i + 1, x.len()));
        }
        let diag = state.advance(&distance_vector(x)?, p)?;
        on_step(&diag, &state)?;
    }
    Ok(state)
}

/// Runs the learner over a whole stream and keeps every snapshot.
pub fn run_online<I, X>(stream: I, p: &HyperParams, w1: EdgeVector, z_bar0: DistanceVector) -> Result<OnlineRun>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
{
    let mut run = OnlineRun::default();
    run_online_with(stream, p, OnlineState::new(w1, z_bar0, p)?, |diag, state| {
        run.diagnostics.push(diag.clone());
        run.snapshots.push(state.snapshot());
        Ok(())
    })?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::solve_batch;
    use approx::assert_abs_diff_eq;

    fn dv(n: usize, z: &[f64]) -> DistanceVector {
        DistanceVector::new(n, z.to_vec()).unwrap()
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_update(&dv(3, &[1.0, 1.0, 1.0]), &dv(3, &[3.0, 5.0, 1.0]), 0.5).unwrap().dists(), &[2.0, 3.0, 1.0]);
        let z = dv(3, &[0.3, 7.0, 2.0]);
        assert_eq!(ema_update(&z, &z, 0.37).unwrap(), z);
        assert_eq!(ema_update(&dv(2, &[0.0]), &dv(2, &[4.0]), 0.25).unwrap().dists(), &[1.0]);
        assert!(ema_update(&z, &z, 0.0).is_err());
        assert!(ema_update(&z, &z, 1.0).is_err());
    }

    #[test]
    fn step_size_examples() {
        let (mu, eta) = step_size(&EdgeVector::new(3, vec![1.0; 3]).unwrap(), &HyperParams::new(1.0, 1.0));
        assert_abs_diff_eq!(eta, 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mu, 0.2, epsilon = 1e-15);
        let (mu, _) = step_size(&EdgeVector::new(3, vec![0.1, 3.0, 0.2]).unwrap(), &HyperParams::new(0.0, 0.5));
        assert_eq!(mu, 0.5);
        let p = HyperParams::new(1.0, 1.0);
        let (mu, eta) = step_size(&EdgeVector::zeros(3), &p);
        approx::assert_relative_eq!(eta, 4.0 + 4.0 * 1e16, max_relative = 1e-12);
        assert!(mu > 0.0 && mu < 1e-16);
    }

    #[test]
    fn hand_traced_step() {
        let p = HyperParams::new(1.0, 0.25).with_gamma(0.5);
        let state = OnlineState::new(EdgeVector::new(2, vec![1.0]).unwrap(), DistanceVector::zeros(2), &p).unwrap();
        let next = online_step(&state, &dv(2, &[0.0]), &p).unwrap();
        assert_abs_diff_eq!(next.w.weights()[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(next.mu, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn threshold_uses_updated_average() {
        // zbar_{t-1} = 0 and z_t = 4 with gamma 0.5 gives zbar_t = 2; a stale average would leave w untouched by z.
        let p = HyperParams::new(1.0, 0.25).with_gamma(0.5);
        let state = OnlineState::new(EdgeVector::new(2, vec![1.0]).unwrap(), DistanceVector::zeros(2), &p).unwrap();
        let next = online_step(&state, &dv(2, &[4.0]), &p).unwrap();
        assert_abs_diff_eq!(next.w.weights()[0], 4.0 / 3.0 - 2.0 * 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(next.z_bar.dists(), &[2.0]);
    }

    #[test]
    fn huge_distance_kills_edge() {
        let p = HyperParams::new(1.0, 0.25).with_gamma(0.5);
        let w = EdgeVector::new(3, vec![0.1, 1.0, 1.0]).unwrap();
        let mut state = OnlineState::new(w, DistanceVector::zeros(3), &p).unwrap();
        state.advance(&dv(3, &[1e6, 0.0, 0.0]), &p).unwrap();
        assert_eq!(state.w.weights()[0], 0.0);
        assert!(state.w.weights()[1] > 0.0);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let p = HyperParams::new(1.0, 0.5).with_gamma(0.2);
        let z = dv(4, &[0.5, 1.0, 2.0, 0.3, 0.7, 1.5]);
        let mut tight = p;
        tight.batch_tol = 1e-13;
        let w_star = solve_batch(&z, &tight, &EdgeVector::uniform(4)).unwrap().w_star;
        let state = OnlineState::new(w_star.clone(), z.clone(), &p).unwrap();
        let next = online_step(&state, &z, &p).unwrap();
        assert!(next.w.distance(&w_star) < 1e-10);
    }

    #[test]
    fn diagnostics_report_pre_step_objective() {
        let p = HyperParams::new(1.0, 0.25).with_gamma(0.5);
        let w = EdgeVector::new(2, vec![1.0]).unwrap();
        let mut state = OnlineState::new(w.clone(), DistanceVector::zeros(2), &p).unwrap();
        let diag = state.advance(&dv(2, &[2.0]), &p).unwrap();
        assert_abs_diff_eq!(diag.objective, eval_f(&w, &dv(2, &[1.0]), &p), epsilon = 1e-15);
        assert_eq!(diag.min_degree, 1.0);
        assert!(!diag.clamped);
        let line = serde_json::to_string(&diag).unwrap();
        assert!(line.starts_with(r#"{"t":1,"objective":"#));
    }

    #[test]
    fn run_online_handles_empty_and_ragged_streams() {
        let p = HyperParams::new(1.0, 0.25);
        let empty: Vec<Vec<f64>> = vec![];
        let run = run_online(&empty, &p, EdgeVector::uniform(3), DistanceVector::zeros(3)).unwrap();
        assert!(run.snapshots.is_empty() && run.diagnostics.is_empty());
        let ragged = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0]];
        assert!(run_online(&ragged, &p, EdgeVector::uniform(3), DistanceVector::zeros(3)).is_err());
    }

    #[test]
    fn constant_stream_converges_to_batch_solution() {
        let p = HyperParams::new(1.0, 0.25).with_gamma(0.05);
        let x = [0.3, -0.2, 1.1, 0.9, 0.0];
        let z = distance_vector(&x).unwrap();
        let mut tight = p;
        tight.batch_tol = 1e-12;
        let w_star = solve_batch(&z, &tight, &EdgeVector::uniform(5)).unwrap().w_star;
        let stream = std::iter::repeat_n(x, 5000);
        let run = run_online(stream, &p, EdgeVector::uniform(5), DistanceVector::zeros(5)).unwrap();
        let last = &run.snapshots.last().unwrap().edges;
        assert!(last.distance(&w_star) <= 1e-4, "gap {}", last.distance(&w_star));
    }
}
