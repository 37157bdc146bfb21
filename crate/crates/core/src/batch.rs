//! Proximal-gradient solver for the static problem `min_w F(w)`.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::graph::{degree, DistanceVector, EdgeVector, GraphSnapshot};
use crate::objective::{eval_f, grad_g_with_degrees, lipschitz_eta, HyperParams};

/// Weights at or below this are treated as inactive by [`kkt_residual`].
pub const EDGE_ACTIVITY_TOL: f64 = 1e-10;

/// Outcome of a single proximal-gradient step.
#[derive(Debug, Clone)]
pub struct PgStep {
    pub w: EdgeVector,
    pub mu: f64,
    pub eta: f64,
    /// Some degree of the input iterate fell below `d_floor`.
    pub clamped: bool,
}

/// Step size `mu = 1/eta` with `eta = 4 beta + 2 alpha (N-1) / max(min_i d_i, d_floor)^2`.
pub(crate) fn step_from_degrees(n: usize, degrees: &[f64], p: &HyperParams) -> (f64, f64) {
    let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min).max(p.d_floor);
    let eta = lipschitz_eta(n, d_min, p).expect("d_floor is positive");
    (1.0 / eta, eta)
}

/// One iteration `w <- max(0, w - mu grad g(w) - 2 mu z)` with the adaptive step of [`step_from_degrees`].
pub fn pg_step(w: &EdgeVector, z: &DistanceVector, p: &HyperParams) -> Result<PgStep> {
    if w.len() != z.len() {
        return invalid(format!("graph has {} pairs, distances have {}", w.len(), z.len()));
    }
    let n = w.n_nodes();
    let d = degree(w);
    let mut grad = vec![0.0; w.len()];
    let clamped = grad_g_with_degrees(w, &d, p, &mut grad);
    let (mu, eta) = step_from_degrees(n, &d, p);
    let next = w
        .weights()
        .iter()
        .zip(&grad)
        .zip(z.dists())
        .map(|((wk, gk), zk)| (wk - mu * gk - 2.0 * mu * zk).max(0.0))
        .collect();
    Ok(PgStep { w: EdgeVector::from_raw(n, next), mu, eta, clamped })
}

/// First-order optimality residual of `F` at `w`.
///
/// With `s = grad g(w) + 2z`, active edges contribute `|s_k|` and inactive
/// ones `max(0, -s_k)`; the result is the largest contribution.
pub fn kkt_residual(w: &EdgeVector, z: &DistanceVector, p: &HyperParams) -> f64 {
    let mut grad = vec![0.0; w.len()];
    grad_g_with_degrees(w, &degree(w), p, &mut grad);
    w.weights()
        .iter()
        .zip(&grad)
        .zip(z.dists())
        .map(|((wk, gk), zk)| {
            let s = gk + 2.0 * zk;
            if *wk > EDGE_ACTIVITY_TOL {
                s.abs()
            } else {
                (-s).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub w_star: EdgeVector,
    pub iterations: usize,
    pub final_objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

impl Serialize for BatchResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("BatchResult", 5)?;
        st.serialize_field("graph", &GraphSnapshot::new(0, self.w_star.clone()))?;
        st.serialize_field("iterations", &self.iterations)?;
        st.serialize_field("final_objective", &self.final_objective)?;
        st.serialize_field("kkt_residual", &self.kkt_residual)?;
        st.serialize_field("converged", &self.converged)?;
        st.end()
    }
}

/// Runs proximal-gradient iterations from `w0` until the relative iterate change
/// and the KKT residual both drop below `batch_tol`, or `batch_max_iters` is reached.
pub fn solve_batch(z: &DistanceVector, p: &HyperParams, w0: &EdgeVector) -> Result<BatchResult> {
    if w0.len() != z.len() {
        return invalid(format!("initial graph has {} pairs, distances have {}", w0.len(), z.len()));
    }
    if let Some(i) = degree(w0).iter().position(|d| *d <= 0.0) {
        return invalid(format!("initial graph has non-positive degree at node {}", i + 1));
    }
    let mut w = w0.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < p.batch_max_iters {
        let step = pg_step(&w, z, p)?;
        iterations += 1;
        let change = step.w.distance(&w) / w.norm().max(1.0);
        w = step.w;
        if change <= p.batch_tol {
            if kkt_residual(&w, z, p) <= p.batch_tol {
                converged = true;
                break;
            }
            if change == 0.0 {
                // fixed point in floating point but not certified
                break;
            }
        }
    }
    if !converged {
        log::warn!("batch solver stopped after {iterations} iterations without meeting tolerance");
    }
    Ok(BatchResult {
        final_objective: eval_f(&w, z, p),
        kkt_residual: kkt_residual(&w, z, p),
        w_star: w,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ev(n: usize, w: &[f64]) -> EdgeVector {
        EdgeVector::new(n, w.to_vec()).unwrap()
    }

    fn dv(n: usize, z: &[f64]) -> DistanceVector {
        DistanceVector::new(n, z.to_vec()).unwrap()
    }

    // positive root of 4 beta w^2 + 2 z w - 2 alpha = 0
    fn two_node_root(z: f64, alpha: f64, beta: f64) -> f64 {
        (-z + (z * z + 8.0 * beta * alpha).sqrt()) / (4.0 * beta)
    }

    #[test]
    fn two_node_examples() {
        let p = HyperParams::new(1.0, 0.25);
        let r = solve_batch(&dv(2, &[0.0]), &p, &EdgeVector::uniform(2)).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.w_star.weights()[0], 2f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(two_node_root(0.0, 1.0, 0.25), 2f64.sqrt(), epsilon = 1e-15);

        let r = solve_batch(&dv(2, &[1.0]), &p, &EdgeVector::uniform(2)).unwrap();
        assert_abs_diff_eq!(r.w_star.weights()[0], 3f64.sqrt() - 1.0, epsilon = 1e-8);
        assert!(r.kkt_residual <= p.batch_tol);
    }

    #[test]
    fn three_node_symmetric_example() {
        let p = HyperParams::new(1.0, 0.25);
        let r = solve_batch(&DistanceVector::zeros(3), &p, &EdgeVector::uniform(3)).unwrap();
        for w in r.w_star.weights() {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn kkt_examples() {
        let p = HyperParams::new(1.0, 0.25);
        let w = ev(2, &[2f64.sqrt()]);
        assert!(kkt_residual(&w, &dv(2, &[0.0]), &p) <= 1e-8);
        assert_abs_diff_eq!(kkt_residual(&w, &dv(2, &[10.0]), &p), 20.0, epsilon = 1e-12);
        // interior point with grad g = -2z: N=3, w=(1,1,1), beta=0.25 gives grad = 1 - 1 = 0.
        assert_eq!(kkt_residual(&ev(3, &[1.0, 1.0, 1.0]), &DistanceVector::zeros(3), &p), 0.0);
    }

    #[test]
    fn kkt_inactive_edges_only_penalize_negative_slope() {
        let p = HyperParams::new(1.0, 0.25);
        // edge (2,3) is off with a large distance: s > 0 is fine
        let w = ev(3, &[1.0, 1.0, 0.0]);
        let z = dv(3, &[0.0, 0.0, 100.0]);
        let s_active = kkt_residual(&w, &z, &p);
        let g = crate::objective::grad_g(&w, &p);
        assert_abs_diff_eq!(s_active, g[0].abs().max(g[1].abs()), epsilon = 1e-15);
    }

    #[test]
    fn rejects_isolated_start() {
        let p = HyperParams::new(1.0, 0.25);
        let err = solve_batch(&DistanceVector::zeros(3), &p, &ev(3, &[1.0, 0.0, 0.0]));
        assert!(err.is_err());
    }

    #[test]
    fn max_iters_reports_not_converged() {
        let mut p = HyperParams::new(1.0, 0.25);
        p.batch_max_iters = 3;
        let r = solve_batch(&dv(2, &[1.0]), &p, &EdgeVector::uniform(2)).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn serializes_graph_and_diagnostics() {
        let p = HyperParams::new(1.0, 0.25);
        let r = solve_batch(&dv(2, &[0.0]), &p, &EdgeVector::uniform(2)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["converged"], true);
        assert_eq!(v["graph"]["n"], 2);
        assert_abs_diff_eq!(v["graph"]["edges"][0][2].as_f64().unwrap(), 2f64.sqrt(), epsilon = 1e-8);
    }
}
