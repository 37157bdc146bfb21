//! Synthetic benchmark: Erdős–Rényi ground truths, edge rewiring, and signals
//! drawn from `N(0, L^+ + sigma_e^2 I)` so they are smooth on the true graph.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{laplacian, pair_count, EdgeVector, GraphSnapshot};

pub mod market;

/// Relative eigenvalue cutoff for pseudoinverses.
pub const PINV_TOL: f64 = 1e-10;

fn default_sigma_e() -> f64 {
    0.1
}

/// Piecewise-constant two-graph scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub er_prob: f64,
    pub t_total: u64,
    /// Last sample generated on the initial graph.
    pub t_switch: u64,
    pub rewire_fraction: f64,
    #[serde(default = "default_sigma_e")]
    pub sigma_e: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// N=50, p=0.15, switch after 4000 of 8000 samples, 40% of edges redrawn.
    pub fn reference_protocol(seed: u64) -> Self {
        Self {
            n_nodes: 50,
            er_prob: 0.15,
            t_total: 8000,
            t_switch: 4000,
            rewire_fraction: 0.4,
            sigma_e: default_sigma_e(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return invalid(format!("n_nodes must be >= 2, got {}", self.n_nodes));
        }
        if !(0.0..=1.0).contains(&self.er_prob) {
            return invalid(format!("er_prob must lie in [0, 1], got {}", self.er_prob));
        }
        if !(0.0..=1.0).contains(&self.rewire_fraction) {
            return invalid(format!("rewire_fraction must lie in [0, 1], got {}", self.rewire_fraction));
        }
        if self.t_switch > self.t_total {
            return invalid(format!("t_switch ({}) exceeds t_total ({})", self.t_switch, self.t_total));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return invalid(format!("sigma_e must be >= 0, got {}", self.sigma_e));
        }
        Ok(())
    }
}

/// Binary Erdős–Rényi graph: every pair present independently with probability `p`.
pub fn er_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<EdgeVector> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("edge probability must lie in [0, 1], got {p}"));
    }
    let weights = (0..pair_count(n))
        .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect();
    EdgeVector::new(n, weights)
}

/// Moves `ceil(fraction |E|)` edges to uniformly chosen former non-edges, keeping `|E|`.
///
/// The count is capped by the number of available non-edges.
pub fn rewire<R: Rng + ?Sized>(w_true: &EdgeVector, fraction: f64, rng: &mut R) -> Result<EdgeVector> {
    if !(0.0..=1.0).contains(&fraction) {
        return invalid(format!("rewire fraction must lie in [0, 1], got {fraction}"));
    }
    let (edges, non_edges): (Vec<usize>, Vec<usize>) = (0..w_true.len()).partition(|&k| w_true.weights()[k] > 0.0);
    // guard against 0.4 * 200 = 80.00000000000001
    let wanted = (fraction * edges.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let moved = wanted.min(non_edges.len());
    let mut weights = w_true.weights().to_vec();
    let removed = index::sample(rng, edges.len(), moved);
    let added = index::sample(rng, non_edges.len(), moved);
    for (r, a) in removed.iter().zip(added.iter()) {
        weights[non_edges[a]] = weights[edges[r]];
        weights[edges[r]] = 0.0;
    }
    EdgeVector::new(w_true.n_nodes(), weights)
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return invalid(format!("matrix must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return invalid("matrix is not symmetric");
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix above `tol * lambda_max`; the rest map to 0.
fn spectral_map(m: &DMatrix<f64>, tol: f64, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let eig = SymmetricEigen::new(m.clone());
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cutoff = tol * lambda_max;
    let mapped = eig.eigenvalues.map(|l| if l > cutoff && l > 0.0 { f(l) } else { 0.0 });
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&mapped) * q.transpose())
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix via eigendecomposition.
pub fn pinv_psd(l: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    spectral_map(l, tol, |x| 1.0 / x)
}

/// Draws `x = (L^+)^{1/2} u + sigma_e v` with `u, v` standard normal.
#[derive(Debug, Clone)]
pub struct SmoothSampler {
    sqrt_cov: DMatrix<f64>,
    sigma_e: f64,
}

impl SmoothSampler {
    pub fn new(l: &DMatrix<f64>, sigma_e: f64) -> Result<Self> {
        if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
            return invalid(format!("sigma_e must be >= 0, got {sigma_e}"));
        }
        Ok(Self { sqrt_cov: spectral_map(l, PINV_TOL, |x| x.sqrt().recip())?, sigma_e })
    }

    pub fn for_graph(w: &EdgeVector, sigma_e: f64) -> Result<Self> {
        Self::new(&laplacian(w), sigma_e)
    }

    pub fn n_nodes(&self) -> usize {
        self.sqrt_cov.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n_nodes();
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.sqrt_cov * u + v * self.sigma_e).data.into()
    }
}

/// One draw from `N(0, L^+ + sigma_e^2 I)`.
pub fn smooth_sampler<R: Rng + ?Sized>(l: &DMatrix<f64>, sigma_e: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(SmoothSampler::new(l, sigma_e)?.sample(rng))
}

/// Lazily generates the signal stream of a scenario, one sample per call.
pub struct ScenarioStream {
    rng: ChaCha8Rng,
    segments: Vec<(u64, SmoothSampler)>,
    t: u64,
    t_total: u64,
}

impl Iterator for ScenarioStream {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.t >= self.t_total {
            return None;
        }
        self.t += 1;
        let t = self.t;
        let sampler = &self.segments.iter().rev().find(|(start, _)| *start <= t)?.1;
        Some(sampler.sample(&mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.t_total - self.t) as usize;
        (left, Some(left))
    }
}

/// Ground-truth graphs and the stream that samples them.
pub struct Scenario {
    /// One snapshot per segment, `t` = first sample generated on that graph.
    pub truths: Vec<GraphSnapshot>,
    pub stream: ScenarioStream,
}

impl Scenario {
    /// Ground truth active at sample `t` (1-based).
    pub fn truth_at(truths: &[GraphSnapshot], t: u64) -> Option<&GraphSnapshot> {
        truths.iter().rev().find(|s| s.t <= t)
    }
}

/// Builds the scenario described by `cfg`; identical seeds give identical output.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let first = er_graph(cfg.n_nodes, cfg.er_prob, &mut rng)?;
    let mut truths = vec![GraphSnapshot::new(1, first.clone())];
    if cfg.t_switch < cfg.t_total {
        let second = rewire(&first, cfg.rewire_fraction, &mut rng)?;
        truths.push(GraphSnapshot::new(cfg.t_switch + 1, second));
    }
    let segments = truths
        .iter()
        .map(|s| Ok((s.t, SmoothSampler::for_graph(&s.edges, cfg.sigma_e)?)))
        .collect::<Result<_>>()?;
    Ok(Scenario { truths, stream: ScenarioStream { rng, segments, t: 0, t_total: cfg.t_total } })
}
