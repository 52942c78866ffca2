use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::graph::{edge_jacobians, residual, Matrix7, PoseGraph};
use crate::error::{Error, Result};
use crate::geometry::{Sim3, Sim3Tangent};

/// Damped Gauss-Newton settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub lm_lambda0: f64,
    pub lambda_factor: f64,
    /// Stop once an accepted step lowers chi2 by less than this fraction.
    pub chi2_rel_tol: f64,
    /// Stop once the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Graphs with fewer nodes use a dense Cholesky solve.
    pub dense_threshold: usize,
    /// Huber threshold in residual-norm units; `None` disables the kernel.
    pub huber_delta: Option<f64>,
    /// Give up on a linearization point once damping exceeds this.
    pub max_lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lm_lambda0: 1e-4,
            lambda_factor: 10.0,
            chi2_rel_tol: 1e-12,
            grad_tol: 1e-12,
            dense_threshold: 200,
            huber_delta: None,
            max_lambda: 1e12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub initial_chi2: f64,
    pub final_chi2: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// Cost before the first step and after every accepted step.
    pub chi2_trace: Vec<f64>,
    pub sparse: bool,
}

fn robust_cost(sq: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        Some(d) if sq > d * d => {
            let n = sq.sqrt();
            (2.0 * d * n - d * d, d / n)
        }
        _ => (sq, 1.0),
    }
}

/// Cost under the configured kernel, `sum omega * rho(|r|^2)`.
pub fn robust_chi2(graph: &PoseGraph, huber_delta: Option<f64>) -> Result<f64> {
    let mut total = 0.0;
    for e in &graph.edges {
        let r = graph.edge_residual(e)?;
        total += e.information * robust_cost(r.0.norm_squared(), huber_delta).0;
    }
    Ok(total)
}

struct Linearization {
    blocks: HashMap<(usize, usize), Matrix7>,
    gradient: DVector<f64>,
}

fn linearize(graph: &PoseGraph, index: &BTreeMap<usize, usize>, cfg: &SolverConfig) -> Result<Linearization> {
    let n = index.len() * 7;
    let mut blocks: HashMap<(usize, usize), Matrix7> = HashMap::new();
    let mut gradient = DVector::zeros(n);
    for e in &graph.edges {
        let (from, to) = (graph.node(e.from)?, graph.node(e.to)?);
        let r = residual(e, from, to)?;
        let (j_from, j_to) = edge_jacobians(e, from, to)?;
        let w = e.information * robust_cost(r.0.norm_squared(), cfg.huber_delta).1;
        let vars: Vec<(usize, Matrix7)> = [(e.from, j_from), (e.to, j_to)]
            .into_iter()
            .filter_map(|(id, j)| index.get(&id).map(|&v| (v, j)))
            .collect();
        for &(a, ja) in &vars {
            let g: SVector<f64, 7> = ja.transpose() * r.0 * w;
            let mut seg = gradient.fixed_rows_mut::<7>(a * 7);
            seg += g;
            for &(b, jb) in &vars {
                *blocks.entry((a, b)).or_insert_with(Matrix7::zeros) += ja.transpose() * jb * w;
            }
        }
    }
    Ok(Linearization { blocks, gradient })
}

fn solve_dense(lin: &Linearization, n: usize, lambda: f64) -> Option<DVector<f64>> {
    let mut h = DMatrix::zeros(n, n);
    for (&(a, b), block) in &lin.blocks {
        let mut view = h.view_mut((a * 7, b * 7), (7, 7));
        view += block;
    }
    for i in 0..n {
        h[(i, i)] += lambda;
    }
    h.cholesky().map(|c| c.solve(&(-&lin.gradient)))
}

fn solve_sparse(lin: &Linearization, n: usize, lambda: f64) -> Option<DVector<f64>> {
    let mut coo = CooMatrix::new(n, n);
    let mut keys: Vec<&(usize, usize)> = lin.blocks.keys().collect();
    keys.sort_unstable();
    for key in keys {
        let block = &lin.blocks[key];
        for c in 0..7 {
            for r in 0..7 {
                let v = block[(r, c)];
                if v != 0.0 {
                    coo.push(key.0 * 7 + r, key.1 * 7 + c, v);
                }
            }
        }
    }
    for i in 0..n {
        coo.push(i, i, lambda);
    }
    let csc = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&csc).ok()?;
    let rhs = DMatrix::from_column_slice(n, 1, (-&lin.gradient).as_slice());
    let x = chol.solve(&rhs);
    Some(DVector::from_column_slice(x.as_slice()))
}

/// Minimizes the weighted sum of squared edge residuals over the free nodes.
///
/// Steps are applied as `T <- T * exp(delta)`; fixed nodes never move.
pub fn optimize(graph: &mut PoseGraph, cfg: &SolverConfig) -> Result<SolveReport> {
    if let Some(component) = graph.unanchored_components().into_iter().next() {
        return Err(Error::SingularSystem { component });
    }
    let index: BTreeMap<usize, usize> = graph
        .nodes
        .keys()
        .filter(|id| !graph.fixed.contains(id))
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let n = index.len() * 7;
    let sparse = graph.nodes.len() >= cfg.dense_threshold;
    let initial = robust_chi2(graph, cfg.huber_delta)?;
    let mut report = SolveReport {
        initial_chi2: initial,
        final_chi2: initial,
        iterations: 0,
        converged: false,
        chi2_trace: vec![initial],
        sparse,
    };
    if n == 0 || initial == 0.0 {
        report.converged = true;
        return Ok(report);
    }

    let mut lambda = cfg.lm_lambda0;
    let mut current = initial;
    'outer: for _ in 0..cfg.max_iters {
        let lin = linearize(graph, &index, cfg)?;
        if lin.gradient.amax() < cfg.grad_tol {
            report.converged = true;
            break;
        }
        loop {
            let step = if sparse {
                solve_sparse(&lin, n, lambda)
            } else {
                solve_dense(&lin, n, lambda)
            };
            let Some(step) = step else {
                return Err(Error::SingularSystem {
                    component: index.keys().copied().collect(),
                });
            };
            let mut candidate = graph.clone();
            for (id, &v) in &index {
                let delta = Sim3Tangent(step.fixed_rows::<7>(v * 7).into_owned());
                let pose: Sim3 = candidate.nodes[id].retract(&delta);
                candidate.nodes.insert(*id, pose);
            }
            let cost = robust_chi2(&candidate, cfg.huber_delta).unwrap_or(f64::INFINITY);
            if cost < current {
                let rel = (current - cost) / current;
                *graph = candidate;
                current = cost;
                lambda /= cfg.lambda_factor;
                report.iterations += 1;
                report.chi2_trace.push(cost);
                if rel < cfg.chi2_rel_tol || cost == 0.0 {
                    report.converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= cfg.lambda_factor;
            if lambda > cfg.max_lambda {
                // No descent direction left at working precision.
                report.converged = true;
                break 'outer;
            }
        }
    }
    report.final_chi2 = current;
    Ok(report)
}
