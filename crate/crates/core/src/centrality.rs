//! Node centrality measures and the edge centrality derived from them.

use std::fmt;
use std::str::FromStr;

use crate::error::{GcaError, Result};
use crate::graph::Graph;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CentralityMeasure {
    Degree,
    Eigenvector,
    PageRank,
}

impl CentralityMeasure {
    pub const ALL: [CentralityMeasure; 3] = [Self::Degree, Self::Eigenvector, Self::PageRank];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Degree => "degree",
            Self::Eigenvector => "eigenvector",
            Self::PageRank => "pagerank",
        }
    }
}

impl fmt::Display for CentralityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CentralityMeasure {
    type Err = GcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "degree" | "de" => Ok(Self::Degree),
            "eigenvector" | "ev" => Ok(Self::Eigenvector),
            "pagerank" | "pr" => Ok(Self::PageRank),
            other => Err(GcaError::InvalidConfig(format!(
                "unknown centrality measure {other:?} (expected degree, eigenvector or pagerank)"
            ))),
        }
    }
}

/// Per-node centrality scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCentrality {
    pub measure: CentralityMeasure,
    pub scores: Vec<f64>,
}

/// Per-arc edge centrality, aligned with the graph's CSR arc order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub values: Vec<f64>,
}

/// Computes `measure` with default iteration settings.
pub fn node_centrality(graph: &Graph, measure: CentralityMeasure) -> Result<NodeCentrality> {
    match measure {
        CentralityMeasure::Degree => Ok(degree_centrality(graph)),
        CentralityMeasure::Eigenvector => eigenvector_centrality(graph, DEFAULT_TOL, DEFAULT_MAX_ITER),
        CentralityMeasure::PageRank => {
            pagerank_centrality(graph, DEFAULT_DAMPING, DEFAULT_TOL, DEFAULT_MAX_ITER)
        }
    }
}

/// Degree for undirected graphs, in-degree for directed ones.
pub fn degree_centrality(graph: &Graph) -> NodeCentrality {
    let mut scores = vec![0.0; graph.num_nodes()];
    for (_, v) in graph.arcs() {
        scores[v] += 1.0;
    }
    NodeCentrality {
        measure: CentralityMeasure::Degree,
        scores,
    }
}

/// `y = M x` where `M` sums each node's in-neighbors (plain adjacency for
/// undirected graphs).
fn incoming_sum(graph: &Graph, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (u, v) in graph.arcs() {
        y[v] += x[u];
    }
}

/// Leading eigenvector of the adjacency (incoming-edge) operator, unit L2 norm.
///
/// Power iteration runs on `M + I`, which has the same eigenvectors as `M` and
/// a strictly dominant Perron eigenvalue even on bipartite graphs.
pub fn eigenvector_centrality(graph: &Graph, tol: f64, max_iter: usize) -> Result<NodeCentrality> {
    if graph.num_arcs() == 0 {
        return Err(GcaError::InvalidGraph(
            "eigenvector centrality needs at least one edge".into(),
        ));
    }
    let n = graph.num_nodes();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        incoming_sum(graph, &x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(GcaError::NonFinite("eigenvector iteration collapsed to zero".into()));
        }
        residual = 0.0;
        for (yi, xi) in y.iter_mut().zip(&mut x) {
            *yi /= norm;
            residual = residual.max((*yi - *xi).abs());
            *xi = *yi;
        }
        if residual < tol {
            return Ok(NodeCentrality {
                measure: CentralityMeasure::Eigenvector,
                scores: x,
            });
        }
    }
    Err(GcaError::NotConverged {
        what: "eigenvector centrality",
        iterations: max_iter,
        residual,
    })
}

/// Unnormalized PageRank: the fixed point of `σ = α A D⁻¹ σ + 1`.
///
/// Dangling nodes contribute nothing; undirected edges act as two arcs.
pub fn pagerank_centrality(
    graph: &Graph,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NodeCentrality> {
    let n = graph.num_nodes();
    let out_degree: Vec<f64> = (0..n).map(|u| graph.neighbors(u).len() as f64).collect();
    let mut sigma = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        next.iter_mut().for_each(|v| *v = 1.0);
        for (u, v) in graph.arcs() {
            next[v] += alpha * sigma[u] / out_degree[u];
        }
        residual = next
            .iter()
            .zip(&sigma)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut sigma, &mut next);
        if residual < tol {
            return Ok(NodeCentrality {
                measure: CentralityMeasure::PageRank,
                scores: sigma,
            });
        }
    }
    Err(GcaError::NotConverged {
        what: "pagerank",
        iterations: max_iter,
        residual,
    })
}

/// `‖α A D⁻¹ σ + 1 − σ‖_∞` for a candidate PageRank vector.
pub fn pagerank_residual(graph: &Graph, alpha: f64, sigma: &[f64]) -> f64 {
    let n = graph.num_nodes();
    let mut next = vec![1.0; n];
    for (u, v) in graph.arcs() {
        next[v] += alpha * sigma[u] / graph.neighbors(u).len() as f64;
    }
    next.iter()
        .zip(sigma)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Edge centrality: mean endpoint score for undirected arcs, the score of the
/// node pointed to for directed arcs.
pub fn edge_centrality(graph: &Graph, nc: &NodeCentrality) -> Result<EdgeWeights> {
    if nc.scores.len() != graph.num_nodes() {
        return Err(GcaError::Shape(format!(
            "{} centrality scores for {} nodes",
            nc.scores.len(),
            graph.num_nodes()
        )));
    }
    let phi = &nc.scores;
    let values = graph
        .arcs()
        .map(|(u, v)| {
            if graph.is_directed() {
                phi[v]
            } else {
                (phi[u] + phi[v]) / 2.0
            }
        })
        .collect();
    Ok(EdgeWeights { values })
}
