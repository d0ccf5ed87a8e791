//! Adaptive augmentation: centrality-driven edge-removal and feature-masking
//! probabilities, and sampling of corrupted graph views.
//!
//! Both probability vectors go through the same normalization. Weights are
//! log-transformed, `s = ln w`, and mapped to
//! `min((s_max - s) / (s_max - mean(s)) * budget, p_tau)`, so the most central
//! edge (or feature) is never dropped and the average probability tracks the
//! budget until the cut-off starts to bind.

use ndarray::Array2;
use rand::Rng;

use crate::centrality::{edge_centrality, node_centrality, CentralityMeasure, EdgeWeights, NodeCentrality};
use crate::error::{GcaError, Result};
use crate::graph::{Graph, NormAdjacency};

/// Log-weight normalization shared by edges and feature dimensions.
///
/// Zero weights are replaced with the smallest positive weight before the log.
/// When every weight is zero, or all are equal, the result is the uniform
/// `min(budget, p_tau)`.
pub fn normalize_log_weights(weights: &[f64], budget: f64, p_tau: f64) -> Vec<f64> {
    let uniform = vec![budget.min(p_tau); weights.len()];
    let min_positive = weights
        .iter()
        .copied()
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_positive.is_finite() {
        return uniform;
    }
    let logs: Vec<f64> = weights.iter().map(|&w| w.max(min_positive).ln()).collect();
    let s_max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let spread = s_max - mean;
    if spread <= 1e-12 * s_max.abs().max(1.0) {
        return uniform;
    }
    logs.iter()
        .map(|&s| ((s_max - s) / spread * budget).clamp(0.0, p_tau))
        .collect()
}

/// Per-arc removal probabilities. For undirected graphs the normalization
/// statistics are taken over distinct pairs and the result is written to both
/// arcs of each pair.
pub fn edge_drop_probs(graph: &Graph, w: &EdgeWeights, p_e: f64, p_tau: f64) -> Result<Vec<f64>> {
    if w.values.len() != graph.num_arcs() {
        return Err(GcaError::Shape(format!(
            "{} edge weights for {} arcs",
            w.values.len(),
            graph.num_arcs()
        )));
    }
    let units = graph.edge_units();
    let unit_weights: Vec<f64> = units.iter().map(|&(arc, _)| w.values[arc]).collect();
    let unit_probs = normalize_log_weights(&unit_weights, p_e, p_tau);
    let mut probs = vec![0.0; graph.num_arcs()];
    for (&(arc, rev), p) in units.iter().zip(unit_probs) {
        probs[arc] = p;
        if let Some(rev) = rev {
            probs[rev] = p;
        }
    }
    Ok(probs)
}

/// Feature-dimension weights: centrality-weighted occurrence counts for
/// binary features, centrality-weighted magnitudes for dense ones.
pub fn feature_weights(graph: &Graph, nc: &NodeCentrality) -> Result<Vec<f64>> {
    if nc.scores.len() != graph.num_nodes() {
        return Err(GcaError::Shape(format!(
            "{} centrality scores for {} nodes",
            nc.scores.len(),
            graph.num_nodes()
        )));
    }
    let mut weights = vec![0.0; graph.num_features()];
    let binary = graph.binary_features();
    for (row, &phi) in graph.features().outer_iter().zip(&nc.scores) {
        for (w, &x) in weights.iter_mut().zip(row.iter()) {
            let x = f64::from(x);
            *w += if binary { x * phi } else { x.abs() * phi };
        }
    }
    Ok(weights)
}

/// Per-dimension masking probabilities from feature weights.
pub fn feature_mask_probs(w_f: &[f64], p_f: f64, p_tau: f64) -> Vec<f64> {
    normalize_log_weights(w_f, p_f, p_tau)
}

/// Removal and masking probabilities for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    pub edge_drop_probs: Vec<f64>,
    pub feature_mask_probs: Vec<f64>,
    pub p_e: f64,
    pub p_f: f64,
    pub p_tau: f64,
    pub adaptive_topology: bool,
    pub adaptive_attribute: bool,
    edge_units: Vec<(usize, Option<usize>)>,
}

/// Edge and feature masks drawn for one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSample {
    /// Per-arc keep flags in CSR order.
    pub kept_arcs: Vec<bool>,
    /// `true` where the feature dimension survives.
    pub feature_keep: Vec<bool>,
}

fn check_budgets(p_e: f64, p_f: f64, p_tau: f64) -> Result<()> {
    for (name, p) in [("p_e", p_e), ("p_f", p_f)] {
        if !(0.0..1.0).contains(&p) {
            return Err(GcaError::InvalidConfig(format!("{name} = {p} is outside [0, 1)")));
        }
    }
    if !(p_tau > 0.0 && p_tau < 1.0) {
        return Err(GcaError::InvalidConfig(format!("p_tau = {p_tau} is outside (0, 1)")));
    }
    Ok(())
}

impl AugmentationPlan {
    /// Builds a plan from precomputed centrality. `nc` may be `None` only when
    /// both switches select the uniform scheme.
    pub fn from_centrality(
        graph: &Graph,
        nc: Option<&NodeCentrality>,
        p_e: f64,
        p_f: f64,
        p_tau: f64,
        adaptive_topology: bool,
        adaptive_attribute: bool,
    ) -> Result<Self> {
        check_budgets(p_e, p_f, p_tau)?;
        let need = || {
            nc.ok_or_else(|| GcaError::InvalidConfig("adaptive plan needs node centrality".into()))
        };
        let edge_drop_probs = if adaptive_topology {
            let w = edge_centrality(graph, need()?)?;
            edge_drop_probs(graph, &w, p_e, p_tau)?
        } else {
            vec![p_e.min(p_tau); graph.num_arcs()]
        };
        let feature_mask_probs = if adaptive_attribute {
            feature_mask_probs(&feature_weights(graph, need()?)?, p_f, p_tau)
        } else {
            vec![p_f.min(p_tau); graph.num_features()]
        };
        Ok(Self {
            edge_drop_probs,
            feature_mask_probs,
            p_e,
            p_f,
            p_tau,
            adaptive_topology,
            adaptive_attribute,
            edge_units: graph.edge_units(),
        })
    }

    /// Draws the arc and feature masks for one view. Each undirected pair is
    /// kept or dropped as a unit; one feature mask is shared by all nodes.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ViewSample {
        let mut kept_arcs = vec![true; self.edge_drop_probs.len()];
        for &(arc, rev) in &self.edge_units {
            if rng.random::<f64>() < self.edge_drop_probs[arc] {
                kept_arcs[arc] = false;
                if let Some(rev) = rev {
                    kept_arcs[rev] = false;
                }
            }
        }
        let feature_keep = self
            .feature_mask_probs
            .iter()
            .map(|&p| rng.random::<f64>() >= p)
            .collect();
        ViewSample {
            kept_arcs,
            feature_keep,
        }
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        if self.edge_drop_probs.len() != graph.num_arcs()
            || self.feature_mask_probs.len() != graph.num_features()
        {
            return Err(GcaError::Shape("augmentation plan does not match graph".into()));
        }
        Ok(())
    }
}

/// Builds a plan, computing the requested centrality on `graph` when either
/// level is adaptive.
pub fn build_plan(
    graph: &Graph,
    measure: CentralityMeasure,
    p_e: f64,
    p_f: f64,
    p_tau: f64,
    adaptive_topology: bool,
    adaptive_attribute: bool,
) -> Result<AugmentationPlan> {
    check_budgets(p_e, p_f, p_tau)?;
    let nc = if adaptive_topology || adaptive_attribute {
        Some(node_centrality(graph, measure)?)
    } else {
        None
    };
    AugmentationPlan::from_centrality(
        graph,
        nc.as_ref(),
        p_e,
        p_f,
        p_tau,
        adaptive_topology,
        adaptive_attribute,
    )
}

impl ViewSample {
    /// Feature matrix of the view in 64-bit precision.
    pub fn masked_features(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = features.clone();
        for (mut col, &keep) in out.columns_mut().into_iter().zip(&self.feature_keep) {
            if !keep {
                col.fill(0.0);
            }
        }
        out
    }

    /// Propagation operator of the view.
    pub fn norm_adjacency(&self, graph: &Graph) -> NormAdjacency {
        NormAdjacency::from_graph_arcs(graph, Some(&self.kept_arcs))
    }
}

/// Samples a corrupted copy of `graph`.
pub fn sample_view<R: Rng + ?Sized>(graph: &Graph, plan: &AugmentationPlan, rng: &mut R) -> Result<Graph> {
    plan.check_graph(graph)?;
    let sample = plan.sample(rng);
    let mut features = graph.features().clone();
    for (mut col, &keep) in features.columns_mut().into_iter().zip(&sample.feature_keep) {
        if !keep {
            col.fill(0.0);
        }
    }
    graph.with_arcs_and_features(&sample.kept_arcs, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{karate_club, normalized_adjacency};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn log_normalization_example() {
        let p = normalize_log_weights(&[1.0, E, E * E], 0.3, 0.7);
        assert!(close(&p, &[0.6, 0.3, 0.0]), "{p:?}");
        let pf = feature_mask_probs(&[1.0, E, E * E], 0.3, 0.7);
        assert!(close(&pf, &[0.6, 0.3, 0.0]));
    }

    #[test]
    fn degenerate_weights_fall_back_to_uniform() {
        assert_eq!(normalize_log_weights(&[2.0; 5], 0.3, 0.7), vec![0.3; 5]);
        assert_eq!(normalize_log_weights(&[0.0; 3], 0.9, 0.7), vec![0.7; 3]);
        assert_eq!(normalize_log_weights(&[0.1; 7], 0.2, 0.7), vec![0.2; 7]);
        assert_eq!(normalize_log_weights(&[1.0, 5.0, 2.0], 0.0, 0.7), vec![0.0; 3]);
    }

    #[test]
    fn zero_weights_take_the_smallest_positive() {
        let p = normalize_log_weights(&[0.0, 1.0, E], 0.3, 0.9);
        // s = (0, 0, 1): mean 1/3, spread 2/3
        assert!(close(&p, &[0.45, 0.45, 0.0]), "{p:?}");
    }

    #[test]
    fn cutoff_applies() {
        let p = normalize_log_weights(&[1.0, E.powi(10), E.powi(10), E.powi(10)], 0.5, 0.7);
        assert_eq!(p[0], 0.7);
    }

    #[test]
    fn feature_weight_examples() {
        let nc = |s: Vec<f64>| NodeCentrality {
            measure: CentralityMeasure::Degree,
            scores: s,
        };
        let bin = Graph::from_edges(2, &[], false, array![[1.0f32, 0.0], [1.0, 1.0]], None, None)
            .unwrap();
        assert_eq!(feature_weights(&bin, &nc(vec![1.0, 2.0])).unwrap(), [3.0, 2.0]);

        let dense = Graph::from_edges(1, &[], false, array![[-1.0f32, 0.5]], None, None).unwrap();
        assert_eq!(feature_weights(&dense, &nc(vec![2.0])).unwrap(), [2.0, 1.0]);

        let zero_col =
            Graph::from_edges(2, &[], false, array![[0.0f32, 0.3], [0.0, 1.0]], None, None).unwrap();
        assert_eq!(feature_weights(&zero_col, &nc(vec![1.0, 1.0])).unwrap()[0], 0.0);
    }

    #[test]
    fn undirected_pairs_share_probability() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::Degree, 0.4, 0.2, 0.7, true, true).unwrap();
        for (arc, rev) in g.edge_units() {
            assert_eq!(plan.edge_drop_probs[arc], plan.edge_drop_probs[rev.unwrap()]);
        }
        assert!(plan.edge_drop_probs.iter().any(|&p| p == 0.0));
        assert!(plan.edge_drop_probs.iter().all(|&p| (0.0..=0.7).contains(&p)));
    }

    #[test]
    fn uniform_plan_values() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::Degree, 0.3, 0.2, 0.7, false, false).unwrap();
        assert!(plan.edge_drop_probs.iter().all(|&p| p == 0.3));
        assert!(plan.feature_mask_probs.iter().all(|&p| p == 0.2));
        assert!(build_plan(&g, CentralityMeasure::Degree, 0.3, 0.2, 1.0, true, true).is_err());
        assert!(build_plan(&g, CentralityMeasure::Degree, 1.2, 0.2, 0.7, true, true).is_err());
    }

    #[test]
    fn identity_plan_reproduces_graph() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::PageRank, 0.0, 0.0, 0.7, true, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            assert_eq!(sample_view(&g, &plan, &mut rng).unwrap(), g);
        }
    }

    #[test]
    fn masked_dimension_is_zero_for_every_node() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::Degree, 0.5, 0.5, 0.7, true, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let view = sample_view(&g, &plan, &mut rng).unwrap();
        let mut masked = 0;
        for j in 0..g.num_features() {
            let col = view.features().column(j);
            if col.iter().all(|&x| x == 0.0) {
                masked += 1;
            } else {
                assert_eq!(col, g.features().column(j));
            }
        }
        assert!(masked > 0);
        assert!(view.num_arcs() < g.num_arcs());
        for (u, v) in view.arcs() {
            assert!(g.arc_index(u, v).is_some());
            assert!(view.arc_index(v, u).is_some());
        }
    }

    #[test]
    fn view_parts_match_sampled_graph() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::Degree, 0.3, 0.3, 0.7, true, true).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let view = sample_view(&g, &plan, &mut a).unwrap();
        let parts = plan.sample(&mut b);
        assert_eq!(parts.norm_adjacency(&g), normalized_adjacency(&view));
        assert_eq!(parts.masked_features(&g.features_f64()), view.features_f64());
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let g = karate_club();
        let plan = build_plan(&g, CentralityMeasure::Degree, 0.3, 0.3, 0.7, false, false).unwrap();
        let other = Graph::from_edges(3, &[(0, 1)], false, Array2::zeros((3, 2)), None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_view(&other, &plan, &mut rng).is_err());
    }
}
