//! Node and hyperedge densities and their normalization into the range of
//! attention values.
//!
//! A node's density is the sum of cosine similarities to its hypergraph
//! neighbours (co-members of any hyperedge) that exceed a threshold δ; a
//! hyperedge's density is the sum of its members' densities. Before being
//! added to attention scores, densities are min-max rescaled onto
//! `[0, max(max(a), 0)]` where `a` are the raw attention values of the same
//! layer.
//!
//! Densities are computed from the current projected features and enter
//! attention as an additive constant: no gradient flows through them.

use crate::hypergraph::HyperGraph;
use crate::numerics::Matrix;

/// Default similarity threshold δ.
pub const DEFAULT_DELTA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub node_density: Vec<f64>,
    pub edge_density: Vec<f64>,
    pub threshold: f64,
}

impl DensityProfile {
    /// Node densities on the rows of `features` and the derived edge densities.
    pub fn compute(features: &Matrix, graph: &HyperGraph, delta: f64) -> Self {
        let node_density = node_densities(features, graph, delta);
        let edge_density = hyperedge_densities(&node_density, graph);
        Self {
            node_density,
            edge_density,
            threshold: delta,
        }
    }

    /// CSV with header `kind,index,density`, nodes first.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,index,density\n");
        for (i, d) in self.node_density.iter().enumerate() {
            s.push_str(&format!("node,{i},{d}\n"));
        }
        for (e, d) in self.edge_density.iter().enumerate() {
            s.push_str(&format!("edge,{e},{d}\n"));
        }
        s
    }
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero when either vector is all zeros.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (nu * nv)
}

/// `ρ(i) = Σ_{j ∈ N(i)} sim(i, j) · [sim(i, j) > δ]` over the rows of `features`.
pub fn node_densities(features: &Matrix, graph: &HyperGraph, delta: f64) -> Vec<f64> {
    let n = graph.node_count();
    debug_assert_eq!(features.rows(), n);
    let norms: Vec<f64> = (0..n).map(|i| norm(features.row(i))).collect();
    (0..n)
        .map(|i| {
            let xi = features.row(i);
            let mut total = 0.0;
            for &j in graph.neighbors_unchecked(i) {
                let sim = if norms[i] == 0.0 || norms[j] == 0.0 {
                    0.0
                } else {
                    let dot: f64 = xi.iter().zip(features.row(j)).map(|(a, b)| a * b).sum();
                    dot / (norms[i] * norms[j])
                };
                if sim > delta {
                    total += sim;
                }
            }
            total
        })
        .collect()
}

/// `ρ(e) = Σ_{i ∈ e} ρ(i)`.
pub fn hyperedge_densities(node_density: &[f64], graph: &HyperGraph) -> Vec<f64> {
    (0..graph.edge_count())
        .map(|e| graph.edge_members(e).iter().map(|&i| node_density[i]).sum())
        .collect()
}

/// Min-max rescales `density` onto `[0, U]` with `U = max(max(attention), 0)`.
///
/// All-equal densities carry no signal and map to zeros, as does an
/// all-negative attention range.
pub fn normalize_density(density: &[f64], attention: &[f64]) -> Vec<f64> {
    let upper = attention.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let lo = density.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if density.is_empty() || hi <= lo || upper == 0.0 {
        return vec![0.0; density.len()];
    }
    let span = hi - lo;
    density
        .iter()
        .map(|&d| ((d - lo) / span * upper).clamp(0.0, upper))
        .collect()
}

/// The density bias actually fed to attention: the normalized density when
/// density awareness is on, zeros otherwise.
pub fn density_bias(enabled: bool, density: &[f64], attention: &[f64]) -> Vec<f64> {
    if enabled {
        normalize_density(density, attention)
    } else {
        vec![0.0; density.len()]
    }
}
