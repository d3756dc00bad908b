//! Reads a cluster's precision matrix as a Markov random field over
//! (attribute, layer) nodes and ranks attributes by betweenness centrality.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SticcError};
use crate::model::ToeplitzPrecision;

/// Node `i` is attribute `i % dim` of layer `i / dim`, matching the row
/// order of the assembled precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrfGraph {
    pub dim: usize,
    pub radius: usize,
    /// `(u, v, Θ[u][v])` with `u < v`.
    pub edges: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

impl MrfGraph {
    pub fn node_count(&self) -> usize {
        self.dim * self.radius
    }

    /// `(attribute, layer)` of node `i`.
    pub fn node(&self, i: usize) -> (usize, usize) {
        (i % self.dim, i / self.dim)
    }

    pub fn write_edges_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node_u", "node_v", "weight"])?;
        for &(u, v, x) in &self.edges {
            w.write_record([u.to_string(), v.to_string(), x.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Edge `(u, v)` for every off-diagonal entry with `|Θ[u][v]| > threshold`.
pub fn extract_graph(tp: &ToeplitzPrecision, threshold: f64) -> Result<MrfGraph> {
    if !(threshold >= 0.0) {
        return Err(SticcError::Parameter(format!("threshold must be >= 0, got {threshold}")));
    }
    let theta = tp.assemble();
    let n = theta.nrows();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if theta[(u, v)].abs() > threshold {
                edges.push((u, v, theta[(u, v)]));
            }
        }
    }
    Ok(MrfGraph { dim: tp.dim(), radius: tp.radius(), edges, threshold })
}

/// Normalised betweenness of every node (Brandes, unweighted shortest
/// paths); each unordered pair counts once and the result is divided by
/// `(n - 1)(n - 2) / 2`.
pub fn node_betweenness(g: &MrfGraph) -> Vec<f64> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for &(u, v, _) in &g.edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    if n < 3 {
        return vec![0.0; n];
    }
    // Every pair was visited from both ends.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    cb.iter().map(|c| c * scale).collect()
}

/// Mean node betweenness of each attribute over its layers.
pub fn betweenness(g: &MrfGraph) -> Vec<f64> {
    let nodes = node_betweenness(g);
    let mut sums = vec![0.0; g.dim];
    for (i, b) in nodes.iter().enumerate() {
        sums[g.node(i).0] += b;
    }
    sums.iter().map(|s| s / g.radius as f64).collect()
}

/// Centrality keyed by attribute index, ready for JSON export.
pub fn centrality_map(values: &[f64]) -> BTreeMap<String, f64> {
    values.iter().enumerate().map(|(i, v)| (i.to_string(), *v)).collect()
}

/// Attribute indices ordered from most to least central; ties by index.
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}
