//! Assignment step: label every subregion given fixed cluster models.
//!
//! The cost of a labelling is the sum of node costs `-L(Θ_k; X_n)` plus `β`
//! for every point whose nearest subregion carries a different label. The
//! nearest-subregion pointers form a functional graph, so each connected
//! component holds at most one cycle; with mutual nearest neighbours that
//! cycle is just a doubled edge and the component is a tree.
//!
//! The solver runs a min-sum dynamic program over a spanning tree: a
//! backward sweep from the leaves accumulates, for every point and label,
//! the cheapest cost of everything hanging below it, and a forward sweep
//! from the root reads the labels back. Components are joined by the
//! subregion set's links (each also worth `β`), which makes the whole point
//! set one tree: with `β → ∞` every point ends up in the same cluster.
//! Remaining cycles are handled exactly by conditioning on one endpoint.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dataset::SubregionSet;
use crate::error::{Result, SticcError};
use crate::model::ClusterModel;

/// Cluster labels together with the two parts of the assignment objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// Sum of negative log likelihoods of every point under its cluster.
    pub objective_likelihood: f64,
    /// `β` times the number of points whose nearest subregion is labelled differently.
    pub objective_penalty: f64,
}

impl Assignment {
    pub fn objective(&self) -> f64 {
        self.objective_likelihood + self.objective_penalty
    }
}

/// Beyond this many enumerated cycle conditionings extra cycle edges are
/// left out of the dynamic program (their penalty is still reported).
const MAX_CONDITIONINGS: usize = 4096;

/// `N x K` table of negative log likelihoods.
pub fn node_costs(subs: &SubregionSet, models: &[ClusterModel]) -> Result<Vec<Vec<f64>>> {
    if models.is_empty() {
        return Err(SticcError::Parameter("at least one cluster model is required".into()));
    }
    for m in models {
        if m.width() != subs.width() {
            return Err(SticcError::Dimension { expected: subs.width(), actual: m.width() });
        }
    }
    let row = |x: &Vec<f64>| -> Vec<f64> {
        models
            .iter()
            .map(|m| -m.log_likelihood(x).expect("widths checked above"))
            .collect()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(subs.stacked().par_iter().map(row).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(subs.stacked().iter().map(row).collect())
    }
}

/// Number of points whose label differs from their nearest subregion's.
pub fn disagreements(nearest: &[usize], labels: &[usize]) -> usize {
    nearest.iter().enumerate().filter(|&(n, &m)| labels[n] != labels[m]).count()
}

/// Scores `labels` against a cost table: `(likelihood part, penalty part)`.
pub fn score(nearest: &[usize], costs: &[Vec<f64>], labels: &[usize], beta: f64) -> (f64, f64) {
    let lik = labels.iter().enumerate().map(|(n, &k)| costs[n][k]).sum();
    (lik, beta * disagreements(nearest, labels) as f64)
}

/// Labels every subregion under `models` with spatial penalty `beta`.
pub fn assign(subs: &SubregionSet, models: &[ClusterModel], beta: f64) -> Result<Assignment> {
    let costs = node_costs(subs, models)?;
    assign_costs(subs.nearest_subregion(), subs.links(), &costs, beta)
}

/// As [`assign`], but keeps `previous` when it scores strictly better.
pub fn assign_from(subs: &SubregionSet, models: &[ClusterModel], beta: f64, previous: &[usize]) -> Result<Assignment> {
    let costs = node_costs(subs, models)?;
    let fresh = assign_costs(subs.nearest_subregion(), subs.links(), &costs, beta)?;
    if previous.len() == fresh.labels.len() && previous.iter().all(|&k| k < models.len()) {
        let (lik, pen) = score(subs.nearest_subregion(), &costs, previous, beta);
        if lik + pen < fresh.objective() {
            return Ok(Assignment { labels: previous.to_vec(), objective_likelihood: lik, objective_penalty: pen });
        }
    }
    Ok(fresh)
}

/// Solves the assignment problem on an explicit cost table.
///
/// `nearest[n]` is the nearest subregion of point `n`; `links` are extra
/// penalised pairs used only to couple components. Ties go to the lower
/// cluster index.
pub fn assign_costs(nearest: &[usize], links: &[(usize, usize)], costs: &[Vec<f64>], beta: f64) -> Result<Assignment> {
    let n = costs.len();
    let k = costs.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(SticcError::Parameter("at least one cluster is required".into()));
    }
    if nearest.len() != n {
        return Err(SticcError::Dimension { expected: n, actual: nearest.len() });
    }
    if costs.iter().any(|row| row.len() != k) {
        return Err(SticcError::Parameter("ragged cost table".into()));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(SticcError::Parameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    if let Some(&m) = nearest.iter().find(|&&m| m >= n) {
        return Err(SticcError::Parameter(format!("nearest subregion {m} out of range")));
    }

    let labels = if k == 1 {
        vec![0; n]
    } else if beta == 0.0 {
        costs.iter().map(|row| argmin(row.iter().copied())).collect()
    } else {
        TreeProgram::new(nearest, links, n, beta).solve(costs)
    };
    let (objective_likelihood, objective_penalty) = score(nearest, costs, &labels, beta);
    Ok(Assignment { labels, objective_likelihood, objective_penalty })
}

/// First index of the minimum.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 || (i == 0 && v.is_infinite()) {
            best = (i, v);
        }
    }
    best.0
}

/// Spanning-tree layout of the coupling graph.
struct TreeProgram {
    /// Points in breadth-first order, roots first within each tree.
    order: Vec<usize>,
    /// Parent and edge weight, `None` for roots.
    parent: Vec<Option<(usize, f64)>>,
    /// Edges left out of the tree: `(u, v, weight)`.
    extra: Vec<(usize, usize, f64)>,
}

impl TreeProgram {
    fn new(nearest: &[usize], links: &[(usize, usize)], n: usize, beta: f64) -> Self {
        let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let pairs = nearest.iter().enumerate().map(|(i, &m)| (i, m)).chain(links.iter().copied());
        for (a, b) in pairs {
            if a != b && a < n && b < n {
                *weights.entry((a.min(b), a.max(b))).or_insert(0.0) += beta;
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &w) in &weights {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }

        let mut order = Vec::with_capacity(n);
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut extra = Vec::new();
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &(v, w) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        parent[v] = Some((u, w));
                        queue.push_back(v);
                    } else if u < v && parent[v].is_none_or(|(p, _)| p != u) && parent[u].is_none_or(|(p, _)| p != v) {
                        extra.push((u, v, w));
                    }
                }
            }
        }
        Self { order, parent, extra }
    }

    fn solve(&self, costs: &[Vec<f64>]) -> Vec<usize> {
        let k = costs[0].len();
        let extra = &self.extra[..self.usable_extra(k)];
        if extra.is_empty() {
            return self.run(costs.to_vec()).1;
        }

        // condition on the label of the first endpoint of every extra edge
        let mut anchors: Vec<usize> = extra.iter().map(|e| e.0).collect();
        anchors.sort_unstable();
        anchors.dedup();
        let combos = k.pow(anchors.len() as u32);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for code in 0..combos {
            let mut fixed = vec![0; anchors.len()];
            let mut c = code;
            for f in fixed.iter_mut().rev() {
                *f = c % k;
                c /= k;
            }
            let mut unary = costs.to_vec();
            for (&a, &lab) in anchors.iter().zip(&fixed) {
                for (j, cost) in unary[a].iter_mut().enumerate() {
                    if j != lab {
                        *cost = f64::INFINITY;
                    }
                }
            }
            for &(u, v, w) in extra {
                let lab = fixed[anchors.binary_search(&u).expect("anchor")];
                for (j, cost) in unary[v].iter_mut().enumerate() {
                    if j != lab {
                        *cost += w;
                    }
                }
            }
            let (total, labels) = self.run(unary);
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, labels));
            }
        }
        best.expect("at least one conditioning").1
    }

    fn usable_extra(&self, k: usize) -> usize {
        let mut anchors = Vec::new();
        for (i, e) in self.extra.iter().enumerate() {
            if !anchors.contains(&e.0) {
                anchors.push(e.0);
            }
            if k.checked_pow(anchors.len() as u32).is_none_or(|c| c > MAX_CONDITIONINGS) {
                return i;
            }
        }
        self.extra.len()
    }

    /// Min-sum over the spanning forest. `below[n][k]` holds the cost of
    /// point `n` taking label `k` plus the best cost of its subtree.
    fn run(&self, mut below: Vec<Vec<f64>>) -> (f64, Vec<usize>) {
        let k = below[0].len();
        let mut message = vec![0.0; k];
        for &node in self.order.iter().rev() {
            let Some((up, w)) = self.parent[node] else { continue };
            let floor = below[node].iter().copied().fold(f64::INFINITY, f64::min) + w;
            for (m, &c) in message.iter_mut().zip(&below[node]) {
                *m = c.min(floor);
            }
            for (acc, m) in below[up].iter_mut().zip(&message) {
                *acc += m;
            }
        }

        let mut labels = vec![0; below.len()];
        let mut total = 0.0;
        for &node in &self.order {
            labels[node] = match self.parent[node] {
                None => {
                    let l = argmin(below[node].iter().copied());
                    total += below[node][l];
                    l
                }
                Some((up, w)) => {
                    let pl = labels[up];
                    argmin(below[node].iter().enumerate().map(|(j, &c)| if j == pl { c } else { c + w }))
                }
            };
        }
        (total, labels)
    }
}

/// Full clustering objective: assignment cost plus `λ` times the
/// off-diagonal ℓ1 norm of every cluster's precision.
pub fn total_objective(
    subs: &SubregionSet,
    models: &[ClusterModel],
    labels: &[usize],
    beta: f64,
    lambda: f64,
) -> Result<f64> {
    let costs = node_costs(subs, models)?;
    if labels.len() != costs.len() {
        return Err(SticcError::Dimension { expected: costs.len(), actual: labels.len() });
    }
    if labels.iter().any(|&l| l >= models.len()) {
        return Err(SticcError::Parameter("label out of range".into()));
    }
    let (lik, pen) = score(subs.nearest_subregion(), &costs, labels, beta);
    let sparsity: f64 = models.iter().map(|m| m.precision().off_diagonal_l1()).sum();
    Ok(lik + pen + lambda * sparsity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ToeplitzPrecision;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(nearest: &[usize], costs: &[Vec<f64>], beta: f64) -> f64 {
        let (n, k) = (costs.len(), costs[0].len());
        let mut best = f64::INFINITY;
        let mut labels = vec![0; n];
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let (a, b) = score(nearest, costs, &labels, beta);
            best = best.min(a + b);
        }
        best
    }

    fn random_costs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..k).map(|_| rng.random_range(0.0..4.0)).collect()).collect()
    }

    #[test]
    fn zero_beta_is_pointwise_argmin() {
        let costs = vec![vec![1.0, 0.5], vec![0.2, 0.9], vec![0.3, 0.3]];
        let a = assign_costs(&[1, 0, 1], &[], &costs, 0.0).unwrap();
        assert_eq!(a.labels, vec![1, 0, 0]);
        assert_eq!(a.objective_penalty, 0.0);
    }

    #[test]
    fn huge_beta_gives_single_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let costs = random_costs(&mut rng, 8, 3);
        // two separate mutual pairs plus hangers-on, joined only by the default links
        let nearest = [1, 0, 1, 4, 3, 4, 7, 6];
        let links = [(0, 3), (3, 6)];
        let a = assign_costs(&nearest, &links, &costs, 1e6).unwrap();
        assert!(a.labels.iter().all(|&l| l == a.labels[0]));
    }

    #[test]
    fn chain_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nearest: Vec<usize> = (0..6).map(|i| if i == 0 { 1 } else { i - 1 }).collect();
        for beta in [0.5, 1.0, 3.0] {
            for _ in 0..20 {
                let costs = random_costs(&mut rng, 6, 2);
                let a = assign_costs(&nearest, &[], &costs, beta).unwrap();
                assert!((a.objective() - brute_force(&nearest, &costs, beta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn long_cycle_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // 0 -> 1 -> 2 -> 3 -> 0 with a tail 4 -> 2 and 5 -> 4
        let nearest = [1, 2, 3, 0, 2, 4];
        for _ in 0..30 {
            let costs = random_costs(&mut rng, 6, 3);
            let a = assign_costs(&nearest, &[], &costs, 1.3).unwrap();
            assert!((a.objective() - brute_force(&nearest, &costs, 1.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cluster_and_errors() {
        let a = assign_costs(&[1, 0], &[], &[vec![3.0], vec![1.0]], 2.0).unwrap();
        assert_eq!(a.labels, vec![0, 0]);
        assert!(assign_costs(&[1, 0], &[], &[vec![], vec![]], 1.0).is_err());
        assert!(assign_costs(&[1, 0], &[], &[vec![1.0], vec![1.0]], -1.0).is_err());
    }

    #[test]
    fn keeps_previous_when_better() {
        let stacked = vec![vec![0.0], vec![0.1], vec![5.0]];
        let subs = SubregionSet::from_parts(1, 1, stacked, vec![vec![]; 3], vec![1, 0, 1]).unwrap();
        let model = |mu: f64| ClusterModel::new(DVector::from_vec(vec![mu]), ToeplitzPrecision::identity(1, 1), 1).unwrap();
        let models = vec![model(0.0), model(5.0)];
        let fresh = assign(&subs, &models, 0.0).unwrap();
        assert_eq!(fresh.labels, vec![0, 0, 1]);
        let kept = assign_from(&subs, &models, 0.0, &[1, 1, 1]).unwrap();
        assert_eq!(kept.labels, fresh.labels);
    }

    #[test]
    fn total_objective_term_by_term() {
        let stacked = vec![vec![0.0], vec![1.0], vec![3.0], vec![4.0]];
        let subs = SubregionSet::from_parts(1, 1, stacked.clone(), vec![vec![]; 4], vec![1, 0, 1, 2]).unwrap();
        let p0 = ToeplitzPrecision::new(vec![DMatrix::from_element(1, 1, 2.0)]).unwrap();
        let p1 = ToeplitzPrecision::new(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let models = vec![
            ClusterModel::new(DVector::from_vec(vec![0.5]), p0, 2).unwrap(),
            ClusterModel::new(DVector::from_vec(vec![3.5]), p1, 2).unwrap(),
        ];
        let labels = [0, 0, 1, 1];
        let nll = |x: f64, mu: f64, prec: f64| {
            0.5 * prec * (x - mu).powi(2) - 0.5 * prec.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let expected = nll(0.0, 0.5, 2.0) + nll(1.0, 0.5, 2.0) + nll(3.0, 3.5, 0.5) + nll(4.0, 3.5, 0.5)
            + 1.5 * 1.0; // point 2 points at point 1, which is in the other cluster
        let got = total_objective(&subs, &models, &labels, 1.5, 0.7).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let all_same = total_objective(&subs, &models, &[0, 0, 0, 0], 1.5, 0.0).unwrap();
        let plain: f64 = stacked.iter().map(|x| nll(x[0], 0.5, 2.0)).sum();
        assert!((all_same - plain).abs() < 1e-12);
    }
}
