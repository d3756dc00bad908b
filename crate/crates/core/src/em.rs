//! EM driver: alternate the Toeplitz graphical lasso M-step with the
//! spatially penalised assignment E-step until the labels stop changing.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assigner::{assign_from, node_costs, score, Assignment};
use crate::baselines::kmeans_vectors;
use crate::dataset::{build_subregions, GeoDataset, SubregionSet};
use crate::error::{Result, SticcError};
use crate::model::{empirical_stats, ClusterModel};
use crate::tgl::{solve_from, AdmmConfig, AdmmState, TglProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Kmeans,
    Random,
}

/// What happens to a cluster that loses all of its members in an E-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyPolicy {
    /// Keep the cluster's last model; it can win points back later.
    Retain,
    /// Move worst-fit points into the empty cluster, but only when the
    /// objective does not go up as a result.
    Reseed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SticcConfig {
    pub k: usize,
    pub radius: usize,
    pub beta: f64,
    pub lam: f64,
    pub max_em_iter: usize,
    pub seed: u64,
    pub init: InitMode,
    /// Standardize attribute columns before fitting.
    pub standardize: bool,
    pub empty_policy: EmptyPolicy,
    pub admm: AdmmConfig,
}

impl SticcConfig {
    pub fn new(k: usize, radius: usize, beta: f64, lam: f64) -> Self {
        Self {
            k,
            radius,
            beta,
            lam,
            max_em_iter: 100,
            seed: 0,
            init: InitMode::Kmeans,
            standardize: true,
            empty_policy: EmptyPolicy::Retain,
            admm: AdmmConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(SticcError::Parameter("K must be at least 1".into()));
        }
        if self.radius == 0 {
            return Err(SticcError::Parameter("R must be at least 1".into()));
        }
        if self.k > n {
            return Err(SticcError::Parameter(format!("K = {} exceeds the number of points {n}", self.k)));
        }
        if self.radius > n {
            return Err(SticcError::Parameter(format!("R = {} exceeds the number of points {n}", self.radius)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SticcError::Parameter(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lam >= 0.0 && self.lam.is_finite()) {
            return Err(SticcError::Parameter(format!("lambda must be finite and >= 0, got {}", self.lam)));
        }
        if self.max_em_iter == 0 {
            return Err(SticcError::Parameter("max_em_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Objective bookkeeping for one EM iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub likelihood: f64,
    pub penalty: f64,
    /// Sum over clusters of the off-diagonal ℓ1 norm of the assembled precision.
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub assignment: Assignment,
    pub models: Vec<ClusterModel>,
    pub objective_trace: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-attribute `(mean, scale)` used to standardize, when enabled.
    pub scaling: Option<Vec<(f64, f64)>>,
}

impl FitResult {
    pub fn labels(&self) -> &[usize] {
        &self.assignment.labels
    }
}

/// Runs STICC on `ds`.
pub fn fit(ds: &GeoDataset, cfg: &SticcConfig) -> Result<FitResult> {
    if ds.is_empty() {
        return Err(SticcError::EmptyInput);
    }
    cfg.validate(ds.len())?;
    if cfg.k > 1 {
        let first = &ds.points()[0].attrs;
        if ds.points().iter().all(|p| &p.attrs == first) {
            return Err(SticcError::Degenerate("all points have identical attributes".into()));
        }
    }
    let (work, scaling) = if cfg.standardize {
        let (s, sc) = ds.standardized();
        (s, Some(sc))
    } else {
        (ds.clone(), None)
    };
    let subs = build_subregions(&work, cfg.radius)?;
    let labels = initialize(&subs, cfg)?;
    let mut result = fit_subregions(&subs, cfg, labels)?;
    result.scaling = scaling;
    Ok(result)
}

/// EM loop on prepared subregions from given initial labels.
pub fn fit_subregions(subs: &SubregionSet, cfg: &SticcConfig, mut labels: Vec<usize>) -> Result<FitResult> {
    cfg.validate(subs.len())?;
    if labels.len() != subs.len() {
        return Err(SticcError::Dimension { expected: subs.len(), actual: labels.len() });
    }
    if labels.iter().any(|&l| l >= cfg.k) {
        return Err(SticcError::Parameter("initial label out of range".into()));
    }
    let width = subs.width();
    let mut states: Vec<AdmmState> = (0..cfg.k).map(|_| AdmmState::identity(width)).collect();
    let mut models: Vec<Option<ClusterModel>> = vec![None; cfg.k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assignment = None;

    for it in 1..=cfg.max_em_iter {
        iterations = it;
        m_step(subs, cfg, &labels, &mut models, &mut states)?;
        let fitted: Vec<ClusterModel> = models
            .iter()
            .map(|m| m.clone().ok_or_else(|| SticcError::Degenerate("cluster never received members".into())))
            .collect::<Result<_>>()?;

        let mut next = assign_from(subs, &fitted, cfg.beta, &labels)?;
        if cfg.empty_policy == EmptyPolicy::Reseed && count_members(&next.labels, cfg.k).contains(&0) {
            let costs = node_costs(subs, &fitted)?;
            let repaired = repair_empty(&next.labels, &costs, cfg.k)?;
            let (lik, pen) = score(subs.nearest_subregion(), &costs, &repaired, cfg.beta);
            let (prev_lik, prev_pen) = score(subs.nearest_subregion(), &costs, &labels, cfg.beta);
            if lik + pen <= prev_lik + prev_pen {
                next = Assignment { labels: repaired, objective_likelihood: lik, objective_penalty: pen };
            }
        }

        let sparsity: f64 = fitted.iter().map(|m| m.precision().off_diagonal_l1()).sum();
        trace.push(TraceEntry {
            iter: it,
            objective: next.objective() + cfg.lam * sparsity,
            likelihood: next.objective_likelihood,
            penalty: next.objective_penalty,
            sparsity,
        });
        let stable = next.labels == labels;
        labels = next.labels.clone();
        assignment = Some((next, fitted));
        if stable {
            converged = true;
            break;
        }
    }

    let (assignment, models) = assignment.expect("at least one iteration runs");
    Ok(FitResult {
        assignment,
        models,
        objective_trace: trace.iter().map(|t| t.objective).collect(),
        trace,
        iterations,
        converged,
        scaling: None,
    })
}

fn count_members(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    counts
}

/// Negative log likelihood of the members plus the weighted ℓ1 term.
fn cluster_cost(model: &ClusterModel, members: &[&[f64]], lam: f64) -> f64 {
    let nll: f64 = members.iter().map(|x| -model.log_likelihood(x).expect("width matches")).sum();
    nll + lam * model.precision().off_diagonal_l1()
}

/// Refits every non-empty cluster. A fresh model replaces the previous one
/// only when it scores at least as well on the current members.
fn m_step(
    subs: &SubregionSet,
    cfg: &SticcConfig,
    labels: &[usize],
    models: &mut [Option<ClusterModel>],
    states: &mut [AdmmState],
) -> Result<()> {
    let fit_one = |k: usize, previous: &Option<ClusterModel>, state: &AdmmState| -> Result<Option<(ClusterModel, AdmmState)>> {
        let members: Vec<&[f64]> = labels
            .iter()
            .zip(subs.stacked())
            .filter(|(&l, _)| l == k)
            .map(|(_, x)| x.as_slice())
            .collect();
        if members.is_empty() {
            return Ok(None);
        }
        let stats = empirical_stats(members.iter().copied())?;
        // The per-cluster problem is scaled by 2/m relative to the total objective.
        let problem = TglProblem::new(stats.covariance, 2.0 * cfg.lam, stats.count, subs.radius(), subs.dim())?;
        let sol = solve_from(&problem, &cfg.admm, state.clone())?;
        let fresh = ClusterModel::new(stats.mean, sol.precision, stats.count)?;
        let keep_fresh = match previous {
            Some(old) => cluster_cost(&fresh, &members, cfg.lam) <= cluster_cost(old, &members, cfg.lam),
            None => true,
        };
        let model = if keep_fresh { fresh } else { previous.clone().expect("checked above") };
        Ok(Some((model, sol.state)))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<Option<(ClusterModel, AdmmState)>>> = {
        use rayon::prelude::*;
        (0..cfg.k).into_par_iter().map(|k| fit_one(k, &models[k], &states[k])).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Option<(ClusterModel, AdmmState)>>> =
        (0..cfg.k).map(|k| fit_one(k, &models[k], &states[k])).collect();

    for (k, r) in results.into_iter().enumerate() {
        if let Some((model, state)) = r? {
            models[k] = Some(model);
            states[k] = state;
        }
    }
    Ok(())
}

/// Initial labels with every cluster non-empty.
pub fn initialize(subs: &SubregionSet, cfg: &SticcConfig) -> Result<Vec<usize>> {
    let n = subs.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(SticcError::Parameter(format!("cannot form {} non-empty clusters from {n} points", cfg.k)));
    }
    if cfg.k == n {
        return Ok((0..n).collect());
    }
    match cfg.init {
        InitMode::Kmeans => Ok(kmeans_vectors(subs.stacked(), cfg.k, 300, cfg.seed)?.labels),
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for _ in 0..100 {
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.k)).collect();
                if !count_members(&labels, cfg.k).contains(&0) {
                    return Ok(labels);
                }
            }
            Err(SticcError::Degenerate(format!("random initialisation left a cluster empty after 100 draws (N = {n}, K = {})", cfg.k)))
        }
    }
}

/// Fills each empty cluster with the point that fits its current cluster
/// worst, never emptying another cluster in the process.
pub fn repair_empty(labels: &[usize], node_costs: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = labels.len();
    if n < k {
        return Err(SticcError::Parameter(format!("cannot fill {k} clusters with {n} points")));
    }
    if node_costs.len() != n {
        return Err(SticcError::Dimension { expected: n, actual: node_costs.len() });
    }
    if labels.iter().any(|&l| l >= k) {
        return Err(SticcError::Parameter("label out of range".into()));
    }
    let mut labels = labels.to_vec();
    let mut counts = count_members(&labels, k);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let worst = (0..n)
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| node_costs[a][labels[a]].total_cmp(&node_costs[b][labels[b]]).then(b.cmp(&a)))
            .expect("n >= k leaves a cluster with two members");
        counts[labels[worst]] -= 1;
        counts[empty] += 1;
        labels[worst] = empty;
    }
    Ok(labels)
}

/// Mean vector of a fitted model in the original attribute units.
pub fn unscale_mean(mean: &DVector<f64>, scaling: &[(f64, f64)]) -> Vec<f64> {
    let d = scaling.len();
    mean.iter().enumerate().map(|(i, v)| v * scaling[i % d].1 + scaling[i % d].0).collect()
}
