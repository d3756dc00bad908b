//! Clustering quality: adjusted Rand index, permutation-matched macro-F1 and
//! the join count ratio over a point adjacency graph.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{knn_coords, GeoDataset};
use crate::error::{Result, SticcError};

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(SticcError::Dimension { expected: truth.len(), actual: pred.len() });
    }
    Ok(())
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the contingency table.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let n = truth.len();
    if n < 2 {
        return Err(SticcError::Undefined("ARI needs at least two points".into()));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *cells.entry((t, p)).or_default() += 1;
        *rows.entry(t).or_default() += 1;
        *cols.entry(p).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| pairs(c)).sum();
    let a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(n as u64);
    let max = 0.5 * (a + b);
    if max == expected {
        // Both partitions are trivial (one block or all singletons).
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Largest macro-F1 over all relabelings of `pred`, and the relabeling:
/// predicted label `p` is read as class `permutation[p]`.
pub fn macro_f1(truth: &[usize], pred: &[usize], k: usize) -> Result<(f64, Vec<usize>)> {
    check_lengths(truth, pred)?;
    if k == 0 || k > 10 {
        return Err(SticcError::Parameter(format!("macro-F1 enumerates K! permutations; K must be in 1..=10, got {k}")));
    }
    if truth.iter().chain(pred).any(|&l| l >= k) {
        return Err(SticcError::Parameter(format!("labels must be below K = {k}")));
    }
    let mut confusion = vec![vec![0u64; k]; k];
    let mut pred_sizes = vec![0u64; k];
    let mut true_sizes = vec![0u64; k];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[p][t] += 1;
        pred_sizes[p] += 1;
        true_sizes[t] += 1;
    }
    // F1 of predicted label p taken as class c; 0 when both counts vanish.
    let f1 = |p: usize, c: usize| -> f64 {
        let denom = pred_sizes[p] + true_sizes[c];
        if denom == 0 {
            0.0
        } else {
            2.0 * confusion[p][c] as f64 / denom as f64
        }
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (f64::NEG_INFINITY, perm.clone());
    loop {
        let score = (0..k).map(|p| f1(p, perm[p])).sum::<f64>() / k as f64;
        if score > best.0 {
            best = (score, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencySource {
    Delaunay,
    KnnSymmetrized,
}

/// Undirected point adjacency; each edge `(u, v)` stored once with `u < v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    edges: Vec<(usize, usize)>,
    source: AdjacencySource,
    /// Set when Delaunay fell back to a path because all points were collinear.
    collinear_fallback: bool,
}

impl AdjacencyGraph {
    /// Normalises orientation, drops self-loops and duplicates.
    pub fn new(edges: impl IntoIterator<Item = (usize, usize)>, source: AdjacencySource) -> Self {
        let set: BTreeSet<(usize, usize)> =
            edges.into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u.min(v), u.max(v))).collect();
        Self { edges: set.into_iter().collect(), source, collinear_fallback: false }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn source(&self) -> AdjacencySource {
        self.source
    }

    pub fn collinear_fallback(&self) -> bool {
        self.collinear_fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinCount {
    pub same: usize,
    pub diff: usize,
    pub total: usize,
    pub ratio: f64,
}

/// Fraction of adjacency edges whose endpoints share a label.
pub fn join_count_ratio(labels: &[usize], adj: &AdjacencyGraph) -> Result<JoinCount> {
    if adj.edges.is_empty() {
        return Err(SticcError::Undefined("join count ratio of an empty edge set".into()));
    }
    let mut same = 0;
    let mut diff = 0;
    for &(u, v) in &adj.edges {
        if u >= labels.len() || v >= labels.len() {
            return Err(SticcError::Parameter(format!("edge ({u}, {v}) outside {} labels", labels.len())));
        }
        if labels[u] == labels[v] {
            same += 1;
        } else {
            diff += 1;
        }
    }
    let total = adj.edges.len();
    Ok(JoinCount { same, diff, total, ratio: same as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ari: f64,
    pub macro_f1: f64,
    pub permutation: Vec<usize>,
    pub join_count: JoinCount,
}

/// All three metrics. `k` bounds the label values of both partitions.
pub fn evaluate(truth: &[usize], pred: &[usize], k: usize, adj: &AdjacencyGraph) -> Result<MetricReport> {
    let (macro_f1, permutation) = macro_f1(truth, pred, k)?;
    Ok(MetricReport { ari: ari(truth, pred)?, macro_f1, permutation, join_count: join_count_ratio(pred, adj)? })
}

/// Union of directed k-nearest-neighbour edges.
pub fn knn_symmetrized(ds: &GeoDataset, k: usize) -> Result<AdjacencyGraph> {
    let lists = knn_coords(&ds.coords(), k)?;
    let edges = lists.iter().enumerate().flat_map(|(u, l)| l.iter().map(move |&v| (u, v)));
    Ok(AdjacencyGraph::new(edges, AdjacencySource::KnnSymmetrized))
}

pub fn delaunay(ds: &GeoDataset) -> Result<AdjacencyGraph> {
    delaunay_coords(&ds.coords())
}

/// Positive when `a, b, c` turn counter-clockwise.
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `a, b, c`.
pub fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Delaunay edges by Bowyer–Watson insertion. Repeated coordinates are
/// nudged apart by about `1e-9` of the extent first. When every point is
/// collinear the result is the path along the line, flagged as a fallback.
pub fn delaunay_coords(coords: &[[f64; 2]]) -> Result<AdjacencyGraph> {
    let n = coords.len();
    if n < 3 {
        return Err(SticcError::Parameter(format!("Delaunay triangulation needs at least 3 points, got {n}")));
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SticcError::Parameter("coordinates must be finite".into()));
    }
    let (lo, hi) = bounds(coords);
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let pts = jitter_duplicates(coords, span);

    if let Some(path) = collinear_path(&pts, span) {
        let mut g = AdjacencyGraph::new(path, AdjacencySource::Delaunay);
        g.collinear_fallback = true;
        return Ok(g);
    }

    let centre = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let m = 1e4 * span;
    let mut all = pts.clone();
    all.push([centre[0] - 2.0 * m, centre[1] - m]);
    all.push([centre[0] + 2.0 * m, centre[1] - m]);
    all.push([centre[0], centre[1] + 2.0 * m]);
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];

    for p in 0..n {
        let mut bad = Vec::new();
        tris.retain(|t| {
            let inside = in_circle(all[t[0]], all[t[1]], all[t[2]], all[p]) > 0.0;
            if inside {
                bad.push(*t);
            }
            !inside
        });
        let mut boundary: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &bad {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *boundary.entry((e.0.min(e.1), e.0.max(e.1))).or_default() += 1;
            }
        }
        for t in &bad {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if boundary[&(a.min(b), a.max(b))] == 1 {
                    tris.push([a, b, p]);
                }
            }
        }
    }

    let edges = tris
        .iter()
        .filter(|t| t.iter().all(|&v| v < n))
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]);
    Ok(AdjacencyGraph::new(edges, AdjacencySource::Delaunay))
}

fn bounds(coords: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    (lo, hi)
}

fn jitter_duplicates(coords: &[[f64; 2]], span: f64) -> Vec<[f64; 2]> {
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    coords
        .iter()
        .map(|c| {
            let key = (c[0].to_bits(), c[1].to_bits());
            let count = seen.entry(key).or_default();
            let j = *count as f64;
            *count += 1;
            if j == 0.0 {
                *c
            } else {
                let angle = 2.399963 * j;
                let r = 1e-9 * span * j.sqrt();
                [c[0] + r * angle.cos(), c[1] + r * angle.sin()]
            }
        })
        .collect()
}

/// Path through the points in order along the line, if they are collinear.
fn collinear_path(pts: &[[f64; 2]], span: f64) -> Option<Vec<(usize, usize)>> {
    let a = pts[0];
    let far = (1..pts.len()).max_by(|&i, &j| {
        let di = (pts[i][0] - a[0]).hypot(pts[i][1] - a[1]);
        let dj = (pts[j][0] - a[0]).hypot(pts[j][1] - a[1]);
        di.total_cmp(&dj)
    })?;
    let b = pts[far];
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let tol = 1e-12 * span * span.max(len);
    if pts.iter().any(|&p| orient(a, b, p).abs() > tol) {
        return None;
    }
    let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let mut order: Vec<usize> = (0..pts.len()).collect();
    let t = |i: usize| (pts[i][0] - a[0]) * dir[0] + (pts[i][1] - a[1]) * dir[1];
    order.sort_by(|&i, &j| t(i).total_cmp(&t(j)).then(i.cmp(&j)));
    Some(order.windows(2).map(|w| (w[0], w[1])).collect())
}
