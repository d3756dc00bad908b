//! Point data, exact k-nearest-neighbour search and subregion stacking.
//!
//! A subregion is a point's attribute vector followed by the attribute
//! vectors of its `R - 1` nearest neighbours, nearest first. Distances are
//! planar Euclidean on the raw coordinates; equal distances are broken by the
//! lower point id so that every query has a single well-defined answer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SticcError};

/// One geographic object: an id, a coordinate pair and `D` attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: usize,
    pub coord: [f64; 2],
    pub attrs: Vec<f64>,
}

/// `N` points sharing the same attribute dimension `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoDataset {
    points: Vec<PointRecord>,
    dim: usize,
    attr_names: Vec<String>,
}

impl GeoDataset {
    /// Validates and wraps a list of points. Ids must enumerate `0..N` in order.
    pub fn new(points: Vec<PointRecord>, attr_names: Vec<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(SticcError::EmptyInput);
        }
        let dim = attr_names.len();
        if dim == 0 {
            return Err(SticcError::Schema("at least one attribute column is required".into()));
        }
        for (row, p) in points.iter().enumerate() {
            if p.id != row {
                return Err(SticcError::Parse {
                    row,
                    message: format!("id {} does not match row position {}", p.id, row),
                });
            }
            if p.attrs.len() != dim {
                return Err(SticcError::Dimension { expected: dim, actual: p.attrs.len() });
            }
            if !p.coord.iter().all(|c| c.is_finite()) {
                return Err(SticcError::Parse { row, message: "non-finite coordinate".into() });
            }
            if let Some(j) = p.attrs.iter().position(|a| !a.is_finite()) {
                return Err(SticcError::Parse {
                    row,
                    message: format!("non-finite value in attribute '{}'", attr_names[j]),
                });
            }
        }
        Ok(Self { points, dim, attr_names })
    }

    /// Builds a dataset from parallel coordinate and attribute arrays, with
    /// generated attribute names `a0, a1, ...`.
    pub fn from_arrays(coords: &[[f64; 2]], attrs: &[Vec<f64>]) -> Result<Self> {
        if coords.len() != attrs.len() {
            return Err(SticcError::Dimension { expected: coords.len(), actual: attrs.len() });
        }
        let dim = attrs.first().map_or(0, Vec::len);
        let points = coords
            .iter()
            .zip(attrs)
            .enumerate()
            .map(|(id, (c, a))| PointRecord { id, coord: *c, attrs: a.clone() })
            .collect();
        Self::new(points, (0..dim).map(|i| format!("a{i}")).collect())
    }

    pub fn points(&self) -> &[PointRecord] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Attribute dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| p.coord).collect()
    }

    /// Copy of the dataset with every attribute column shifted to zero mean
    /// and scaled to unit population variance. Constant columns are only
    /// centred. Returns the per-column `(mean, scale)` pairs as well.
    pub fn standardized(&self) -> (GeoDataset, Vec<(f64, f64)>) {
        let n = self.len() as f64;
        let scaling: Vec<(f64, f64)> = (0..self.dim)
            .map(|j| {
                let mean = self.points.iter().map(|p| p.attrs[j]).sum::<f64>() / n;
                let var = self.points.iter().map(|p| (p.attrs[j] - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mean, if sd > 0.0 { sd } else { 1.0 })
            })
            .collect();
        let points = self
            .points
            .iter()
            .map(|p| PointRecord {
                id: p.id,
                coord: p.coord,
                attrs: p.attrs.iter().zip(&scaling).map(|(a, (m, s))| (a - m) / s).collect(),
            })
            .collect();
        let ds = GeoDataset { points, dim: self.dim, attr_names: self.attr_names.clone() };
        (ds, scaling)
    }
}

/// Column layout of an input CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    /// Id column. `None` numbers rows `0..N` in file order.
    pub id: Option<String>,
    pub x: String,
    pub y: String,
    /// Attribute columns. `None` takes every column other than id/x/y.
    pub attrs: Option<Vec<String>>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self { id: Some("id".into()), x: "x".into(), y: "y".into(), attrs: None }
    }
}

/// Reads a point CSV with header `id,x,y,<attrs...>`.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSpec) -> Result<GeoDataset> {
    let rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    read_points(rdr, schema)
}

/// Same as [`load_csv`] but from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &ColumnSpec) -> Result<GeoDataset> {
    let rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    read_points(rdr, schema)
}

fn read_points<R: std::io::Read>(mut rdr: csv::Reader<R>, schema: &ColumnSpec) -> Result<GeoDataset> {
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SticcError::Schema(format!("missing column '{name}'")))
    };
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let x_col = find(&schema.x)?;
    let y_col = find(&schema.y)?;
    let attr_names: Vec<String> = match &schema.attrs {
        Some(names) => names.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_col && *i != x_col && *i != y_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let attr_cols = attr_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    if attr_cols.is_empty() {
        return Err(SticcError::Schema("no attribute columns".into()));
    }

    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| SticcError::Parse {
                row,
                message: format!("column '{}': cannot parse '{}' as a number", header[col], raw),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(SticcError::Parse { row, message: format!("column '{}': non-finite value", header[col]) })
            }
        };
        let id = match id_col {
            Some(c) => {
                let raw = record.get(c).unwrap_or("");
                raw.parse::<usize>().map_err(|_| SticcError::Parse {
                    row,
                    message: format!("id '{raw}' is not a non-negative integer"),
                })?
            }
            None => row,
        };
        let coord = [cell(x_col)?, cell(y_col)?];
        let attrs = attr_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        points.push(PointRecord { id, coord, attrs });
    }
    GeoDataset::new(points, attr_names)
}

/// Writes `ds` as `id,x,y,<attrs...>`. Values use the shortest exact
/// decimal representation so that reading the file back is lossless.
pub fn save_csv(ds: &GeoDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}

pub fn write_csv<W: std::io::Write>(ds: &GeoDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "x".into(), "y".into()];
    header.extend(ds.attr_names.iter().cloned());
    wtr.write_record(&header)?;
    for p in &ds.points {
        let mut rec = vec![p.id.to_string(), p.coord[0].to_string(), p.coord[1].to_string()];
        rec.extend(p.attrs.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[inline]
pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Uniform bucket grid over the point cloud, sized for about two points per cell.
struct Grid {
    origin: [f64; 2],
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl Grid {
    fn new(coords: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in coords {
            for a in 0..2 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
        let area = (w * h).max(w.max(h).powi(2) / coords.len() as f64);
        let mut cell = (2.0 * area / coords.len() as f64).sqrt();
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let cols = ((w / cell).floor() as usize + 1).min(4096);
        let rows = ((h / cell).floor() as usize + 1).min(4096);
        let cell = cell.max(w / cols as f64).max(h / rows as f64);
        let mut grid = Self { origin: lo, cell, cols, rows, buckets: vec![Vec::new(); cols * rows] };
        for (i, c) in coords.iter().enumerate() {
            let (cx, cy) = grid.cell_of(*c);
            grid.buckets[cy * cols + cx].push(i);
        }
        grid
    }

    fn cell_of(&self, c: [f64; 2]) -> (usize, usize) {
        let cx = ((c[0] - self.origin[0]) / self.cell).floor().max(0.0) as usize;
        let cy = ((c[1] - self.origin[1]) / self.cell).floor().max(0.0) as usize;
        (cx.min(self.cols - 1), cy.min(self.rows - 1))
    }

    /// Exact `k` nearest neighbours of point `q`, excluding `q` itself.
    fn query(&self, coords: &[[f64; 2]], q: usize, k: usize) -> Vec<usize> {
        let (qx, qy) = self.cell_of(coords[q]);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let max_ring = self.cols.max(self.rows);
        for ring in 0..=max_ring {
            let (x0, x1) = (qx as isize - ring as isize, qx as isize + ring as isize);
            let (y0, y1) = (qy as isize - ring as isize, qy as isize + ring as isize);
            for cy in y0..=y1 {
                if cy < 0 || cy >= self.rows as isize {
                    continue;
                }
                let edge_row = cy == y0 || cy == y1;
                let mut cx = x0;
                while cx <= x1 {
                    if cx >= 0 && cx < self.cols as isize {
                        for &j in &self.buckets[cy as usize * self.cols + cx as usize] {
                            if j == q {
                                continue;
                            }
                            let cand = (dist2(coords[q], coords[j]), j);
                            if best.len() < k || cand < best[k - 1] {
                                let pos = best.partition_point(|b| *b < cand);
                                best.insert(pos, cand);
                                best.truncate(k);
                            }
                        }
                    }
                    // interior rows of the ring only contribute their two end cells
                    cx = if edge_row || cx == x1 { cx + 1 } else { x1 };
                }
            }
            // anything unseen lies at least `ring` whole cells away
            let reach = ring as f64 * self.cell;
            if best.len() == k && best[k - 1].0 < reach * reach {
                break;
            }
        }
        best.into_iter().map(|(_, j)| j).collect()
    }
}

/// For every point, the `k` nearest other points in ascending distance,
/// ties broken by lower id.
pub fn knn(ds: &GeoDataset, k: usize) -> Result<Vec<Vec<usize>>> {
    knn_coords(&ds.coords(), k)
}

pub(crate) fn knn_coords(coords: &[[f64; 2]], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = coords.len();
    if k == 0 || k >= n {
        return Err(SticcError::Parameter(format!("k must satisfy 1 <= k <= N-1 (k={k}, N={n})")));
    }
    let grid = Grid::new(coords);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok((0..n).into_par_iter().map(|q| grid.query(coords, q, k)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..n).map(|q| grid.query(coords, q, k)).collect())
    }
}

/// Stacked subregion vectors plus the nearest-subregion pointer of each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubregionSet {
    radius: usize,
    dim: usize,
    stacked: Vec<Vec<f64>>,
    neighbor_lists: Vec<Vec<usize>>,
    nearest_subregion: Vec<usize>,
    /// Extra point pairs that join the connected components of the
    /// nearest-subregion graph into one tree; used by the assignment step.
    links: Vec<(usize, usize)>,
}

impl SubregionSet {
    /// Assembles a subregion set from precomputed parts. Component links are
    /// derived by chaining components in order of their smallest member id.
    pub fn from_parts(
        radius: usize,
        dim: usize,
        stacked: Vec<Vec<f64>>,
        neighbor_lists: Vec<Vec<usize>>,
        nearest_subregion: Vec<usize>,
    ) -> Result<Self> {
        let n = stacked.len();
        if n == 0 {
            return Err(SticcError::EmptyInput);
        }
        if radius == 0 || dim == 0 {
            return Err(SticcError::Parameter("radius and dim must be positive".into()));
        }
        if nearest_subregion.len() != n || neighbor_lists.len() != n {
            return Err(SticcError::Dimension { expected: n, actual: nearest_subregion.len() });
        }
        for (i, v) in stacked.iter().enumerate() {
            if v.len() != dim * radius {
                return Err(SticcError::Dimension { expected: dim * radius, actual: v.len() });
            }
            let m = nearest_subregion[i];
            if m >= n || (m == i && n > 1) {
                return Err(SticcError::Parameter(format!("invalid nearest subregion {m} for point {i}")));
            }
        }
        let links = chain_components(&nearest_subregion);
        Ok(Self { radius, dim, stacked, neighbor_lists, nearest_subregion, links })
    }

    /// Replaces the component links.
    pub fn with_links(mut self, links: Vec<(usize, usize)>) -> Self {
        self.links = links;
        self
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length `D * R` of every stacked vector.
    pub fn width(&self) -> usize {
        self.dim * self.radius
    }

    pub fn len(&self) -> usize {
        self.stacked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stacked.is_empty()
    }

    pub fn stacked(&self) -> &[Vec<f64>] {
        &self.stacked
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbor_lists
    }

    pub fn nearest_subregion(&self) -> &[usize] {
        &self.nearest_subregion
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }
}

/// Builds the `D * R` subregion of every point.
pub fn build_subregions(ds: &GeoDataset, radius: usize) -> Result<SubregionSet> {
    let n = ds.len();
    if radius == 0 || radius > n {
        return Err(SticcError::Parameter(format!("radius must satisfy 1 <= R <= N (R={radius}, N={n})")));
    }
    if n < 2 {
        return Err(SticcError::Parameter("at least two points are needed to define nearest subregions".into()));
    }
    let coords = ds.coords();
    let k = (radius - 1).max(1);
    let mut lists = knn_coords(&coords, k)?;
    let nearest: Vec<usize> = lists.iter().map(|l| l[0]).collect();
    for l in &mut lists {
        l.truncate(radius - 1);
    }
    let stacked = lists
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut v = Vec::with_capacity(ds.dim() * radius);
            v.extend_from_slice(&ds.points()[i].attrs);
            for &j in nbrs {
                v.extend_from_slice(&ds.points()[j].attrs);
            }
            v
        })
        .collect();
    let links = spatial_links(&coords, &nearest)?;
    Ok(SubregionSet { radius, dim: ds.dim(), stacked, neighbor_lists: lists, nearest_subregion: nearest, links })
}

pub(crate) struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // keep the smaller id as representative
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

fn chain_components(nearest: &[usize]) -> Vec<(usize, usize)> {
    let mut ds = DisjointSet::new(nearest.len());
    for (i, &m) in nearest.iter().enumerate() {
        ds.union(i, m);
    }
    let mut reps: Vec<usize> = (0..nearest.len()).filter(|&i| ds.find(i) == i).collect();
    reps.sort_unstable();
    reps.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Shortest point pairs joining the components of the nearest-neighbour
/// graph, chosen Kruskal-style from a k-NN candidate pool and falling back
/// to an exhaustive scan for components the pool cannot reach.
fn spatial_links(coords: &[[f64; 2]], nearest: &[usize]) -> Result<Vec<(usize, usize)>> {
    let n = coords.len();
    let mut sets = DisjointSet::new(n);
    for (i, &m) in nearest.iter().enumerate() {
        sets.union(i, m);
    }
    let mut components = (0..n).filter(|&i| sets.find(i) == i).count();
    let mut links = Vec::new();
    if components <= 1 {
        return Ok(links);
    }

    let pool = knn_coords(coords, 16.min(n - 1))?;
    let mut edges: Vec<(f64, usize, usize)> = pool
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |&j| (i.min(j), i.max(j))))
        .map(|(a, b)| (dist2(coords[a], coords[b]), a, b))
        .collect();
    edges.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    edges.dedup();
    for (_, a, b) in edges {
        if sets.union(a, b) {
            links.push((a, b));
            components -= 1;
            if components == 1 {
                return Ok(links);
            }
        }
    }

    // far-apart clusters of points: grow from the component of point 0
    while components > 1 {
        let root = sets.find(0);
        let inside: Vec<bool> = (0..n).map(|i| sets.find(i) == root).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| inside[i]) {
            for j in (0..n).filter(|&j| !inside[j]) {
                let cand = (dist2(coords[i], coords[j]), i.min(j), i.max(j));
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        let (_, a, b) = best.expect("more than one component");
        sets.union(a, b);
        links.push((a, b));
        components -= 1;
    }
    Ok(links)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> GeoDataset {
        let coords: Vec<[f64; 2]> = xs.iter().map(|&x| [x, 0.0]).collect();
        let attrs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x * 10.0, -x]).collect();
        GeoDataset::from_arrays(&coords, &attrs).unwrap()
    }

    #[test]
    fn knn_on_collinear_points() {
        let ds = line(&[0.0, 1.0, 3.0]);
        assert_eq!(knn(&ds, 1).unwrap(), vec![vec![1], vec![0], vec![1]]);
        let two = knn(&ds, 2).unwrap();
        assert_eq!(two[0], vec![1, 2]);
        assert_eq!(two[2], vec![1, 0]);
    }

    #[test]
    fn knn_rejects_k_out_of_range() {
        let ds = line(&[0.0, 1.0, 3.0]);
        assert!(matches!(knn(&ds, 3), Err(SticcError::Parameter(_))));
        assert!(matches!(knn(&ds, 0), Err(SticcError::Parameter(_))));
    }

    #[test]
    fn knn_breaks_ties_by_lower_id() {
        // 1 and 2 are equidistant from 0, as are duplicates 3 and 4
        let coords = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 5.0], [5.0, 5.0]];
        let attrs = vec![vec![0.0]; 5];
        let ds = GeoDataset::from_arrays(&coords, &attrs).unwrap();
        let nn = knn(&ds, 1).unwrap();
        assert_eq!(nn[0], vec![1]);
        assert_eq!(nn[3], vec![4]);
        assert_eq!(nn[4], vec![3]);
    }

    #[test]
    fn radius_one_reproduces_attributes() {
        let ds = line(&[0.0, 1.0, 3.0, 7.0]);
        let subs = build_subregions(&ds, 1).unwrap();
        for (p, s) in ds.points().iter().zip(subs.stacked()) {
            assert_eq!(&p.attrs, s);
        }
        assert_eq!(subs.nearest_subregion(), &[1, 0, 1, 2]);
        assert!(subs.neighbor_lists().iter().all(Vec::is_empty));
    }

    #[test]
    fn stacking_is_center_first_then_by_distance() {
        let ds = line(&[0.0, 1.0, 3.0, 7.0]);
        let subs = build_subregions(&ds, 3).unwrap();
        assert_eq!(subs.width(), 6);
        // point 3 at x=7: neighbours x=3 then x=1
        assert_eq!(subs.stacked()[3], vec![70.0, -7.0, 30.0, -3.0, 10.0, -1.0]);
        assert!(matches!(build_subregions(&ds, 5), Err(SticcError::Parameter(_))));
    }

    #[test]
    fn nearest_subregion_can_be_asymmetric() {
        // A=0 at 0, B=1 at 2, C=2 at 3: A -> B, B -> C
        let ds = line(&[0.0, 2.0, 3.0]);
        let subs = build_subregions(&ds, 2).unwrap();
        assert_eq!(subs.nearest_subregion()[0], 1);
        assert_eq!(subs.nearest_subregion()[1], 2);
    }

    #[test]
    fn links_join_all_components() {
        let xs: Vec<f64> = vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0, 40.0, 41.5];
        let ds = line(&xs);
        let subs = build_subregions(&ds, 2).unwrap();
        let mut sets = DisjointSet::new(xs.len());
        for (i, &m) in subs.nearest_subregion().iter().enumerate() {
            sets.union(i, m);
        }
        for &(a, b) in subs.links() {
            assert!(sets.union(a, b), "link must join two components");
        }
        assert_eq!((0..xs.len()).filter(|&i| sets.find(i) == i).count(), 1);
        assert_eq!(subs.links(), &[(1, 2), (3, 4), (5, 6)]);
    }

    #[test]
    fn csv_errors() {
        let schema = ColumnSpec::default();
        let missing = "id,x,a\n0,1,2\n";
        assert!(matches!(read_csv(missing.as_bytes(), &schema), Err(SticcError::Schema(_))));
        let bad = "id,x,y,a\n0,0,0,1\n1,1,1,oops\n";
        assert!(matches!(read_csv(bad.as_bytes(), &schema), Err(SticcError::Parse { row: 1, .. })));
        let nan = "id,x,y,a\n0,0,0,NaN\n";
        assert!(matches!(read_csv(nan.as_bytes(), &schema), Err(SticcError::Parse { row: 0, .. })));
        let empty = "id,x,y,a\n";
        assert!(matches!(read_csv(empty.as_bytes(), &schema), Err(SticcError::EmptyInput)));
    }

    #[test]
    fn csv_parses_three_rows() {
        let text = "id,x,y,a,b\n0,0.5,1,2,3\n1,2,2,4,5\n2,3,1,6,7\n";
        let ds = read_csv(text.as_bytes(), &ColumnSpec::default()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.attr_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.points()[2].attrs, vec![6.0, 7.0]);
    }

    #[test]
    fn standardized_columns_have_unit_variance() {
        let ds = line(&[0.0, 1.0, 3.0, 7.0]);
        let (z, scaling) = ds.standardized();
        for j in 0..2 {
            let col: Vec<f64> = z.points().iter().map(|p| p.attrs[j]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        assert!((scaling[0].0 - 27.5).abs() < 1e-12);
    }
}
