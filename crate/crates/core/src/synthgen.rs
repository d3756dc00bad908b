//! Synthetic benchmark: rectangular regions, each drawn from one of seven
//! clusters with Gaussian attributes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{GeoDataset, PointRecord};
use crate::error::{Result, SticcError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMode {
    Uniform,
    /// Density grows linearly from zero at `x0` to its peak at `x1`.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: usize,
    pub cluster: usize,
    /// `[x0, y0, x1, y1]`.
    pub rect: [f64; 4],
    #[serde(rename = "n")]
    pub point_count: usize,
    #[serde(rename = "density")]
    pub density_mode: DensityMode,
}

impl RegionSpec {
    fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.rect;
        if !(x0 < x1 && y0 < y1) || self.rect.iter().any(|v| !v.is_finite()) {
            return Err(SticcError::Parameter(format!("region {} has an invalid rectangle {:?}", self.id, self.rect)));
        }
        if self.point_count == 0 {
            return Err(SticcError::Parameter(format!("region {} has no points", self.id)));
        }
        Ok(())
    }
}

/// Per-attribute `(mean, standard deviation)` for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAttrSpec {
    pub params: Vec<(f64, f64)>,
}

pub const ATTR_NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Attribute distributions of the seven benchmark clusters.
pub fn table_attrs() -> Vec<ClusterAttrSpec> {
    const SD: [f64; 5] = [1.0, 3.0, 20.0, 350.0, 3.0];
    const MEANS: [[f64; 5]; 7] = [
        [4.0, 1.0, 80.0, 1000.0, 999.0],
        [5.0, 7.0, 30.0, 900.0, 992.0],
        [6.0, 2.0, 20.0, 600.0, 1005.0],
        [1.0, 3.0, 100.0, 700.0, 1003.0],
        [3.0, 6.0, 60.0, 800.0, 999.0],
        [7.0, 4.0, 70.0, 400.0, 998.0],
        [2.0, 5.0, 40.0, 500.0, 1008.0],
    ];
    MEANS
        .iter()
        .map(|row| ClusterAttrSpec { params: row.iter().zip(SD).map(|(&m, s)| (m, s)).collect() })
        .collect()
}

/// Ten regions over seven clusters. R1/R4, R2/R10 and R3/R9 repeat a
/// cluster; R5 and R6 share an edge and both have a density gradient; R7 is
/// small and dense next to the larger, sparse R8.
pub fn default_layout() -> Vec<RegionSpec> {
    use DensityMode::*;
    let r = |id, cluster, rect, n, density_mode| RegionSpec { id, cluster, rect, point_count: n, density_mode };
    vec![
        r(1, 0, [0.0, 30.0, 20.0, 60.0], 120, Uniform),
        r(2, 1, [20.0, 30.0, 40.0, 60.0], 130, Uniform),
        r(3, 2, [40.0, 30.0, 60.0, 60.0], 110, Uniform),
        r(4, 0, [60.0, 30.0, 80.0, 60.0], 120, Uniform),
        r(5, 3, [0.0, 0.0, 20.0, 30.0], 125, Gradient),
        r(6, 4, [20.0, 0.0, 40.0, 30.0], 125, Gradient),
        r(7, 5, [40.0, 0.0, 55.0, 15.0], 140, Uniform),
        r(8, 6, [55.0, 0.0, 80.0, 30.0], 100, Uniform),
        r(9, 2, [80.0, 0.0, 100.0, 30.0], 115, Uniform),
        r(10, 1, [80.0, 30.0, 100.0, 60.0], 125, Uniform),
    ]
}

pub fn read_layout<R: std::io::Read>(reader: R) -> Result<Vec<RegionSpec>> {
    let regions: Vec<RegionSpec> = serde_json::from_reader(reader)?;
    Ok(regions)
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<Vec<RegionSpec>> {
    read_layout(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Samples the dataset region by region; point ids run in region order.
/// Returns the dataset and the cluster id of every point.
pub fn generate(regions: &[RegionSpec], attrs: &[ClusterAttrSpec], seed: u64) -> Result<(GeoDataset, Vec<usize>)> {
    if regions.is_empty() {
        return Err(SticcError::Parameter("layout has no regions".into()));
    }
    let dim = attrs.first().map_or(0, |a| a.params.len());
    if dim == 0 || attrs.iter().any(|a| a.params.len() != dim) {
        return Err(SticcError::Parameter("attribute specs must share a non-zero dimension".into()));
    }
    let mut normals = Vec::with_capacity(attrs.len());
    for spec in attrs {
        let row = spec
            .params
            .iter()
            .map(|&(m, s)| {
                if !(s > 0.0) {
                    return Err(SticcError::Parameter(format!("standard deviation must be positive, got {s}")));
                }
                Normal::new(m, s).map_err(|e| SticcError::Parameter(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        normals.push(row);
    }
    for region in regions {
        region.validate()?;
        if region.cluster >= attrs.len() {
            return Err(SticcError::Parameter(format!(
                "region {} refers to cluster {} but only {} are defined",
                region.id,
                region.cluster,
                attrs.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for region in regions {
        let [x0, y0, x1, y1] = region.rect;
        for _ in 0..region.point_count {
            let u: f64 = rng.random();
            let fx = match region.density_mode {
                DensityMode::Uniform => u,
                DensityMode::Gradient => u.sqrt(),
            };
            let coord = [x0 + fx * (x1 - x0), y0 + rng.random::<f64>() * (y1 - y0)];
            let attrs = normals[region.cluster].iter().map(|n| n.sample(&mut rng)).collect();
            points.push(PointRecord { id: points.len(), coord, attrs });
            truth.push(region.cluster);
        }
    }
    let names = if dim == ATTR_NAMES.len() {
        ATTR_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dim).map(|i| format!("a{i}")).collect()
    };
    Ok((GeoDataset::new(points, names)?, truth))
}
