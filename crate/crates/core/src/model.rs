//! Per-cluster Gaussian models with block-Toeplitz precision matrices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SticcError};

/// Block-Toeplitz precision matrix stored by its first block column
/// `A(0), A(1), ..., A(R-1)`, each `D x D`.
///
/// The assembled `DR x DR` matrix has block `(i, j) = A(i - j)` on and below
/// the block diagonal and `A(j - i)^T` above it.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzPrecision {
    blocks: Vec<DMatrix<f64>>,
    dim: usize,
}

impl ToeplitzPrecision {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| SticcError::Parameter("at least one block is required".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(SticcError::Parameter("blocks must be non-empty".into()));
        }
        for b in &blocks {
            if b.nrows() != dim || b.ncols() != dim {
                return Err(SticcError::Dimension { expected: dim, actual: b.nrows().max(b.ncols()) });
            }
        }
        let asym = max_asymmetry(first);
        let scale = first.amax().max(1.0);
        if asym > 1e-12 * scale {
            return Err(SticcError::NotSymmetric(asym));
        }
        Ok(Self { blocks, dim })
    }

    pub fn identity(dim: usize, radius: usize) -> Self {
        let mut blocks = vec![DMatrix::zeros(dim, dim); radius];
        blocks[0] = DMatrix::identity(dim, dim);
        Self { blocks, dim }
    }

    /// Reads the block structure off an assembled matrix, taking the first
    /// block column. No check is made that the input really is block-Toeplitz.
    pub fn from_first_block_column(m: &DMatrix<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || m.nrows() % dim != 0 || m.nrows() != m.ncols() {
            return Err(SticcError::Dimension { expected: dim, actual: m.nrows() });
        }
        let radius = m.nrows() / dim;
        let blocks = (0..radius).map(|r| m.view((r * dim, 0), (dim, dim)).into_owned()).collect();
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn radius(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense `DR x DR` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (d, r) = (self.dim, self.radius());
        let mut m = DMatrix::zeros(d * r, d * r);
        for bi in 0..r {
            for bj in 0..r {
                let mut view = m.view_mut((bi * d, bj * d), (d, d));
                if bi >= bj {
                    view.copy_from(&self.blocks[bi - bj]);
                } else {
                    view.copy_from(&self.blocks[bj - bi].transpose());
                }
            }
        }
        m
    }

    /// Sum of absolute off-diagonal entries of the assembled matrix.
    pub fn off_diagonal_l1(&self) -> f64 {
        let m = self.assemble();
        let n = m.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += m[(i, j)].abs();
                }
            }
        }
        total
    }

    /// Writes the assembled matrix as headerless CSV, one row per line.
    pub fn write_assembled_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let m = self.assemble();
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for i in 0..m.nrows() {
            wtr.write_record(m.row(i).iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[derive(Serialize, Deserialize)]
struct PrecisionRepr {
    blocks: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    radius: usize,
    #[serde(rename = "D")]
    dim: usize,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Serialize for ToeplitzPrecision {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PrecisionRepr {
            blocks: self.blocks.iter().map(matrix_rows).collect(),
            radius: self.radius(),
            dim: self.dim,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ToeplitzPrecision {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = PrecisionRepr::deserialize(deserializer)?;
        if repr.blocks.len() != repr.radius {
            return Err(D::Error::custom("block count does not match R"));
        }
        let blocks = repr
            .blocks
            .iter()
            .map(|rows| {
                if rows.len() != repr.dim || rows.iter().any(|r| r.len() != repr.dim) {
                    return Err(D::Error::custom("block shape does not match D"));
                }
                Ok(DMatrix::from_fn(repr.dim, repr.dim, |i, j| rows[i][j]))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ToeplitzPrecision::new(blocks).map_err(D::Error::custom)
    }
}

/// Gaussian model of one cluster: mean, precision and cached log-determinant.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    mean: DVector<f64>,
    precision: ToeplitzPrecision,
    assembled: DMatrix<f64>,
    log_det: f64,
    member_count: usize,
}

impl ClusterModel {
    /// Fails with [`SticcError::NotPositiveDefinite`] when the assembled
    /// precision has no Cholesky factor.
    pub fn new(mean: DVector<f64>, precision: ToeplitzPrecision, member_count: usize) -> Result<Self> {
        let assembled = precision.assemble();
        if mean.len() != assembled.nrows() {
            return Err(SticcError::Dimension { expected: assembled.nrows(), actual: mean.len() });
        }
        let log_det = log_det_pd(&assembled)?;
        Ok(Self { mean, precision, assembled, log_det, member_count })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &ToeplitzPrecision {
        &self.precision
    }

    pub fn assembled(&self) -> &DMatrix<f64> {
        &self.assembled
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn member_count(&self) -> usize {
        self.member_count
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Gaussian log density of the stacked vector `x`.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        let n = self.mean.len();
        if x.len() != n {
            return Err(SticcError::Dimension { expected: n, actual: x.len() });
        }
        let diff: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
        let mut quad = 0.0;
        for j in 0..n {
            let col = self.assembled.column(j);
            let mut acc = 0.0;
            for i in 0..n {
                acc += col[i] * diff[i];
            }
            quad += acc * diff[j];
        }
        Ok(-0.5 * quad + 0.5 * self.log_det - 0.5 * n as f64 * (2.0 * PI).ln())
    }
}

/// Log-determinant through the Cholesky factor; failure means not PD.
pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(SticcError::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    let ld = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    if ld.is_finite() {
        Ok(ld)
    } else {
        Err(SticcError::NotPositiveDefinite)
    }
}

/// Mean and population covariance of a cluster's member subregions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

/// Two-pass mean and `1/m`-normalised covariance.
pub fn empirical_stats<'a, I>(members: I) -> Result<EmpiricalStats>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let members: Vec<&[f64]> = members.into_iter().collect();
    let first = members.first().ok_or_else(|| SticcError::Degenerate("cluster has no members".into()))?;
    let n = first.len();
    let m = members.len() as f64;
    let mut mean = DVector::zeros(n);
    for x in &members {
        if x.len() != n {
            return Err(SticcError::Dimension { expected: n, actual: x.len() });
        }
        for (acc, v) in mean.iter_mut().zip(x.iter()) {
            *acc += v;
        }
    }
    mean /= m;
    let mut cov = DMatrix::zeros(n, n);
    let mut diff = vec![0.0; n];
    for x in &members {
        for ((d, v), mu) in diff.iter_mut().zip(x.iter()).zip(mean.iter()) {
            *d = v - mu;
        }
        for j in 0..n {
            for i in j..n {
                cov[(i, j)] += diff[i] * diff[j];
            }
        }
    }
    for j in 0..n {
        for i in j..n {
            let v = cov[(i, j)] / m;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(EmpiricalStats { mean, covariance: cov, count: members.len() })
}
