//! Finite-sample distances between sets, functions and piecewise
//! representations.
//!
//! Compact sets are stood in for by point clouds and sup-norms by maxima over
//! a sample, so every value here is a lower bound on its continuous
//! counterpart.

use std::path::Path;
use std::sync::Arc;

use crate::error::{PcnnError, Result};
use crate::ffnn::Mlp;
use crate::numerics::{euclidean, squared_euclidean, Matrix};

/// Something that maps an input row to an output row.
pub trait Evaluable: Send + Sync {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Evaluable for Mlp {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_row(x)
    }
}

/// Adapter turning a closure into an [`Evaluable`].
pub struct FnMap<F>(pub F);

impl<F> Evaluable for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}

/// Non-empty finite set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Matrix,
}

impl PointCloud {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(PcnnError::InvalidArgument("point cloud must be non-empty".into()));
        }
        if !points.is_finite() {
            return Err(PcnnError::NonFinite("point cloud entry".into()));
        }
        Ok(PointCloud { points })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        PointCloud::new(Matrix::from_rows(rows)?)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn contains_exact(&self, z: &[f64]) -> bool {
        self.points.iter_rows().any(|p| p == z)
    }

    /// One point per line, header `x0,x1,...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..self.dim()).map(|i| format!("x{i}")))?;
        for r in self.points.iter_rows() {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| PcnnError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| PcnnError::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate() {
                data.push(cell.trim().parse::<f64>().map_err(|_| PcnnError::BadCell {
                    row: i + 1,
                    column: headers.get(j).cloned().unwrap_or_default(),
                    value: cell.to_string(),
                })?);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(PcnnError::EmptyDataset);
        }
        PointCloud::new(Matrix::from_vec(rows, headers.len(), data)?)
    }
}

/// `max_a min_b ‖a - b‖`.
fn directed(a: &Matrix, b: &Matrix) -> f64 {
    a.iter_rows()
        .map(|p| {
            b.iter_rows()
                .map(|q| squared_euclidean(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Exact Hausdorff distance between two finite clouds.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(PcnnError::DimensionMismatch(format!(
            "clouds in R^{} and R^{}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(directed(&a.points, &b.points).max(directed(&b.points, &a.points)))
}

/// `max_x ‖f(x) - g(x)‖` over the sample points.
pub fn sup_norm_diff(f: &dyn Evaluable, g: &dyn Evaluable, sample: &PointCloud) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in sample.points.iter_rows() {
        let fx = f.eval(x)?;
        let gx = g.eval(x)?;
        if fx.len() != gx.len() {
            return Err(PcnnError::DimensionMismatch(format!(
                "outputs of length {} and {}",
                fx.len(),
                gx.len()
            )));
        }
        worst = worst.max(euclidean(&fx, &gx));
    }
    Ok(worst)
}

/// A part of a representation: a cloud, optionally thickened by a radius
/// (membership then means "within `radius` of some point").
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub cloud: PointCloud,
    pub radius: Option<f64>,
}

impl Part {
    pub fn exact(cloud: PointCloud) -> Self {
        Part { cloud, radius: None }
    }

    pub fn thickened(cloud: PointCloud, radius: f64) -> Self {
        Part {
            cloud,
            radius: Some(radius),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self.radius {
            Some(r) => self.cloud.points.iter_rows().any(|p| euclidean(p, x) <= r),
            None => self.cloud.contains_exact(x),
        }
    }
}

/// Ordered list of (function, part) pairs.
#[derive(Clone)]
pub struct PcRepresentation {
    pairs: Vec<(Arc<dyn Evaluable>, Part)>,
}

impl PcRepresentation {
    pub fn new(pairs: Vec<(Arc<dyn Evaluable>, Part)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(PcnnError::InvalidArgument("representation needs at least one part".into()));
        }
        Ok(PcRepresentation { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Arc<dyn Evaluable>, Part)] {
        &self.pairs
    }

    /// `Σ_n f_n(x)·1[x ∈ K_n]`, the zero vector when `x` is in no part.
    ///
    /// `out_dim` fixes the length of the zero vector.
    pub fn realize(&self, x: &[f64], out_dim: usize) -> Result<Vec<f64>> {
        realize(self, x, out_dim)
    }
}

pub fn realize(rep: &PcRepresentation, x: &[f64], out_dim: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; out_dim];
    for (f, part) in &rep.pairs {
        if part.contains(x) {
            let v = f.eval(x)?;
            if v.len() != out_dim {
                return Err(PcnnError::DimensionMismatch(format!(
                    "part function returned {} values, expected {out_dim}",
                    v.len()
                )));
            }
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
    }
    Ok(acc)
}

fn matched_terms(f: &PcRepresentation, g: &PcRepresentation, sample: &PointCloud) -> Result<Vec<(f64, f64)>> {
    f.pairs
        .iter()
        .zip(&g.pairs)
        .map(|((fa, ka), (fb, kb))| Ok((sup_norm_diff(fa.as_ref(), fb.as_ref(), sample)?, hausdorff(&ka.cloud, &kb.cloud)?)))
        .collect()
}

/// `max_n max(‖f_n - g_n‖∞, d_H(K_n, K'_n))` for equal lengths, `+∞`
/// otherwise.
pub fn d_step1(f: &PcRepresentation, g: &PcRepresentation, sample: &PointCloud) -> Result<f64> {
    if f.len() != g.len() {
        return Ok(f64::INFINITY);
    }
    Ok(matched_terms(f, g, sample)?
        .into_iter()
        .map(|(s, h)| s.max(h))
        .fold(0.0, f64::max))
}

/// `Σ_n ‖f_n - f̂_n‖∞ + Σ_n d_H(K_n, K̂_n)` for representations of equal length.
pub fn dpc_upper_bound(target: &PcRepresentation, candidate: &PcRepresentation, sample: &PointCloud) -> Result<f64> {
    if target.len() != candidate.len() {
        return Err(PcnnError::DimensionMismatch(format!(
            "target has {} parts, candidate {}",
            target.len(),
            candidate.len()
        )));
    }
    Ok(matched_terms(target, candidate, sample)?
        .into_iter()
        .map(|(s, h)| s + h)
        .sum())
}

/// Inefficiency penalty `|#F - N(f)| + |#G - N(f)|`, with `N(f)` supplied by
/// the caller.
pub fn inefficiency_penalty(len_f: usize, len_g: usize, n_f: usize) -> usize {
    len_f.abs_diff(n_f) + len_g.abs_diff(n_f)
}
