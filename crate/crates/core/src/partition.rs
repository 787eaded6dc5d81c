//! Randomized ball-growing partition of training inputs.
//!
//! A radius `α·Δ̄` is drawn with `α ~ U[1/4, 1/2)`, the points are visited in a
//! seeded random order, and each pass claims every remaining point strictly
//! within that radius of the first remaining point. Once the unclaimed share
//! of the data drops to `q` or below, the leftovers form one final part.
//! Each data part is extended to a geometric part: the union of closed balls
//! of radius `Δ` (half the smallest distinct-pair distance) around its points.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{PcnnError, Result};
use crate::numerics::{euclidean, sample_uniform, streams, Matrix, Rng};

pub const ALPHA_LO: f64 = 0.25;
pub const ALPHA_HI: f64 = 0.5;

/// Index-level output of one partition run.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPartition {
    /// Row indices of each part, in creation order.
    pub parts: Vec<Vec<usize>>,
    /// Visiting order (the shuffle bijection).
    pub order: Vec<usize>,
    pub alpha: f64,
    pub delta_min: f64,
    pub delta_bar: f64,
    pub q: f64,
    /// Ball-growing passes executed before the loop stopped.
    pub iterations: usize,
}

impl DataPartition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Part id of every row.
    pub fn assignments(&self, n_rows: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_rows];
        for (p, idx) in self.parts.iter().enumerate() {
            for &i in idx {
                out[i] = p;
            }
        }
        out
    }

    /// Single-part partition of `n` rows.
    pub fn whole(n: usize) -> DataPartition {
        DataPartition {
            parts: vec![(0..n).collect()],
            order: (0..n).collect(),
            alpha: f64::NAN,
            delta_min: f64::NAN,
            delta_bar: f64::NAN,
            q: 1.0,
            iterations: 0,
        }
    }

    /// Partition given by per-row labels in `0..k` (empty labels are dropped).
    pub fn from_labels(labels: &[usize]) -> DataPartition {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut parts = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            parts[l].push(i);
        }
        parts.retain(|p| !p.is_empty());
        DataPartition {
            parts,
            order: (0..labels.len()).collect(),
            alpha: f64::NAN,
            delta_min: f64::NAN,
            delta_bar: f64::NAN,
            q: f64::NAN,
            iterations: 0,
        }
    }
}

/// A union of closed balls of common radius around anchor points.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricPart {
    pub anchors: Matrix,
    pub radius: f64,
}

impl GeometricPart {
    /// True iff some anchor lies within `radius` of `z`.
    pub fn contains(&self, z: &[f64]) -> bool {
        part_membership(self, z)
    }
}

pub fn part_membership(part: &GeometricPart, z: &[f64]) -> bool {
    part.anchors.iter_rows().any(|a| euclidean(a, z) <= part.radius)
}

/// Half the minimum distance and the mean distance over distinct pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairStats {
    pub delta_min: f64,
    pub delta_bar: f64,
}

/// One pass over all unordered pairs; zero-distance (duplicate) pairs are
/// skipped.
pub fn pair_stats(points: &Matrix) -> Result<PairStats> {
    let n = points.rows();
    let (min, sum, count) = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = points.row(i);
            let mut min = f64::INFINITY;
            let mut sum = 0.0;
            let mut count = 0u64;
            for j in i + 1..n {
                let d = euclidean(a, points.row(j));
                if d > 0.0 {
                    min = min.min(d);
                    sum += d;
                    count += 1;
                }
            }
            (min, sum, count)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, 0.0, 0u64), |acc, x| (acc.0.min(x.0), acc.1 + x.1, acc.2 + x.2));
    if count == 0 {
        return Err(PcnnError::DegenerateData(
            "need at least two distinct points".into(),
        ));
    }
    Ok(PairStats {
        delta_min: 0.5 * min,
        delta_bar: sum / count as f64,
    })
}

/// Half the smallest distance between two distinct rows.
pub fn delta_min(points: &Matrix) -> Result<f64> {
    pair_stats(points).map(|s| s.delta_min)
}

/// Mean distance over ordered pairs of distinct rows.
pub fn delta_bar(points: &Matrix) -> Result<f64> {
    pair_stats(points).map(|s| s.delta_bar)
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(PcnnError::InvalidArgument(format!("q must lie in (0, 1], got {q}")));
    }
    Ok(())
}

/// Randomized partition of the rows of `inputs`.
pub fn get_partition(inputs: &Matrix, q: f64, rng: &mut Rng) -> Result<(DataPartition, Vec<GeometricPart>)> {
    check_q(q)?;
    let stats = pair_stats(inputs)?;
    get_partition_with_stats(inputs, q, &stats, rng)
}

/// As [`get_partition`] with precomputed pair statistics.
pub fn get_partition_with_stats(
    inputs: &Matrix,
    q: f64,
    stats: &PairStats,
    rng: &mut Rng,
) -> Result<(DataPartition, Vec<GeometricPart>)> {
    check_q(q)?;
    let alpha = sample_uniform(rng, ALPHA_LO, ALPHA_HI)?;
    let order = rng.permutation(inputs.rows());
    partition_from(inputs, q, alpha, order, stats)
}

/// Deterministic core with the random choices supplied by the caller.
pub fn partition_with(
    inputs: &Matrix,
    q: f64,
    alpha: f64,
    order: Vec<usize>,
) -> Result<(DataPartition, Vec<GeometricPart>)> {
    check_q(q)?;
    let stats = pair_stats(inputs)?;
    partition_from(inputs, q, alpha, order, &stats)
}

fn partition_from(
    inputs: &Matrix,
    q: f64,
    alpha: f64,
    order: Vec<usize>,
    stats: &PairStats,
) -> Result<(DataPartition, Vec<GeometricPart>)> {
    let n = inputs.rows();
    {
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(PcnnError::InvalidArgument("order must be a permutation of the rows".into()));
        }
    }
    if !(alpha > 0.0) {
        return Err(PcnnError::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
    }
    let radius = alpha * stats.delta_bar;
    let mut remaining = order.clone();
    let mut parts = Vec::new();
    let mut iterations = 0;
    while !remaining.is_empty() {
        iterations += 1;
        let center = inputs.row(remaining[0]).to_vec();
        let (inside, outside): (Vec<usize>, Vec<usize>) = remaining
            .iter()
            .partition(|&&i| euclidean(inputs.row(i), &center) < radius);
        parts.push(inside);
        remaining = outside;
        if (remaining.len() as f64) / (n as f64) <= q {
            if !remaining.is_empty() {
                parts.push(std::mem::take(&mut remaining));
            }
            break;
        }
    }
    parts.retain(|p| !p.is_empty());
    let geometry = parts
        .iter()
        .map(|idx| GeometricPart {
            anchors: inputs.select_rows(idx),
            radius: stats.delta_min,
        })
        .collect();
    Ok((
        DataPartition {
            parts,
            order,
            alpha,
            delta_min: stats.delta_min,
            delta_bar: stats.delta_bar,
            q,
            iterations,
        },
        geometry,
    ))
}

/// Monte-Carlo frequency with which rows `i1` and `i2` share a part over
/// `trials` independent partitions.
pub fn same_part_probability(
    inputs: &Matrix,
    i1: usize,
    i2: usize,
    trials: usize,
    q: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if trials == 0 {
        return Err(PcnnError::InvalidArgument("trials must be >= 1".into()));
    }
    if i1 >= inputs.rows() || i2 >= inputs.rows() {
        return Err(PcnnError::InvalidArgument("probe index out of range".into()));
    }
    if i1 == i2 {
        return Ok(1.0);
    }
    check_q(q)?;
    let stats = pair_stats(inputs)?;
    let base = Rng::new(rng.next_u64());
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = base.child(streams::TRIAL ^ ((t as u64) << 8));
            let (p, _) = get_partition_with_stats(inputs, q, &stats, &mut r)?;
            let a = p.parts.iter().position(|part| part.contains(&i1));
            let b = p.parts.iter().position(|part| part.contains(&i2));
            Ok(usize::from(a == b))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / trials as f64)
}

/// Lower bound `1 - 8(ln n + 1)‖x1 - x2‖ / Δ̄` on the same-part probability,
/// clipped at zero.
pub fn same_part_bound(n: usize, distance: f64, delta_bar: f64) -> f64 {
    (1.0 - 8.0 * ((n as f64).ln() + 1.0) * distance / delta_bar).max(0.0)
}

/// Smallest distance between anchors of different parts. Parts built with
/// radius `Δ` have disjoint interiors whenever this is at least `2Δ`.
pub fn min_cross_part_gap(parts: &[GeometricPart]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in parts.iter().enumerate() {
        for b in &parts[i + 1..] {
            for x in a.anchors.iter_rows() {
                for y in b.anchors.iter_rows() {
                    gap = gap.min(euclidean(x, y));
                }
            }
        }
    }
    gap
}

/// `row_index,part_id` for every row.
pub fn write_partition_csv(path: impl AsRef<Path>, partition: &DataPartition, n_rows: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["row_index", "part_id"])?;
    for (i, p) in partition.assignments(n_rows).into_iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| PcnnError::io(path.as_ref(), e))
}

/// `part,radius,x0..` with one line per anchor.
pub fn write_geometry_csv(path: impl AsRef<Path>, parts: &[GeometricPart]) -> Result<()> {
    let path = path.as_ref();
    let d = parts.first().map_or(0, |p| p.anchors.cols());
    let mut out = Vec::new();
    let mut header = vec!["part".to_string(), "radius".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    writeln!(out, "{}", header.join(",")).map_err(|e| PcnnError::io(path, e))?;
    for (p, part) in parts.iter().enumerate() {
        for a in part.anchors.iter_rows() {
            let coords: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{p},{},{}", part.radius, coords.join(",")).map_err(|e| PcnnError::io(path, e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| PcnnError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64]) -> Matrix {
        Matrix::column(xs).unwrap()
    }

    #[test]
    fn delta_min_examples() {
        assert_abs_diff_eq!(delta_min(&line(&[0.0, 1.0, 10.0])).unwrap(), 0.5);
        let pts = Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_abs_diff_eq!(delta_min(&pts).unwrap(), 2.5);
        assert_abs_diff_eq!(delta_min(&line(&[0.0, 0.0, 1.0])).unwrap(), 0.5);
    }

    #[test]
    fn delta_bar_examples() {
        assert_abs_diff_eq!(delta_bar(&line(&[0.0, 1.0, 10.0])).unwrap(), 20.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_bar(&line(&[0.0, 2.0])).unwrap(), 2.0);
        assert_abs_diff_eq!(delta_bar(&line(&[0.0, 1.0, 2.0])).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(delta_min(&line(&[1.0])).is_err());
        assert!(delta_bar(&line(&[2.0, 2.0, 2.0])).is_err());
        assert!(matches!(
            get_partition(&line(&[3.0, 3.0]), 0.5, &mut Rng::new(0)),
            Err(PcnnError::DegenerateData(_))
        ));
        assert!(get_partition(&line(&[0.0, 1.0]), 0.0, &mut Rng::new(0)).is_err());
        assert!(get_partition(&line(&[0.0, 1.0]), 1.5, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn forced_alpha_hand_simulation() {
        // Δ̄ = 20/3, α = 0.3 → radius 2.
        let x = line(&[0.0, 1.0, 10.0]);
        let (p, geo) = partition_with(&x, 0.01, 0.3, vec![0, 1, 2]).unwrap();
        assert_eq!(p.parts, vec![vec![0, 1], vec![2]]);
        assert_eq!(p.len(), 2);
        assert_eq!(geo.len(), 2);
        assert_abs_diff_eq!(geo[0].radius, 0.5);
    }

    #[test]
    fn q_one_stops_after_first_ball() {
        let x = line(&[0.0, 1.0, 10.0]);
        let (p, _) = partition_with(&x, 1.0, 0.3, vec![0, 1, 2]).unwrap();
        assert_eq!(p.parts, vec![vec![0, 1], vec![2]]);
        assert_eq!(p.iterations, 1);
        let (p, _) = partition_with(&x, 1.0, 0.3, vec![2, 0, 1]).unwrap();
        assert_eq!(p.parts, vec![vec![2], vec![0, 1]]);
        // A ball of radius < Δ̄/2 can never hold every point (all pairwise
        // distances would be < Δ̄), so at least two parts always come out.
        for seed in 0..20 {
            let (p, _) = get_partition(&line(&[0.0, 0.1, 0.2, 0.21, 0.5]), 1.0, &mut Rng::new(seed)).unwrap();
            assert_eq!(p.len(), 2);
        }
    }

    #[test]
    fn separated_clusters_never_mix() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(i as f64 * 0.01);
            pts.push(100.0 + i as f64 * 0.01);
        }
        let x = line(&pts);
        for seed in 0..50 {
            let (p, _) = get_partition(&x, 0.05, &mut Rng::new(seed)).unwrap();
            for part in &p.parts {
                let left = part.iter().filter(|&&i| pts[i] < 50.0).count();
                assert!(left == 0 || left == part.len(), "mixed part {part:?}");
            }
        }
    }

    #[test]
    fn membership_examples() {
        let part = GeometricPart {
            anchors: line(&[0.0]),
            radius: 0.5,
        };
        assert!(part_membership(&part, &[0.4]));
        assert!(!part_membership(&part, &[0.6]));
        let part = GeometricPart {
            anchors: line(&[0.0, 1.0]),
            radius: 0.5,
        };
        assert!(part.contains(&[0.75]));
    }

    #[test]
    fn same_part_probability_basics() {
        let x = line(&[0.0, 0.001, 0.5, 1.0, 3.0]);
        let mut rng = Rng::new(1);
        assert_eq!(same_part_probability(&x, 2, 2, 10, 0.1, &mut rng).unwrap(), 1.0);
        let p = same_part_probability(&x, 0, 4, 50, 0.1, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&p));
        let close = same_part_probability(&x, 0, 1, 200, 0.1, &mut rng).unwrap();
        assert!(close > 0.9, "{close}");
    }

    #[test]
    fn duplicates_share_a_part() {
        let x = line(&[0.0, 0.0, 0.3, 0.9, 0.9, 2.0]);
        for seed in 0..30 {
            let (p, _) = get_partition(&x, 0.2, &mut Rng::new(seed)).unwrap();
            let a = p.assignments(6);
            assert_eq!(a[0], a[1]);
            assert_eq!(a[3], a[4]);
        }
    }

    #[test]
    fn csv_exports() {
        let x = line(&[0.0, 1.0, 10.0]);
        let (p, geo) = partition_with(&x, 0.01, 0.3, vec![0, 1, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_partition_csv(dir.path().join("p.csv"), &p, 3).unwrap();
        write_geometry_csv(dir.path().join("g.csv"), &geo).unwrap();
        let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert_eq!(text, "row_index,part_id\n0,0\n1,0\n2,1\n");
        let text = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
        assert_eq!(text, "part,radius,x0\n0,0.5,0\n0,0.5,1\n1,0.5,10\n");
    }
}
