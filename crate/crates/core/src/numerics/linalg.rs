use crate::error::{PcnnError, Result};
use crate::numerics::Matrix;

/// Numerically stable logistic function `e^x / (1 + e^x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Ridge regression: the `W` minimising `‖F·W − Y‖² + λ‖W‖²`.
///
/// Solves `(FᵀF + λI) W = FᵀY` by Cholesky; if the factorisation breaks down
/// the system is retried with partially pivoted Gaussian elimination.
pub fn ridge_solve(features: &Matrix, targets: &Matrix, lambda: f64) -> Result<Matrix> {
    if features.rows() != targets.rows() {
        return Err(PcnnError::DimensionMismatch(format!(
            "features have {} rows, targets {}",
            features.rows(),
            targets.rows()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(PcnnError::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let mut gram = features.t_matmul(features)?;
    let p = gram.rows();
    for i in 0..p {
        let v = gram.get(i, i) + lambda;
        gram.set(i, i, v);
    }
    let rhs = features.t_matmul(targets)?;
    if let Some(l) = cholesky(&gram) {
        return Ok(cholesky_solve(&l, &rhs));
    }
    lu_solve(gram, rhs)
}

/// Lower-triangular Cholesky factor, or `None` when the matrix is not
/// numerically positive definite.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 1e-13 * scale) {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, rhs: &Matrix) -> Matrix {
    let n = l.rows();
    let m = rhs.cols();
    let mut x = rhs.clone();
    for c in 0..m {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

fn lu_solve(mut a: Matrix, mut b: Matrix) -> Result<Matrix> {
    let n = a.rows();
    let m = b.cols();
    let scale = a.as_slice().iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap_or(col);
        if a.get(pivot, col).abs() <= 1e-12 * scale {
            return Err(PcnnError::Singular(format!(
                "Gram matrix is rank-deficient at column {col}"
            )));
        }
        if pivot != col {
            for k in 0..n {
                let t = a.get(col, k);
                a.set(col, k, a.get(pivot, k));
                a.set(pivot, k, t);
            }
            for k in 0..m {
                let t = b.get(col, k);
                b.set(col, k, b.get(pivot, k));
                b.set(pivot, k, t);
            }
        }
        let p = a.get(col, col);
        for r in col + 1..n {
            let f = a.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                let v = a.get(r, k) - f * a.get(col, k);
                a.set(r, k, v);
            }
            for k in 0..m {
                let v = b.get(r, k) - f * b.get(col, k);
                b.set(r, k, v);
            }
        }
    }
    for c in 0..m {
        for i in (0..n).rev() {
            let mut s = b.get(i, c);
            for k in i + 1..n {
                s -= a.get(i, k) * b.get(k, c);
            }
            b.set(i, c, s / a.get(i, i));
        }
    }
    Ok(b)
}
