//! Small dense linear-algebra helpers shared by the regression code.

use nalgebra::{DMatrix, DVector};

/// Relative residual norm below which a column counts as linearly dependent
/// on the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Greedy column selection by modified Gram-Schmidt with one
/// re-orthogonalisation pass.
///
/// Returns the indices of columns that are independent of the columns
/// selected before them, in their original order.
pub fn independent_columns(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..a.ncols() {
        let col = a.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let rnorm = v.norm();
        if rnorm > tol * norm {
            basis.push(v / rnorm);
            kept.push(j);
        }
    }
    kept
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    independent_columns(a, RANK_TOLERANCE).len()
}

/// Least squares for a full-column-rank `a` via Householder QR.
pub fn lstsq_full_rank(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.transpose() * b;
    r.solve_upper_triangular(&qtb)
        .expect("full-rank R has a nonzero diagonal")
}

/// Fitted values of the least-squares projection of `b` onto the column space
/// of `a`, tolerating rank deficiency by dropping dependent columns.
pub fn project(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let keep = independent_columns(a, RANK_TOLERANCE);
    if keep.is_empty() {
        return DVector::zeros(b.len());
    }
    let sub = a.select_columns(&keep);
    let coef = lstsq_full_rank(&sub, b);
    sub * coef
}

/// Thin Q factor of a full-column-rank matrix.
pub fn thin_q(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}
