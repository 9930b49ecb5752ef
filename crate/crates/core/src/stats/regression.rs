//! Ordinary least squares with hat-matrix leverage, variance inflation
//! factors, and Cook's distance.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOLERANCE};

pub const INTERCEPT: &str = "(intercept)";

/// 1 - R² at or below this is treated as a perfect fit (infinite VIF).
pub const VIF_PERFECT_FIT_TOL: f64 = 1e-10;

/// Leverage this close to one means the observation determines its own fit.
const LEVERAGE_ONE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Parameter names, intercept first when present.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual sum of squares over n - p.
    pub mse: f64,
    /// Diagonal of the hat matrix.
    pub leverage: Vec<f64>,
    pub n_params: usize,
}

impl OlsFit {
    pub fn sse(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }
}

fn design(x: &DataMatrix, intercept: bool) -> (DMatrix<f64>, Vec<String>) {
    let n = x.nrows();
    let offset = usize::from(intercept);
    let mut names = Vec::with_capacity(x.ncols() + offset);
    if intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(x.columns().iter().cloned());
    let a = DMatrix::from_fn(n, x.ncols() + offset, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            x.values()[(i, j - offset)]
        }
    });
    (a, names)
}

/// Find the first dependent column of `a` and the columns it depends on.
fn singular_design_error(a: &DMatrix<f64>, names: &[String], kept: &[usize]) -> Error {
    let dependent = (0..a.ncols())
        .find(|j| !kept.contains(j))
        .expect("called only when a column was dropped");
    let before: Vec<usize> = kept.iter().copied().filter(|&k| k < dependent).collect();
    let target = a.column(dependent).into_owned();
    let mut depends_on = Vec::new();
    if !before.is_empty() {
        let sub = a.select_columns(&before);
        let coef = linalg::lstsq_full_rank(&sub, &target);
        let scale = target.norm().max(f64::MIN_POSITIVE);
        for (c, &k) in coef.iter().zip(&before) {
            if (c * a.column(k).norm()).abs() > 1e-8 * scale {
                depends_on.push(names[k].clone());
            }
        }
    }
    Error::SingularDesign {
        column: names[dependent].clone(),
        depends_on,
    }
}

/// Least-squares fit of `y` on the columns of `x`.
pub fn ols(y: &[f64], x: &DataMatrix, intercept: bool) -> Result<OlsFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::contract(format!(
            "response has {} values but the design has {n} rows",
            y.len()
        )));
    }
    if n <= x.ncols() + 1 {
        return Err(Error::contract(format!(
            "{n} observations are too few for {} predictors",
            x.ncols()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("response contains non-finite values"));
    }
    let (a, names) = design(x, intercept);
    let kept = linalg::independent_columns(&a, RANK_TOLERANCE);
    if kept.len() < a.ncols() {
        return Err(singular_design_error(&a, &names, &kept));
    }
    let b = DVector::from_column_slice(y);
    let coef = linalg::lstsq_full_rank(&a, &b);
    let fitted = &a * &coef;
    let residuals = &b - &fitted;
    let q = linalg::thin_q(&a);
    let leverage: Vec<f64> = (0..n).map(|i| q.row(i).norm_squared()).collect();
    let p = a.ncols();
    let sse = residuals.norm_squared();
    Ok(OlsFit {
        names,
        coefficients: coef.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
        mse: sse / (n - p) as f64,
        leverage,
        n_params: p,
    })
}

/// Variance inflation factor of every column, `+inf` for exact collinearity.
pub fn vif(x: &DataMatrix) -> Result<IndexMap<String, f64>> {
    let (n, k) = (x.nrows(), x.ncols());
    if k < 2 {
        return Err(Error::contract("VIF needs at least two columns"));
    }
    if n < k + 2 {
        return Err(Error::contract(format!(
            "VIF needs at least {} rows for {k} columns, got {n}",
            k + 2
        )));
    }
    let mut out = IndexMap::with_capacity(k);
    for j in 0..k {
        let target = DVector::from_iterator(n, x.values().column(j).iter().copied());
        let others = DMatrix::from_fn(n, k, |i, c| match c {
            0 => 1.0,
            c if c <= j => x.values()[(i, c - 1)],
            c => x.values()[(i, c)],
        });
        let fitted = linalg::project(&others, &target);
        let mean = target.mean();
        let sst: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sse = (&target - &fitted).norm_squared();
        let one_minus_r2 = if sst > 0.0 { sse / sst } else { 0.0 };
        let value = if one_minus_r2 <= VIF_PERFECT_FIT_TOL {
            f64::INFINITY
        } else {
            1.0 / one_minus_r2
        };
        out.insert(x.columns()[j].clone(), value);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceReport {
    pub keys: Vec<String>,
    pub cooks_d: Vec<f64>,
    pub threshold: f64,
    pub flagged: Vec<String>,
    #[serde(skip)]
    pub flagged_index: Vec<usize>,
}

/// Cook's distance of every observation under an intercept-bearing OLS fit,
/// via D_i = e_i² h_ii / (p MSE (1 - h_ii)²), flagging D_i > 4/n.
pub fn cooks_distance(y: &[f64], x: &DataMatrix) -> Result<InfluenceReport> {
    let fit = ols(y, x, true)?;
    let n = y.len();
    if let Some(i) = fit.leverage.iter().position(|&h| h >= 1.0 - LEVERAGE_ONE_TOL) {
        return Err(Error::degenerate(format!(
            "observation `{}` has leverage 1 and determines its own fit",
            x.rows()[i]
        )));
    }
    let sst = {
        let m = linalg::mean(y);
        y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let exact_fit = fit.sse() <= 1e-24 * sst.max(f64::MIN_POSITIVE);
    let p = fit.n_params as f64;
    let cooks_d: Vec<f64> = fit
        .residuals
        .iter()
        .zip(&fit.leverage)
        .map(|(&e, &h)| {
            if exact_fit || e == 0.0 {
                0.0
            } else {
                let one_minus_h = 1.0 - h;
                (e * e / (p * fit.mse)) * (h / (one_minus_h * one_minus_h))
            }
        })
        .collect();
    let threshold = 4.0 / n as f64;
    let flagged_index: Vec<usize> = cooks_d
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(InfluenceReport {
        keys: x.rows().to_vec(),
        flagged: flagged_index.iter().map(|&i| x.rows()[i].clone()).collect(),
        cooks_d,
        threshold,
        flagged_index,
    })
}
