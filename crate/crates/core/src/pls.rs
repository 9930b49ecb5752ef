//! Single-response SIMPLS regression with permutation p-values and
//! standard errors, cross-validated component selection, and the county-level
//! driver that joins scores to covariates.

use std::collections::BTreeMap;
use std::io::Write;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::CovariateTable;
use crate::linalg;
use crate::rng;
use crate::stats::{self, DataMatrix};

/// Residual covariance ‖s‖ below this fraction of its initial norm ends the
/// component loop early.
pub const EXHAUSTION_TOL: f64 = 1e-11;

/// Relative slack when comparing a permuted coefficient's magnitude with the
/// observed one, so bitwise-different but mathematically equal values tie.
pub const PERM_TIE_RTOL: f64 = 1e-10;

/// Redraws allowed per permutation index before giving up.
pub const MAX_RETRIES: u32 = 10;

pub const MIN_COUNTIES: usize = 30;

/// A fitted SIMPLS model. Matrices have one column per extracted component.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsModel {
    pub n_components: usize,
    /// True when residual covariance ran out before `requested_components`.
    pub truncated: bool,
    pub requested_components: usize,
    /// R: maps centered X to scores, `T = X R`.
    pub x_weights: DMatrix<f64>,
    /// P = Xᵀ T.
    pub x_loadings: DMatrix<f64>,
    /// q = Tᵀ y.
    pub y_loadings: DVector<f64>,
    /// T, orthonormal columns.
    pub x_scores: DMatrix<f64>,
    /// U = y qᵀ, orthogonalized against earlier scores.
    pub y_scores: DMatrix<f64>,
    /// K = R q, on centered inputs.
    pub coefficients: DVector<f64>,
    pub x_means: DVector<f64>,
    pub y_mean: f64,
}

impl PlsModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = x * &self.coefficients;
        let offset = self.y_mean - self.x_means.dot(&self.coefficients);
        out.add_scalar_mut(offset);
        out
    }
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

fn center(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut x0 = x.clone();
    for (j, mut col) in x0.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    x0
}

/// Remove the components of `v` along the orthonormal `basis`, twice for
/// numerical stability; returns the total coefficients removed.
fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) -> Vec<f64> {
    let mut removed = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (k, b) in basis.iter().enumerate() {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
            removed[k] += c;
        }
    }
    removed
}

/// SIMPLS without the rank precondition; stops early when the residual
/// covariance is exhausted.
fn simpls_core(x: &DMatrix<f64>, y: &DVector<f64>, n_components: usize) -> Result<PlsModel> {
    if n_components == 0 {
        return Err(Error::contract("n_components must be at least 1"));
    }
    if x.nrows() != y.len() {
        return Err(Error::contract(format!("X has {} rows but y has {}", x.nrows(), y.len())));
    }
    let x_means = column_means(x);
    let y_mean = y.mean();
    let x0 = center(x, &x_means);
    let y0 = y.add_scalar(-y_mean);

    let mut s = x0.tr_mul(&y0);
    let s_norm0 = s.norm();
    if s_norm0 <= 0.0 || !s_norm0.is_finite() {
        return Err(Error::degenerate("X and y have no covariance to extract"));
    }

    let (mut rs, mut ts, mut ps, mut vs, mut us) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut qs = Vec::new();
    let mut truncated = false;
    for _ in 0..n_components {
        if s.norm() <= EXHAUSTION_TOL * s_norm0 {
            truncated = true;
            break;
        }
        let mut r = s.clone();
        let mut t = &x0 * &r;
        let removed = orthogonalize(&mut t, &ts);
        for (k, c) in removed.iter().enumerate() {
            r.axpy(-c, &rs[k], 1.0);
        }
        let t_norm = t.norm();
        if t_norm.is_nan() || t_norm <= EXHAUSTION_TOL * r.norm() * x0.norm() {
            truncated = true;
            break;
        }
        t /= t_norm;
        r /= t_norm;
        let p = x0.tr_mul(&t);
        let q = y0.dot(&t);
        let mut u = &y0 * q;
        orthogonalize(&mut u, &ts);
        let mut v = p.clone();
        orthogonalize(&mut v, &vs);
        let v_norm = v.norm();
        if v_norm > 0.0 {
            v /= v_norm;
            let proj = v.dot(&s);
            s.axpy(-proj, &v, 1.0);
        }
        rs.push(r);
        ts.push(t);
        ps.push(p);
        vs.push(v);
        us.push(u);
        qs.push(q);
    }
    let a = rs.len();
    let y_loadings = DVector::from_vec(qs);
    let x_weights = DMatrix::from_columns(&rs);
    let coefficients = &x_weights * &y_loadings;
    Ok(PlsModel {
        n_components: a,
        truncated,
        requested_components: n_components,
        x_weights,
        x_loadings: DMatrix::from_columns(&ps),
        y_loadings,
        x_scores: DMatrix::from_columns(&ts),
        y_scores: DMatrix::from_columns(&us),
        coefficients,
        x_means,
        y_mean,
    })
}

/// Largest admissible component count: rank of the centered X, capped at
/// rows − 1.
pub fn component_limit(x: &DMatrix<f64>) -> usize {
    let x0 = center(x, &column_means(x));
    linalg::rank(&x0).min(x.nrows().saturating_sub(1))
}

/// Fit SIMPLS with `n_components` latent components.
///
/// Errors when `n_components` exceeds the rank of the centered X or rows − 1.
/// If the residual covariance runs out first, the model carries fewer
/// components and `truncated` is set.
pub fn simpls_fit(x: &DMatrix<f64>, y: &DVector<f64>, n_components: usize) -> Result<PlsModel> {
    let limit = component_limit(x);
    if n_components > limit {
        return Err(Error::contract(format!(
            "{n_components} components requested but at most {limit} are identifiable"
        )));
    }
    let model = simpls_core(x, y, n_components)?;
    if model.truncated {
        log::warn!(
            "SIMPLS stopped after {} of {} components: residual covariance exhausted",
            model.n_components,
            n_components
        );
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationOptions {
    pub n_perm: usize,
    pub seed: u64,
    /// Use (c + 1)/(n_perm + 1) instead of the plain proportion c/n_perm.
    pub corrected: bool,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            n_perm: 1000,
            seed: 0,
            corrected: false,
        }
    }
}

/// Observed fit plus permutation inference for each coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsFit {
    pub model: PlsModel,
    pub r2: f64,
    pub rmse: f64,
    pub coeffs: IndexMap<String, f64>,
    pub p_values: IndexMap<String, f64>,
    pub std_errs: IndexMap<String, f64>,
    /// Permutations whose |coefficient| reached the observed one.
    pub exceed_counts: IndexMap<String, usize>,
    pub n_perm: usize,
    pub seed: u64,
    pub corrected: bool,
    /// Permutations that had to be redrawn because the refit failed.
    pub n_redraws: usize,
}

impl PlsFit {
    /// p-value as text; a zero plain proportion becomes `<1/n_perm`.
    pub fn p_value_label(&self, name: &str) -> Option<String> {
        let p = *self.p_values.get(name)?;
        Some(if p == 0.0 {
            format!("<{}", 1.0 / self.n_perm as f64)
        } else {
            p.to_string()
        })
    }
}

fn r2_rmse(y: &DVector<f64>, fitted: &DVector<f64>) -> (f64, f64) {
    let mean = y.mean();
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    (1.0 - sse / sst, (sse / y.len() as f64).sqrt())
}

fn permuted_fit(x: &DMatrix<f64>, y: &DVector<f64>, n_components: usize, seed: u64, k: usize) -> Result<(DVector<f64>, u32)> {
    let n = y.len();
    let mut last = None;
    for retry in 0..=MAX_RETRIES {
        let perm = rng::permutation(n, seed, k as u64, retry);
        let yp = DVector::from_iterator(n, perm.iter().map(|&i| y[i]));
        match simpls_core(x, &yp, n_components) {
            Ok(m) => return Ok((m.coefficients, retry)),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::degenerate(format!(
        "permutation {k} failed after {MAX_RETRIES} redraws: {}",
        last.expect("at least one attempt")
    )))
}

/// Fit on the observed data, then refit on `n_perm` seeded permutations of y
/// with the same component count.
///
/// p-values are the proportion of permuted coefficients at least as large in
/// magnitude as the observed one; standard errors are the sample standard
/// deviation of the permuted coefficients. Results do not depend on thread
/// scheduling.
pub fn permutation_inference(
    x: &DataMatrix,
    y: &[f64],
    n_components: usize,
    opts: &PermutationOptions,
) -> Result<PlsFit> {
    if opts.n_perm < 2 {
        return Err(Error::contract("at least two permutations are required"));
    }
    if y.len() != x.nrows() {
        return Err(Error::contract(format!("X has {} rows but y has {}", x.nrows(), y.len())));
    }
    let xm = x.values();
    let yv = DVector::from_column_slice(y);
    let model = simpls_fit(xm, &yv, n_components)?;
    let (r2, rmse) = r2_rmse(&yv, &model.predict(xm));
    let used = model.n_components;

    let draws: Vec<(DVector<f64>, u32)> = (0..opts.n_perm)
        .into_par_iter()
        .map(|k| permuted_fit(xm, &yv, used, opts.seed, k))
        .collect::<Result<_>>()?;
    let n_redraws = draws.iter().map(|(_, r)| *r as usize).sum();

    let mut coeffs = IndexMap::new();
    let mut p_values = IndexMap::new();
    let mut std_errs = IndexMap::new();
    let mut exceed_counts = IndexMap::new();
    for (j, name) in x.columns().iter().enumerate() {
        let obs = model.coefficients[j];
        let null: Vec<f64> = draws.iter().map(|(c, _)| c[j]).collect();
        let threshold = obs.abs() * (1.0 - PERM_TIE_RTOL);
        let c = null.iter().filter(|v| v.abs() >= threshold).count();
        let p = if opts.corrected {
            (c + 1) as f64 / (opts.n_perm + 1) as f64
        } else {
            c as f64 / opts.n_perm as f64
        };
        coeffs.insert(name.clone(), obs);
        p_values.insert(name.clone(), p);
        std_errs.insert(name.clone(), linalg::sample_sd(&null));
        exceed_counts.insert(name.clone(), c);
    }
    Ok(PlsFit {
        model,
        r2,
        rmse,
        coeffs,
        p_values,
        std_errs,
        exceed_counts,
        n_perm: opts.n_perm,
        seed: opts.seed,
        corrected: opts.corrected,
        n_redraws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSelection {
    pub selected: usize,
    /// Mean out-of-fold RMSE for 1, 2, … components.
    pub cv_rmse: Vec<f64>,
    /// Standard error of that mean across folds.
    pub cv_se: Vec<f64>,
    pub folds: usize,
    /// The requested maximum exceeded what the data support.
    pub clamped: bool,
}

/// Choose a component count by seeded k-fold cross-validation.
///
/// Returns the smallest count whose mean out-of-fold RMSE is within one
/// standard error of the minimum, which reduces to the minimizer with ties
/// broken toward fewer components when errors are flat.
pub fn select_components(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    max_components: usize,
    seed: u64,
) -> Result<ComponentSelection> {
    let n = x.nrows();
    if folds < 2 {
        return Err(Error::contract("cross-validation needs at least two folds"));
    }
    if n < folds * 2 {
        return Err(Error::contract(format!("{folds} folds need at least {} rows, found {n}", folds * 2)));
    }
    if max_components == 0 {
        return Err(Error::contract("max_components must be at least 1"));
    }
    let smallest_train = n - n.div_ceil(folds);
    let limit = component_limit(x).min(smallest_train - 1).max(1);
    let clamped = max_components > limit;
    if clamped {
        log::warn!("max_components {max_components} clamped to {limit}");
    }
    let top = max_components.min(limit);

    let order = rng::permutation(n, seed, 0, 0);
    let mut fold_rmse = vec![Vec::with_capacity(folds); top];
    for f in 0..folds {
        let test: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds == f).map(|(_, &r)| r).collect();
        let train: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, &r)| r).collect();
        let xtr = x.select_rows(&train);
        let ytr = y.select_rows(&train);
        let xte = x.select_rows(&test);
        let yte = y.select_rows(&test);
        for (a, slot) in fold_rmse.iter_mut().enumerate() {
            let model = simpls_core(&xtr, &ytr, a + 1)?;
            let pred = model.predict(&xte);
            let mse = (pred - &yte).norm_squared() / test.len() as f64;
            slot.push(mse.sqrt());
        }
    }
    let cv_rmse: Vec<f64> = fold_rmse.iter().map(|v| linalg::mean(v)).collect();
    let cv_se: Vec<f64> = fold_rmse
        .iter()
        .map(|v| linalg::sample_sd(v) / (v.len() as f64).sqrt())
        .collect();
    let best = (0..top)
        .min_by(|&a, &b| cv_rmse[a].total_cmp(&cv_rmse[b]).then(a.cmp(&b)))
        .expect("at least one candidate");
    let bound = cv_rmse[best] + cv_se[best];
    let selected = (0..top).find(|&a| cv_rmse[a] <= bound).expect("best is within bound") + 1;
    Ok(ComponentSelection {
        selected,
        cv_rmse,
        cv_se,
        folds,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentChoice {
    Fixed(usize),
    CrossValidated { folds: usize, max_components: usize },
}

impl Default for ComponentChoice {
    fn default() -> Self {
        ComponentChoice::CrossValidated {
            folds: 5,
            max_components: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub components: ComponentChoice,
    pub permutation: PermutationOptions,
    pub min_counties: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            components: ComponentChoice::default(),
            permutation: PermutationOptions::default(),
            min_counties: MIN_COUNTIES,
        }
    }
}

/// One county-level PLS model with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub fit: PlsFit,
    pub n_obs: usize,
    /// Counties with a dependent value but missing or absent covariates.
    pub dropped: Vec<String>,
    pub vif: IndexMap<String, f64>,
    pub vif_error: Option<String>,
    pub selection: Option<ComponentSelection>,
    /// RMSE in the dependent variable's original units.
    pub rmse_original: f64,
}

/// Join `dependent` (fips → value) to the covariates, standardize both
/// sides, and fit a PLS model with permutation inference.
pub fn run_rq2_rq3(
    dependent: &BTreeMap<String, f64>,
    covariates: &CovariateTable,
    cfg: &ModelConfig,
) -> Result<ModelReport> {
    let mut keys = Vec::new();
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (fips, &value) in dependent {
        let complete = covariates
            .rows
            .get(fips)
            .and_then(|r| r.iter().copied().collect::<Option<Vec<f64>>>())
            .filter(|_| value.is_finite());
        match complete {
            Some(r) => {
                keys.push(fips.clone());
                y.push(value);
                rows.push(r);
            }
            None => dropped.push(fips.clone()),
        }
    }
    if keys.len() < cfg.min_counties {
        return Err(Error::contract(format!(
            "{} counties after joining covariates; at least {} are required",
            keys.len(),
            cfg.min_counties
        )));
    }
    if !dropped.is_empty() {
        log::info!("{} counties dropped for missing covariates", dropped.len());
    }
    let values = DMatrix::from_fn(keys.len(), covariates.names.len(), |i, j| rows[i][j]);
    let raw = DataMatrix::new(keys.clone(), covariates.names.clone(), values)?;
    let x = stats::zscore(&raw)?;
    let yz = stats::zscore_vec(&y, "dependent")?;
    let y_sd = linalg::sample_sd(&y);

    let (vif, vif_error) = match stats::vif(&raw) {
        Ok(v) => (v, None),
        Err(e) => {
            log::warn!("VIF not computed: {e}");
            (IndexMap::new(), Some(e.to_string()))
        }
    };

    let (n_components, selection) = match cfg.components {
        ComponentChoice::Fixed(k) => (k, None),
        ComponentChoice::CrossValidated { folds, max_components } => {
            let sel = select_components(
                x.values(),
                &DVector::from_column_slice(&yz),
                folds,
                max_components,
                cfg.permutation.seed,
            )?;
            (sel.selected, Some(sel))
        }
    };
    let fit = permutation_inference(&x, &yz, n_components, &cfg.permutation)?;
    let rmse_original = fit.rmse * y_sd;
    Ok(ModelReport {
        n_obs: keys.len(),
        fit,
        dropped,
        vif,
        vif_error,
        selection,
        rmse_original,
    })
}

/// Write `variable,coefficient,p_value,std_err`, one row per predictor.
pub fn write_table_csv<W: Write>(writer: W, fit: &PlsFit) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "coefficient", "p_value", "std_err"])?;
    for (name, coef) in &fit.coeffs {
        w.write_record([
            name.clone(),
            coef.to_string(),
            fit.p_value_label(name).expect("names agree"),
            fit.std_errs[name].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Finite values as numbers, infinities as the strings "inf" / "-inf".
fn number_or_label(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// JSON sidecar for [`write_table_csv`].
pub fn report_json(report: &ModelReport) -> Value {
    let fit = &report.fit;
    let vif: serde_json::Map<String, Value> =
        report.vif.iter().map(|(k, v)| (k.clone(), number_or_label(*v))).collect();
    json!({
        "r2": fit.r2,
        "rmse": fit.rmse,
        "rmse_original": report.rmse_original,
        "n_components": fit.model.n_components,
        "components_truncated": fit.model.truncated,
        "component_selection": report.selection,
        "n_perm": fit.n_perm,
        "seed": fit.seed,
        "p_value_correction": fit.corrected,
        "n_redraws": fit.n_redraws,
        "n_obs": report.n_obs,
        "dropped_counties": report.dropped,
        "vif": vif,
        "vif_error": report.vif_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 2.0, 0.5, //
                2.0, 1.0, -1.0, //
                3.0, 5.0, 2.0, //
                4.0, 3.0, 0.0, //
                5.0, 8.0, 1.5, //
                6.0, 4.0, -2.0,
            ],
        );
        let y = DVector::from_vec(vec![1.0, 0.5, 3.0, 2.5, 4.0, 2.0]);
        (x, y)
    }

    #[test]
    fn full_rank_matches_ols() {
        let (x, y) = design();
        let m = simpls_fit(&x, &y, 3).unwrap();
        let mut xi = DMatrix::from_element(6, 4, 1.0);
        xi.columns_mut(1, 3).copy_from(&x);
        let beta = linalg::lstsq_full_rank(&xi, &y);
        for j in 0..3 {
            assert!((m.coefficients[j] - beta[j + 1]).abs() < 1e-10 * beta[j + 1].abs().max(1.0));
        }
        let gram = m.x_scores.tr_mul(&m.x_scores);
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        let (x, y) = design();
        assert!(matches!(simpls_fit(&x, &y, 4), Err(Error::Contract(_))));
        assert!(simpls_fit(&x, &y, 0).is_err());
    }

    #[test]
    fn proportional_predictor_fits_exactly() {
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.5]);
        let x = DMatrix::from_column_slice(5, 1, (&y * 2.5).as_slice());
        let m = simpls_fit(&x, &y, 1).unwrap();
        let (r2, rmse) = r2_rmse(&y, &m.predict(&x));
        assert!((r2 - 1.0).abs() < 1e-14);
        assert!(rmse < 1e-14);
    }

    #[test]
    fn exhausted_covariance_truncates() {
        // y lies in the span of the first column, so one component suffices
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 4.0, 1.0, 5.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = simpls_fit(&x, &y, 2).unwrap();
        assert!(m.n_components <= 2);
        let pred = m.predict(&x);
        assert!((pred - &y).norm() < 1e-10);
    }

    #[test]
    fn zero_p_value_label() {
        let (x, y) = design();
        let dm = DataMatrix::anonymous(x).unwrap();
        let mut fit = permutation_inference(&dm, y.as_slice(), 1, &PermutationOptions { n_perm: 50, seed: 1, corrected: false }).unwrap();
        fit.p_values.insert("x0".into(), 0.0);
        assert_eq!(fit.p_value_label("x0").unwrap(), "<0.02");
    }

    #[test]
    fn folds_exceeding_half_the_rows() {
        let (x, y) = design();
        assert!(matches!(select_components(&x, &y, 4, 2, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn rank_one_design_selects_one_component() {
        let y = DVector::from_fn(40, |i, _| ((i * 7919) % 37) as f64 - 18.0);
        let x = DMatrix::from_fn(40, 3, |i, j| y[i] * [1.0, -0.5, 2.0][j]);
        let sel = select_components(&x, &y, 5, 3, 11).unwrap();
        assert_eq!(sel.selected, 1);
        assert!(sel.clamped);
        assert!(sel.cv_rmse[0] < 1e-10);
    }
}
