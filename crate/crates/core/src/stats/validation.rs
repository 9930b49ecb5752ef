//! External validation of perception scores against a survey series:
//! influence filtering with Cook's distance, then correlation.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{cooks_distance, pearson, DataMatrix};
use crate::error::{Error, Result};
use crate::ingest::{SurveySeries, YearMonth};

/// Minimum number of joined (state, month) pairs.
pub const MIN_JOINED: usize = 10;

pub type StateMonth = (String, YearMonth);

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub r_pre: f64,
    pub p_pre: f64,
    pub n_pre: usize,
    pub r_post: f64,
    pub p_post: f64,
    pub n_post: usize,
    pub removed: Vec<String>,
    pub threshold: f64,
}

pub fn state_month_key(state: &str, month: YearMonth) -> String {
    format!("{state}|{month}")
}

/// Join scores to the survey on (state, month), regress the delayed ratio on
/// the score, drop observations with Cook's D above 4/n, and correlate
/// before and after the removal.
pub fn validate_against_survey(
    scores: &BTreeMap<StateMonth, f64>,
    survey: &SurveySeries,
) -> Result<ValidationReport> {
    let mut keys = Vec::new();
    let mut score_vals = Vec::new();
    let mut ratio_vals = Vec::new();
    for entry in survey.entries() {
        if let Some(&s) = scores.get(&(entry.state.clone(), entry.month)) {
            keys.push(state_month_key(&entry.state, entry.month));
            score_vals.push(s);
            ratio_vals.push(entry.delayed_ratio);
        }
    }
    if keys.len() < MIN_JOINED {
        return Err(Error::contract(format!(
            "validation joined {} (state, month) pairs, need at least {MIN_JOINED}",
            keys.len()
        )));
    }
    let pre = pearson(&score_vals, &ratio_vals)?;
    let design = DataMatrix::from_columns(keys.clone(), vec![("score".into(), score_vals.clone())])?;
    let influence = cooks_distance(&ratio_vals, &design)?;
    let keep: Vec<usize> = (0..keys.len())
        .filter(|i| !influence.flagged_index.contains(i))
        .collect();
    let xs: Vec<f64> = keep.iter().map(|&i| score_vals[i]).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| ratio_vals[i]).collect();
    let post = pearson(&xs, &ys)?;
    Ok(ValidationReport {
        r_pre: pre.r,
        p_pre: pre.p_value,
        n_pre: pre.n,
        r_post: post.r,
        p_post: post.p_value,
        n_post: post.n,
        removed: influence.flagged,
        threshold: influence.threshold,
    })
}
