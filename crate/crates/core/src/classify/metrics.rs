use serde::Serialize;

use super::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// In [`Label::ALL`] order.
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub cohen_kappa: f64,
    /// `confusion[gold][pred]`, indexed in [`Label::ALL`] order.
    pub confusion: [[u64; 3]; 3],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1, macro-F1 and Cohen's kappa.
///
/// Kappa is evaluated from integer counts as
/// (n·Σc_kk − Σr_k·c_k) / (n² − Σr_k·c_k), which equals (p_o − p_e)/(1 − p_e)
/// without intermediate rounding.
pub fn evaluate(pred: &[Label], gold: &[Label]) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::contract(format!(
            "evaluate: {} predictions vs {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("evaluate: no items"));
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, g) in pred.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    let n = pred.len() as u64;
    let diag: u64 = (0..3).map(|k| confusion[k][k]).sum();
    let row = |k: usize| confusion[k].iter().sum::<u64>();
    let col = |k: usize| (0..3).map(|g| confusion[g][k]).sum::<u64>();

    let per_class: Vec<ClassMetrics> = Label::ALL
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let tp = confusion[k][k];
            let precision = ratio(tp, col(k));
            let recall = ratio(tp, row(k));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support: row(k),
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;

    let chance: u128 = (0..3).map(|k| u128::from(row(k)) * u128::from(col(k))).sum();
    let n2 = u128::from(n) * u128::from(n);
    let cohen_kappa = if chance == n2 {
        1.0
    } else {
        let num = i128::try_from(u128::from(n) * u128::from(diag)).unwrap() - chance as i128;
        num as f64 / (n2 - chance) as f64
    };

    Ok(EvalReport {
        accuracy: ratio(diag, n),
        per_class,
        macro_f1,
        cohen_kappa,
        confusion,
    })
}
