use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Rectangular table of named numeric features indexed by observation key.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: Vec<String>,
    columns: Vec<String>,
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != rows.len() || values.ncols() != columns.len() {
            return Err(Error::contract(format!(
                "matrix is {}x{} but {} row keys and {} column names were given",
                values.nrows(),
                values.ncols(),
                rows.len(),
                columns.len()
            )));
        }
        if let Some(dup) = first_duplicate(&columns) {
            return Err(Error::contract(format!("duplicate column name `{dup}`")));
        }
        if let Some(dup) = first_duplicate(&rows) {
            return Err(Error::contract(format!("duplicate row key `{dup}`")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::contract(format!(
                "non-finite value at row `{}`, column `{}`",
                rows[r], columns[c]
            )));
        }
        Ok(Self {
            rows,
            columns,
            values,
        })
    }

    /// Build from per-column vectors of equal length.
    pub fn from_columns(rows: Vec<String>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = rows.len();
        if let Some((name, _)) = columns.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::contract(format!(
                "column `{name}` length differs from the {n} row keys"
            )));
        }
        let names: Vec<String> = columns.iter().map(|(name, _)| name.clone()).collect();
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);
        Self::new(rows, names, values)
    }

    /// Unnamed matrix with generated keys `r0..` and columns `x0..`.
    pub fn anonymous(values: DMatrix<f64>) -> Result<Self> {
        let rows = (0..values.nrows()).map(|i| format!("r{i}")).collect();
        let cols = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = HashSet::new();
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .map(String::as_str)
}

/// Standardize a single vector to mean 0 and sample standard deviation 1.
pub fn zscore_vec(values: &[f64], name: &str) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::degenerate(format!(
            "`{name}` needs at least two observations to standardize"
        )));
    }
    let mean = linalg::mean(values);
    let sd = linalg::sample_sd(values);
    if sd <= 0.0 || !sd.is_finite() {
        return Err(Error::degenerate(format!("`{name}` has zero variance")));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Column-wise z-scores.
pub fn zscore(matrix: &DataMatrix) -> Result<DataMatrix> {
    let mut out = matrix.values.clone();
    for j in 0..matrix.ncols() {
        let z = zscore_vec(&matrix.column(j), &matrix.columns[j])?;
        for (i, v) in z.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(DataMatrix {
        rows: matrix.rows.clone(),
        columns: matrix.columns.clone(),
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(col: &[f64]) -> DataMatrix {
        DataMatrix::from_columns(
            (0..col.len()).map(|i| i.to_string()).collect(),
            vec![("a".into(), col.to_vec())],
        )
        .unwrap()
    }

    #[test]
    fn zscore_one_two_three() {
        let z = zscore(&single(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zscore_is_idempotent() {
        let m = single(&[3.0, 9.5, -2.0, 4.25, 7.0]);
        let once = zscore(&m).unwrap();
        let twice = zscore(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let col = once.column(0);
        assert!(linalg::mean(&col).abs() < 1e-12);
        assert!((linalg::sample_sd(&col) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_named_in_error() {
        let err = zscore(&single(&[4.0, 4.0, 4.0])).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn rejects_duplicate_columns() {
        let err = DataMatrix::from_columns(
            vec!["r".into()],
            vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
