//! CSV inputs: the survey delayed-ratio series and the county covariates.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use super::YearMonth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyEntry {
    pub state: String,
    pub month: YearMonth,
    pub delayed_ratio: f64,
}

/// Monthly state-level share of respondents reporting delayed access.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurveySeries {
    entries: Vec<SurveyEntry>,
}

impl SurveySeries {
    pub fn new(entries: Vec<SurveyEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.state.clone(), e.month)) {
                return Err(Error::format(
                    "survey",
                    format!("duplicate entry {},{}", e.state, e.month),
                ));
            }
            if !(0.0..=1.0).contains(&e.delayed_ratio) {
                return Err(Error::format(
                    "survey",
                    format!("delayed_ratio {} outside [0, 1]", e.delayed_ratio),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SurveyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_state_code(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_alphabetic())
}

/// Parse a `state,month,delayed_ratio` CSV. Errors carry the file line.
pub fn parse_survey<R: Read>(reader: R) -> Result<SurveySeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["state", "month", "delayed_ratio"] {
        return Err(Error::format(
            "survey",
            format!("expected header state,month,delayed_ratio, found {}", header.join(",")),
        ));
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: String| Error::format("survey", format!("row {line}: {m}"));
        if record.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", record.len())));
        }
        let state = record[0].to_string();
        if !is_state_code(&state) {
            return Err(err(format!("`{state}` is not a 2-letter state code")));
        }
        let month: YearMonth = record[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let ratio: f64 = record[2]
            .parse()
            .map_err(|_| err(format!("`{}` is not a number", &record[2])))?;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(err(format!("delayed_ratio {ratio} outside [0, 1]")));
        }
        if !seen.insert((state.clone(), month)) {
            return Err(err(format!("duplicate entry {state},{month}")));
        }
        entries.push(SurveyEntry {
            state,
            month,
            delayed_ratio: ratio,
        });
    }
    Ok(SurveySeries { entries })
}

/// County-indexed socioeconomic predictors; missing cells are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

/// Parse a covariate CSV whose first column is `fips`. Empty and `NA` cells
/// are missing values.
pub fn parse_covariates<R: Read>(reader: R) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("fips") {
        return Err(Error::format("covariates", "first column must be `fips`"));
    }
    let names: Vec<String> = header[1..].to_vec();
    if names.is_empty() {
        return Err(Error::format("covariates", "no predictor columns"));
    }
    let mut uniq = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !uniq.insert(n.as_str())) {
        return Err(Error::format("covariates", format!("duplicate column `{dup}`")));
    }
    let mut rows = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: String| Error::format("covariates", format!("row {line}: {m}"));
        if record.len() != header.len() {
            return Err(err(format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let fips = record[0].to_string();
        let mut values = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                values.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| err(format!("`{cell}` in column `{}` is not a number", header[j])))?;
            values.push(v.is_finite().then_some(v));
        }
        if rows.insert(fips.clone(), values).is_some() {
            return Err(err(format!("duplicate fips {fips}")));
        }
    }
    Ok(CovariateTable { names, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_single_row() {
        let s = parse_survey("state,month,delayed_ratio\nCA,2020-04,0.31\n".as_bytes()).unwrap();
        assert_eq!(
            s.entries(),
            &[SurveyEntry {
                state: "CA".into(),
                month: YearMonth { year: 2020, month: 4 },
                delayed_ratio: 0.31
            }]
        );
    }

    #[test]
    fn survey_duplicate_rejected() {
        let e = parse_survey("state,month,delayed_ratio\nCA,2020-04,0.31\nCA,2020-04,0.2\n".as_bytes())
            .unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }

    #[test]
    fn survey_ratio_out_of_range_names_row() {
        let e = parse_survey("state,month,delayed_ratio\nCA,2020-04,0.31\nTX,2020-05,1.5\n".as_bytes())
            .unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
    }

    #[test]
    fn survey_header_must_match() {
        assert!(parse_survey("st,month,delayed_ratio\nCA,2020-04,0.31\n".as_bytes()).is_err());
    }

    #[test]
    fn covariates_with_missing_cells() {
        let t = parse_covariates("fips,a,b\n01001,1.5,\n01003,NA,2\n".as_bytes()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.rows["01001"], vec![Some(1.5), None]);
        assert_eq!(t.rows["01003"], vec![None, Some(2.0)]);
        assert!(parse_covariates("fips,a\n01001,x\n".as_bytes()).is_err());
        assert!(parse_covariates("id,a\n01001,1\n".as_bytes()).is_err());
    }
}
