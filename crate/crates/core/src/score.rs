//! Per-county, per-period perception scores: the mean of ±1 labels over
//! reviews labelled Shortage or NoShortage, kept only when enough such
//! reviews exist.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::Serialize;
use serde_json::{json, Value};

use crate::classify::LabeledReview;
use crate::error::{Error, Result};
use crate::ingest::{CountySet, PeriodName, YearMonth};
use crate::stats::StateMonth;

pub const DEFAULT_MIN_SUPPORT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerceptionScore {
    pub fips: String,
    pub period: PeriodName,
    pub score: f64,
    /// Number of ±1 labels; unrelated reviews are not counted.
    pub n_reviews: usize,
    /// Sum of the ±1 labels, so `score == label_sum / n_reviews`.
    #[serde(skip)]
    pub label_sum: i64,
}

/// Group labels by (fips, period) and average the ±1 values.
///
/// Output is sorted by period, then fips.
pub fn aggregate_scores(labeled: &[LabeledReview], min_support: usize) -> Result<Vec<PerceptionScore>> {
    if min_support == 0 {
        return Err(Error::contract("min_support must be at least 1"));
    }
    let mut groups: BTreeMap<(PeriodName, &str), (i64, usize)> = BTreeMap::new();
    for r in labeled {
        if let Some(v) = r.label.polarity() {
            let g = groups.entry((r.period, r.fips.as_str())).or_default();
            g.0 += v;
            g.1 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .filter(|(_, (_, n))| *n >= min_support)
        .map(|((period, fips), (sum, n))| PerceptionScore {
            fips: fips.to_string(),
            period,
            score: sum as f64 / n as f64,
            n_reviews: n,
            label_sum: sum,
        })
        .collect())
}

pub fn scores_for(scores: &[PerceptionScore], period: PeriodName) -> Vec<PerceptionScore> {
    scores.iter().filter(|s| s.period == period).cloned().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeltaReport {
    /// later − earlier, per fips present in both.
    pub deltas: BTreeMap<String, f64>,
    pub only_in_earlier: Vec<String>,
    pub only_in_later: Vec<String>,
}

/// Score change from `earlier` to `later` for counties scored in both.
pub fn score_delta(earlier: &[PerceptionScore], later: &[PerceptionScore]) -> DeltaReport {
    let a: BTreeMap<&str, f64> = earlier.iter().map(|s| (s.fips.as_str(), s.score)).collect();
    let b: BTreeMap<&str, f64> = later.iter().map(|s| (s.fips.as_str(), s.score)).collect();
    let mut report = DeltaReport::default();
    for (fips, sa) in &a {
        match b.get(fips) {
            Some(sb) => {
                report.deltas.insert(fips.to_string(), sb - sa);
            }
            None => report.only_in_earlier.push(fips.to_string()),
        }
    }
    report.only_in_later = b
        .keys()
        .filter(|f| !a.contains_key(*f))
        .map(|f| f.to_string())
        .collect();
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyMean {
    pub month: YearMonth,
    pub mean: f64,
    pub n: usize,
}

/// Pooled mean of ±1 labels per calendar month (UTC).
pub fn national_trend(labeled: &[LabeledReview]) -> Vec<MonthlyMean> {
    let mut months: BTreeMap<YearMonth, (i64, usize)> = BTreeMap::new();
    for r in labeled {
        if let (Some(v), Some(m)) = (r.label.polarity(), YearMonth::of_timestamp(r.timestamp)) {
            let g = months.entry(m).or_default();
            g.0 += v;
            g.1 += 1;
        }
    }
    months
        .into_iter()
        .map(|(month, (sum, n))| MonthlyMean {
            month,
            mean: sum as f64 / n as f64,
            n,
        })
        .collect()
}

/// Pooled mean of ±1 labels per (state, month), with state taken from the
/// county of each review.
pub fn state_month_scores(labeled: &[LabeledReview], counties: &CountySet) -> BTreeMap<StateMonth, f64> {
    let mut groups: BTreeMap<StateMonth, (i64, usize)> = BTreeMap::new();
    for r in labeled {
        let Some(v) = r.label.polarity() else { continue };
        let Some(month) = YearMonth::of_timestamp(r.timestamp) else { continue };
        let Some(county) = counties.get(&r.fips) else { continue };
        if county.state.is_empty() {
            continue;
        }
        let g = groups.entry((county.state.clone(), month)).or_default();
        g.0 += v;
        g.1 += 1;
    }
    groups
        .into_iter()
        .map(|(k, (sum, n))| (k, sum as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportSummary {
    pub per_period: BTreeMap<PeriodName, usize>,
    /// Counties scored in every period.
    pub all_periods: usize,
}

pub fn support_summary(scores: &[PerceptionScore]) -> SupportSummary {
    let mut per: BTreeMap<PeriodName, BTreeSet<&str>> =
        PeriodName::ALL.iter().map(|&p| (p, BTreeSet::new())).collect();
    for s in scores {
        per.entry(s.period).or_default().insert(&s.fips);
    }
    let mut sets = per.values();
    let first = sets.next().cloned().unwrap_or_default();
    let all = sets.fold(first, |acc, s| acc.intersection(s).copied().collect());
    SupportSummary {
        per_period: per.iter().map(|(k, v)| (*k, v.len())).collect(),
        all_periods: all.len(),
    }
}

/// Write `fips,period,score,n_reviews`.
pub fn write_scores_csv<W: Write>(writer: W, scores: &[PerceptionScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fips", "period", "score", "n_reviews"])?;
    for s in scores {
        w.write_record([
            s.fips.clone(),
            s.period.to_string(),
            s.score.to_string(),
            s.n_reviews.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a scores CSV written by [`write_scores_csv`].
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<PerceptionScore>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["fips", "period", "score", "n_reviews"] {
        return Err(Error::format("scores", "expected header fips,period,score,n_reviews"));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: &str| Error::format("scores", format!("row {line}: {m}"));
        let score: f64 = record[2].parse().map_err(|_| err("bad score"))?;
        let n: usize = record[3].parse().map_err(|_| err("bad n_reviews"))?;
        out.push(PerceptionScore {
            fips: record[0].to_string(),
            period: record[1].parse()?,
            score,
            n_reviews: n,
            label_sum: (score * n as f64).round() as i64,
        });
    }
    Ok(out)
}

/// FeatureCollection of scored counties with score properties attached.
pub fn scores_geojson(scores: &[PerceptionScore], counties: &CountySet) -> Value {
    let features: Vec<Value> = scores
        .iter()
        .filter_map(|s| {
            counties.get(&s.fips).map(|c| {
                json!({
                    "type": "Feature",
                    "properties": {
                        "GEOID": s.fips,
                        "NAME": c.name,
                        "period": s.period,
                        "score": s.score,
                        "n_reviews": s.n_reviews,
                    },
                    "geometry": c.geometry_json(),
                })
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
