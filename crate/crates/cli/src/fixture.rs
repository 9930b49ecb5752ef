//! Synthetic input corpus: a grid of square counties in four states,
//! covariates with planted drivers, reviews whose wording encodes a known
//! label, gold labels, and a survey series tied to the review labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use healthscope_core::classify::Label;
use healthscope_core::ingest::{canonical_periods, PeriodName, Review, YearMonth};
use healthscope_core::ontology::default_ontology;
use healthscope_core::rng;

use crate::error::CliError;

pub const COVARIATES: [&str; 21] = [
    "Democratic Rate",
    "Republican Rate",
    "Total Population",
    "Median Income",
    "GINI",
    "No Insurance Rate",
    "Household Below Poverty Rate",
    "HISPANIC LATINO Rate",
    "White Rate",
    "Black Rate",
    "Indian Rate",
    "Asian Rate",
    "Under 18 Rate",
    "Between 18 and 44 Rate",
    "Between 45 and 64 Rate",
    "Over 65 Rate",
    "Male Rate",
    "Bachelor Rate",
    "Education Degree Rate",
    "Population Density",
    "Unemployed Rate",
];

const STATES: [(&str, &str); 4] = [("01", "AL"), ("13", "GA"), ("28", "MS"), ("47", "TN")];
const GRID_COLS: usize = 8;
const GRID_ROWS: usize = 6;
const CELL_DEG: f64 = 0.5;
const ORIGIN: [f64; 2] = [-90.0, 33.0];

const SHORTAGE_TEMPLATES: &[&str] = &[
    "Went looking for {} but the shelves were empty.",
    "They ran out of {} again this week.",
    "Sold out of {} everywhere, such a shortage.",
    "No {} anywhere in the store today.",
];

const AVAILABLE_TEMPLATES: &[&str] = &[
    "Plenty of {} in stock today.",
    "They had {} available near the pharmacy counter.",
    "Shelves fully stocked with {}, easy trip.",
    "Was able to buy {} without trouble.",
];

const UNRELATED_TEMPLATES: &[&str] = &[
    "The {} aisle is right next to the checkout.",
    "Staff reminded everyone about the {} policy at the entrance.",
];

const OFF_TOPIC: &[&str] = &[
    "Great coffee and friendly staff.",
    "Parking was easy and the cashier was quick.",
    "Clean store, long lines on weekends.",
    "Prices went up but service is still good.",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSummary {
    pub counties: usize,
    pub reviews: usize,
    pub survey_rows: usize,
}

struct GridCounty {
    fips: String,
    state: &'static str,
    name: String,
    x0: f64,
    y0: f64,
}

fn grid() -> Vec<GridCounty> {
    let mut out = Vec::new();
    let mut per_state: BTreeMap<&str, usize> = BTreeMap::new();
    for col in 0..GRID_COLS {
        for row in 0..GRID_ROWS {
            let (code, abbr) = STATES[col / 2];
            let k = per_state.entry(code).or_default();
            out.push(GridCounty {
                fips: format!("{code}{:03}", 2 * *k + 1),
                state: abbr,
                name: format!("Grid {row}-{col}"),
                x0: ORIGIN[0] + col as f64 * CELL_DEG,
                y0: ORIGIN[1] + row as f64 * CELL_DEG,
            });
            *k += 1;
        }
    }
    // a detached county that has no contiguity neighbors
    let k = per_state.entry("47").or_default();
    out.push(GridCounty {
        fips: format!("47{:03}", 2 * *k + 1),
        state: "TN",
        name: "Island".into(),
        x0: -84.0,
        y0: 38.0,
    });
    out
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter().map(|x| (x - m) / sd).collect()
}

fn day_ms(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp_millis()
}

fn write(dir: &Path, name: &str, contents: String) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

/// Write the fixture files into `dir`. Identical seeds give identical files.
pub fn generate(dir: &Path, seed: u64) -> Result<FixtureSummary, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut rng = rng::stream(seed, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let counties = grid();
    let n = counties.len();

    let features: Vec<_> = counties
        .iter()
        .map(|c| {
            let (x1, y1) = (c.x0 + CELL_DEG, c.y0 + CELL_DEG);
            json!({
                "type": "Feature",
                "properties": {"GEOID": c.fips, "NAME": c.name, "STUSPS": c.state},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[c.x0, c.y0], [x1, c.y0], [x1, y1], [c.x0, y1], [c.x0, c.y0]]],
                },
            })
        })
        .collect();
    let geojson = json!({"type": "FeatureCollection", "features": features});
    write(dir, "counties.geojson", serde_json::to_string(&geojson).expect("json") + "\n")?;

    // covariates, with spatial structure in the racial composition
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(n);
    for c in &counties {
        let mut z = || std_normal.sample(&mut rng);
        let south = (ORIGIN[1] + GRID_ROWS as f64 * CELL_DEG - c.y0) / (GRID_ROWS as f64 * CELL_DEG);
        let u_inc = z();
        let u_race = 0.8 * (south - 0.5) + 0.6 * z();
        let u_pol = z();
        let dem = (0.42 + 0.08 * u_pol - 0.03 * u_race).clamp(0.1, 0.8);
        let rep = (0.97 - dem - 0.04 * z().abs()).clamp(0.1, 0.85);
        let pop = (10.5 + 0.9 * z()).exp().round();
        let income = 52_000.0 + 9_000.0 * u_inc + 2_000.0 * z();
        let gini = 0.45 + 0.025 * z();
        let no_ins = (0.10 + 0.025 * z() - 0.01 * u_inc).max(0.01);
        let poverty = (0.15 - 0.035 * u_inc + 0.01 * z()).max(0.02);
        let hispanic = 0.02 + 0.05 * z().abs();
        let black = (0.25 + 0.12 * u_race).clamp(0.01, 0.7);
        let indian = 0.003 + 0.004 * z().abs();
        let asian = 0.005 + 0.01 * z().abs();
        let white = (1.0 - black - hispanic - indian - asian - 0.02 * z().abs()).max(0.05);
        let under18 = round6(0.22 + 0.015 * z());
        let age18_44 = round6(0.35 + 0.02 * z());
        let age45_64 = round6(0.26 + 0.015 * z());
        let over65 = round6(1.0 - under18 - age18_44 - age45_64);
        let male = 0.49 + 0.008 * z();
        let bachelor = (0.20 + 0.05 * u_inc + 0.02 * z()).max(0.03);
        let edu = (0.10 + 0.6 * (bachelor - 0.2) + 0.01 * z()).max(0.01);
        let area_km2 = 55.6 * 55.6 * CELL_DEG * CELL_DEG * c.y0.to_radians().cos() * (0.8 * z()).exp();
        let density = pop / area_km2;
        let unemployed = (0.05 + 0.012 * z() - 0.005 * u_inc).max(0.01);
        table.push(vec![
            dem, rep, pop, income, gini, no_ins, poverty, hispanic, white, black, indian, asian, under18,
            age18_44, age45_64, over65, male, bachelor, edu, density, unemployed,
        ]);
    }
    let mut cov = String::from("fips");
    for name in COVARIATES {
        cov.push(',');
        cov.push_str(name);
    }
    cov.push('\n');
    for (c, row) in counties.iter().zip(&table) {
        cov.push_str(&c.fips);
        for (j, v) in row.iter().enumerate() {
            let v = if j == 2 { *v } else { round6(*v) };
            cov.push_str(&format!(",{v}"));
        }
        cov.push('\n');
    }
    write(dir, "covariates.csv", cov)?;

    // planted drivers: education raises the chance of an availability
    // report, the Black share lowers it
    let z_bach = standardize(&table.iter().map(|r| r[17]).collect::<Vec<_>>());
    let z_black = standardize(&table.iter().map(|r| r[9]).collect::<Vec<_>>());
    let base = [
        (PeriodName::PrePandemic, 1.0),
        (PeriodName::PeakPandemic, -0.8),
        (PeriodName::PostPeak, 0.3),
    ];

    let keywords: Vec<String> = default_ontology()
        .categories()
        .values()
        .flat_map(|v| v.iter().cloned())
        .collect();
    let periods = canonical_periods();
    let mut reviews: Vec<Review> = Vec::new();
    let mut gold: Vec<(String, Label)> = Vec::new();
    let mut state_month: BTreeMap<(&str, YearMonth), (i64, usize)> = BTreeMap::new();
    let mut next_id = 0usize;

    for (ci, c) in counties.iter().enumerate() {
        for (period_name, intercept) in base {
            let period = periods.iter().find(|p| p.name == period_name).expect("canonical period");
            let days = (period.end - period.start).num_days() + 1;
            let logit = intercept + 0.9 * z_bach[ci] - 0.9 * z_black[ci] + 0.2 * std_normal.sample(&mut rng);
            let p_available = 1.0 / (1.0 + (-logit).exp());
            let n_polar = rng.random_range(24..36);
            let n_unrelated = rng.random_range(3..7);
            let n_off = rng.random_range(3..7);
            for k in 0..n_polar + n_unrelated + n_off {
                let (label, text) = if k < n_polar {
                    let kw = keywords.choose(&mut rng).expect("keywords");
                    if rng.random_bool(p_available) {
                        (Label::NoShortage, AVAILABLE_TEMPLATES.choose(&mut rng).expect("t").replace("{}", kw))
                    } else {
                        (Label::Shortage, SHORTAGE_TEMPLATES.choose(&mut rng).expect("t").replace("{}", kw))
                    }
                } else if k < n_polar + n_unrelated {
                    let kw = keywords.choose(&mut rng).expect("keywords");
                    (Label::Unrelated, UNRELATED_TEMPLATES.choose(&mut rng).expect("t").replace("{}", kw))
                } else {
                    (Label::Unrelated, OFF_TOPIC.choose(&mut rng).expect("t").to_string())
                };
                let day = period.start + chrono::Duration::days(rng.random_range(0..days));
                let timestamp = day_ms(day) + rng.random_range(0..86_400_000);
                let review_id = format!("r{next_id:06}");
                next_id += 1;
                if let Some(v) = label.polarity() {
                    let month = YearMonth::new(day.year(), day.month()).expect("valid month");
                    let e = state_month.entry((c.state, month)).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
                gold.push((review_id.clone(), label));
                reviews.push(Review {
                    review_id,
                    business_id: format!("b{}{:02}", c.fips, rng.random_range(0..25)),
                    text,
                    timestamp,
                    latitude: round6(c.y0 + 0.01 + rng.random::<f64>() * (CELL_DEG - 0.02)),
                    longitude: round6(c.x0 + 0.01 + rng.random::<f64>() * (CELL_DEG - 0.02)),
                    rating: (!rng.random_bool(0.1)).then(|| rng.random_range(1..=5)),
                });
            }
        }
    }

    let mut lines: Vec<String> = reviews
        .iter()
        .map(|r| serde_json::to_string(r).expect("review serializes"))
        .collect();
    // records that ingestion must drop, one kind at a time
    let mut extra = |value: serde_json::Value, label: Label| {
        let id = format!("r{next_id:06}");
        next_id += 1;
        let mut v = value;
        v["review_id"] = json!(id);
        gold.push((id, label));
        lines.push(v.to_string());
    };
    for r in reviews.iter().take(4) {
        // duplicate content under a fresh id
        extra(serde_json::to_value(r).expect("json"), Label::Unrelated);
    }
    let ts = day_ms(NaiveDate::from_ymd_opt(2019, 3, 3).expect("date"));
    for i in 0..3 {
        let ts = ts + 10 * i;
        extra(json!({"business_id": "b0", "text": "no masks left", "timestamp": ts}), Label::Shortage);
        extra(
            json!({"business_id": "b0", "text": "no masks left", "timestamp": ts + 1, "latitude": 0.0, "longitude": 0.0}),
            Label::Shortage,
        );
        extra(
            json!({"business_id": "b0", "text": "plenty of wipes", "timestamp": ts + 2, "latitude": 40.0, "longitude": -100.0}),
            Label::NoShortage,
        );
        extra(
            json!({"business_id": "b0", "text": "plenty of wipes", "timestamp": day_ms(NaiveDate::from_ymd_opt(2017, 6, 1).expect("date")) + i, "latitude": 33.25, "longitude": -89.75}),
            Label::NoShortage,
        );
    }
    for _ in 0..3 {
        lines.push("{\"review_id\": \"broken".into());
    }
    write(dir, "reviews.jsonl", lines.join("\n") + "\n")?;

    let mut labels = String::from("review_id,label\n");
    for (id, label) in &gold {
        labels.push_str(&format!("{id},{label}\n"));
    }
    write(dir, "labels.csv", labels)?;

    // survey delayed-care ratios fall as perceived availability rises
    let mut survey = String::from("state,month,delayed_ratio\n");
    let mut survey_rows = 0;
    let first = YearMonth::new(2020, 4).expect("month");
    let last = YearMonth::new(2021, 4).expect("month");
    for ((state, month), (sum, count)) in &state_month {
        if *month < first || *month > last {
            continue;
        }
        let mean = *sum as f64 / *count as f64;
        let ratio = (0.30 - 0.10 * mean + 0.01 * std_normal.sample(&mut rng)).clamp(0.0, 1.0);
        survey.push_str(&format!("{state},{month},{:.4}\n", ratio));
        survey_rows += 1;
    }
    write(dir, "survey.csv", survey)?;

    write(
        dir,
        "fixture.conf",
        [
            "# Synthetic fixture corpus. Regenerate with `healthscope make-fixture`.",
            "reviews = reviews.jsonl",
            "counties = counties.geojson",
            "covariates = covariates.csv",
            "survey = survey.csv",
            "labels = labels.csv",
            "backend = lexicon",
            "seed = 0",
            "out = out",
            "",
        ]
        .join("\n"),
    )?;

    Ok(FixtureSummary {
        counties: n,
        reviews: lines.len(),
        survey_rows,
    })
}
