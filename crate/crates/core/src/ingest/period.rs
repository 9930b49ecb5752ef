use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeriodName {
    PrePandemic,
    PeakPandemic,
    PostPeak,
}

impl PeriodName {
    pub const ALL: [PeriodName; 3] = [
        PeriodName::PrePandemic,
        PeriodName::PeakPandemic,
        PeriodName::PostPeak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodName::PrePandemic => "PrePandemic",
            PeriodName::PeakPandemic => "PeakPandemic",
            PeriodName::PostPeak => "PostPeak",
        }
    }
}

impl fmt::Display for PeriodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PeriodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PeriodName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::format("period", format!("unknown period `{s}`")))
    }
}

/// A named, inclusive range of UTC calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub name: PeriodName,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn new(name: PeriodName, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::contract(format!(
                "period {name} starts {start} after it ends {end}"
            )));
        }
        Ok(Self { name, start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    fn overlaps(&self, other: &Period) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Pre-pandemic, peak-pandemic and post-peak periods.
pub fn canonical_periods() -> Vec<Period> {
    vec![
        Period {
            name: PeriodName::PrePandemic,
            start: ymd(2018, 1, 1),
            end: ymd(2020, 1, 31),
        },
        Period {
            name: PeriodName::PeakPandemic,
            start: ymd(2020, 2, 1),
            end: ymd(2020, 5, 31),
        },
        Period {
            name: PeriodName::PostPeak,
            start: ymd(2020, 6, 1),
            end: ymd(2021, 5, 31),
        },
    ]
}

/// Reject period lists with overlapping ranges or repeated names.
pub fn validate_periods(periods: &[Period]) -> Result<()> {
    for (i, a) in periods.iter().enumerate() {
        for b in &periods[i + 1..] {
            if a.name == b.name {
                return Err(Error::contract(format!("period {} defined twice", a.name)));
            }
            if a.overlaps(b) {
                return Err(Error::contract(format!(
                    "periods {} and {} overlap",
                    a.name, b.name
                )));
            }
        }
    }
    Ok(())
}

/// UTC calendar date of an epoch-millisecond timestamp.
pub fn utc_date(timestamp_ms: i64) -> Option<NaiveDate> {
    DateTime::from_timestamp_millis(timestamp_ms).map(|dt| dt.date_naive())
}

pub fn period_of(timestamp_ms: i64, periods: &[Period]) -> Option<PeriodName> {
    let date = utc_date(timestamp_ms)?;
    periods.iter().find(|p| p.contains(date)).map(|p| p.name)
}

/// Calendar month, ordered chronologically; written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::format("month", format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of_timestamp(timestamp_ms: i64) -> Option<Self> {
        utc_date(timestamp_ms).map(|d| Self {
            year: d.year(),
            month: d.month(),
        })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("month", format!("`{s}` is not YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 || !y.chars().chain(m.chars()).all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
