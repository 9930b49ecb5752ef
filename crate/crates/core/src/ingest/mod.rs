//! Parsing and normalization of the external inputs: the review corpus,
//! county geometries, the survey series and the covariate table, plus the
//! assignment of each review to a county and a period.

mod geo;
mod period;
mod reviews;
mod tables;

pub use geo::{
    locate_county, parse_counties, BBox, County, CountyParseOptions, CountySet, LonLat, Polygon,
};
pub use period::{
    canonical_periods, period_of, utc_date, validate_periods, Period, PeriodName, YearMonth,
};
pub use reviews::{
    dedup_reviews, parse_reviews, write_jsonl, ParseStats, ParsedReviews, Review, SkipReason,
};
pub use tables::{parse_covariates, parse_survey, CovariateTable, SurveyEntry, SurveySeries};

/// Period containing the review's UTC calendar date, if any.
pub fn assign_period(review: &Review, periods: &[Period]) -> Option<PeriodName> {
    period_of(review.timestamp, periods)
}
