//! Perception of health resource availability from geotagged reviews.
//!
//! The pipeline ingests a review corpus, keeps reviews that mention health
//! resources, labels them as reporting a shortage or not, averages the labels
//! into county-period scores, and analyzes those scores spatially (Moran's I),
//! against socioeconomic covariates (SIMPLS with permutation inference) and
//! against an external survey.

pub mod classify;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod ontology;
pub mod pls;
pub mod rng;
pub mod score;
pub mod spatial;
pub mod stats;

pub use error::{Error, Result};
