//! Run configuration: a `key = value` text file plus command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use healthscope_core::ingest::{canonical_periods, validate_periods, Period, PeriodName};
use healthscope_core::spatial::{Sidedness, WeightScheme};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Lexicon,
    Remote,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    CrossValidated,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    pub reviews: Option<PathBuf>,
    pub counties: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub fips_property: String,
    pub name_property: String,
    pub state_property: String,
    pub periods: Vec<Period>,
    pub min_support: usize,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub remote_timeout_secs: u64,
    pub remote_batch: usize,
    pub weights: WeightScheme,
    /// Nearest-centroid neighbors given to contiguity isolates; 0 disables.
    pub isolate_fallback_k: usize,
    pub n_perm: usize,
    pub n_perm_moran: usize,
    pub n_components: Components,
    pub cv_folds: usize,
    pub max_components: usize,
    pub p_value_correction: bool,
    pub moran_sidedness: Sidedness,
    pub moran_analytical: bool,
    pub min_counties: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base_dir: PathBuf::from("."),
            reviews: None,
            counties: None,
            covariates: None,
            survey: None,
            labels: None,
            ontology: None,
            fips_property: "GEOID".into(),
            name_property: "NAME".into(),
            state_property: "STUSPS".into(),
            periods: canonical_periods(),
            min_support: 10,
            backend: BackendKind::Lexicon,
            endpoint: None,
            remote_timeout_secs: 30,
            remote_batch: 64,
            weights: WeightScheme::QueenContiguity,
            isolate_fallback_k: 5,
            n_perm: 1000,
            n_perm_moran: 999,
            n_components: Components::CrossValidated,
            cv_folds: 5,
            max_components: 10,
            p_value_correction: false,
            moran_sidedness: Sidedness::TwoSided,
            moran_analytical: false,
            min_counties: 30,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}` expects true or false, got `{value}`"))),
    }
}

fn parse_period(name: PeriodName, value: &str) -> Result<Period, CliError> {
    let bad = || CliError::Config(format!("period {name} expects `YYYY-MM-DD..YYYY-MM-DD`, got `{value}`"));
    let (a, b) = value.split_once("..").ok_or_else(bad)?;
    let start = NaiveDate::parse_from_str(a.trim(), "%Y-%m-%d").map_err(|_| bad())?;
    let end = NaiveDate::parse_from_str(b.trim(), "%Y-%m-%d").map_err(|_| bad())?;
    Period::new(name, start, end).map_err(|e| CliError::Config(e.to_string()))
}

fn weights_label(w: WeightScheme) -> String {
    match w {
        WeightScheme::QueenContiguity => "queen".into(),
        WeightScheme::RookContiguity => "rook".into(),
        WeightScheme::KNearestCentroid(k) => format!("knn:{k}"),
    }
}

impl RunConfig {
    /// Load a config file; relative paths in it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = RunConfig {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ..RunConfig::default()
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key = value`", path.display(), lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(cfg)
    }

    fn path(&self, value: &str) -> Option<PathBuf> {
        if value.is_empty() {
            None
        } else {
            Some(self.base_dir.join(value))
        }
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "reviews" => self.reviews = self.path(value),
            "counties" => self.counties = self.path(value),
            "covariates" => self.covariates = self.path(value),
            "survey" => self.survey = self.path(value),
            "labels" => self.labels = self.path(value),
            "ontology" => self.ontology = self.path(value),
            "out" => self.out = self.base_dir.join(value),
            "fips_property" => self.fips_property = value.into(),
            "name_property" => self.name_property = value.into(),
            "state_property" => self.state_property = value.into(),
            "period_pre" | "period_peak" | "period_post" => {
                let name = match key {
                    "period_pre" => PeriodName::PrePandemic,
                    "period_peak" => PeriodName::PeakPandemic,
                    _ => PeriodName::PostPeak,
                };
                let period = parse_period(name, value)?;
                for p in &mut self.periods {
                    if p.name == name {
                        *p = period;
                    }
                }
            }
            "min_support" => self.min_support = parse_num(key, value)?,
            "backend" => {
                self.backend = match value {
                    "lexicon" => BackendKind::Lexicon,
                    "remote" => BackendKind::Remote,
                    "file" => BackendKind::File,
                    _ => return Err(CliError::Config(format!("unknown backend `{value}`"))),
                }
            }
            "endpoint" => self.endpoint = (!value.is_empty()).then(|| value.to_string()),
            "remote_timeout_secs" => self.remote_timeout_secs = parse_num(key, value)?,
            "remote_batch" => self.remote_batch = parse_num(key, value)?,
            "weights" => {
                self.weights = match value {
                    "queen" => WeightScheme::QueenContiguity,
                    "rook" => WeightScheme::RookContiguity,
                    other => match other.strip_prefix("knn:") {
                        Some(k) => WeightScheme::KNearestCentroid(parse_num(key, k)?),
                        None => return Err(CliError::Config(format!("unknown weights scheme `{value}`"))),
                    },
                }
            }
            "isolate_fallback_k" => self.isolate_fallback_k = parse_num(key, value)?,
            "n_perm" => self.n_perm = parse_num(key, value)?,
            "n_perm_moran" => self.n_perm_moran = parse_num(key, value)?,
            "n_components" => {
                self.n_components = if value == "cv" {
                    Components::CrossValidated
                } else {
                    Components::Fixed(parse_num(key, value)?)
                }
            }
            "cv_folds" => self.cv_folds = parse_num(key, value)?,
            "max_components" => self.max_components = parse_num(key, value)?,
            "p_value_correction" => self.p_value_correction = parse_bool(key, value)?,
            "moran_sidedness" => {
                self.moran_sidedness = match value {
                    "two-sided" => Sidedness::TwoSided,
                    "greater" => Sidedness::Greater,
                    _ => return Err(CliError::Config(format!("unknown sidedness `{value}`"))),
                }
            }
            "moran_analytical" => self.moran_analytical = parse_bool(key, value)?,
            "min_counties" => self.min_counties = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Check value ranges that do not depend on which stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_perm < 100 {
            return Err(CliError::Config(format!("n_perm must be at least 100, got {}", self.n_perm)));
        }
        if self.n_perm_moran < 99 {
            return Err(CliError::Config(format!(
                "n_perm_moran must be at least 99, got {}",
                self.n_perm_moran
            )));
        }
        if self.min_support == 0 {
            return Err(CliError::Config("min_support must be at least 1".into()));
        }
        if matches!(self.n_components, Components::Fixed(0)) {
            return Err(CliError::Config("n_components must be at least 1".into()));
        }
        if self.backend == BackendKind::Remote && self.endpoint.is_none() {
            return Err(CliError::Config("backend = remote requires `endpoint`".into()));
        }
        if self.backend == BackendKind::File && self.labels.is_none() {
            return Err(CliError::Config("backend = file requires `labels`".into()));
        }
        validate_periods(&self.periods).map_err(|e| CliError::Config(e.to_string()))
    }

    /// A configured input path that must exist.
    pub fn require(&self, name: &str, path: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = path
            .clone()
            .ok_or_else(|| CliError::Config(format!("`{name}` path is not configured")))?;
        if !path.exists() {
            return Err(CliError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        Ok(path)
    }

    /// Every semantic field in textual form; the output directory is left
    /// out since it does not affect results.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut m = BTreeMap::new();
        m.insert("reviews", p(&self.reviews));
        m.insert("counties", p(&self.counties));
        m.insert("covariates", p(&self.covariates));
        m.insert("survey", p(&self.survey));
        m.insert("labels", p(&self.labels));
        m.insert("ontology", p(&self.ontology));
        m.insert("fips_property", self.fips_property.clone());
        m.insert("name_property", self.name_property.clone());
        m.insert("state_property", self.state_property.clone());
        for period in &self.periods {
            let key = match period.name {
                PeriodName::PrePandemic => "period_pre",
                PeriodName::PeakPandemic => "period_peak",
                PeriodName::PostPeak => "period_post",
            };
            m.insert(key, format!("{}..{}", period.start, period.end));
        }
        m.insert("min_support", self.min_support.to_string());
        m.insert(
            "backend",
            match self.backend {
                BackendKind::Lexicon => "lexicon",
                BackendKind::Remote => "remote",
                BackendKind::File => "file",
            }
            .into(),
        );
        m.insert("endpoint", self.endpoint.clone().unwrap_or_default());
        m.insert("remote_timeout_secs", self.remote_timeout_secs.to_string());
        m.insert("remote_batch", self.remote_batch.to_string());
        m.insert("weights", weights_label(self.weights));
        m.insert("isolate_fallback_k", self.isolate_fallback_k.to_string());
        m.insert("n_perm", self.n_perm.to_string());
        m.insert("n_perm_moran", self.n_perm_moran.to_string());
        m.insert(
            "n_components",
            match self.n_components {
                Components::CrossValidated => "cv".into(),
                Components::Fixed(k) => k.to_string(),
            },
        );
        m.insert("cv_folds", self.cv_folds.to_string());
        m.insert("max_components", self.max_components.to_string());
        m.insert("p_value_correction", self.p_value_correction.to_string());
        m.insert(
            "moran_sidedness",
            match self.moran_sidedness {
                Sidedness::TwoSided => "two-sided",
                Sidedness::Greater => "greater",
            }
            .into(),
        );
        m.insert("moran_analytical", self.moran_analytical.to_string());
        m.insert("min_counties", self.min_counties.to_string());
        m.insert("seed", self.seed.to_string());
        m
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
